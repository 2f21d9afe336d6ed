"""
Utility functions for loading scenario files and assembling the control problem
they describe.

This module provides functions to:
1. Parse a line-oriented scenario file (dotted `key = value` lines, YAML values),
   apply overrides and back-fill defaults.
2. Locate the bundled scenario fixtures.
3. Build the plant, gains, limits and simulation configuration from a parsed scenario.

Functions:
    parse_value(text)
    parse_config(path, overrides)
    scenario_path(name)
    resolve_scenario(source)
    build_problem(scenario)
"""

import contextlib
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import yaml

from cbfaw import constants
from cbfaw.aw_cbf import CbfParams, make_cbf_params
from cbfaw.errors import ConfigError, UnknownScenarioError, ValidationError
from cbfaw.lqr_synthesis import (
    LqrWeights,
    ServoGains,
    design_lqr_servo,
    make_gains,
    weights_from_diagonal,
)
from cbfaw.lti_core import (
    ExtendedSystem,
    PlantModel,
    PositionLimits,
    build_extended_system,
    check_augmentation_controllable,
    check_hurwitz,
    make_limits,
    make_plant,
)
from cbfaw.sim_engine import (
    EXTRA_COLUMN_GROUPS,
    SimConfig,
    make_actuator,
    make_signal,
    make_sim_config,
)

logger = logging.getLogger(__name__)

_KEY_PATTERN = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+$")
_DEG_SUFFIX = "_deg"

_BOOL_KEYS = ("limits.enabled", "aw.enabled", "sim.actuator.enabled")
_STRING_KEYS = ("scenario.name", "sim.command.kind", "sim.disturbance.kind", "output.directory")


@dataclass(frozen=True)
class ScenarioFile:
    """
    A parsed scenario: every known key with its value, defaults filled in.

    Values are plain Python scalars or nested tuples, all angles in radians.
    Two scenarios compare equal when their names and entries are equal; the
    source path and line numbers are kept for error messages only.
    """

    name: str
    entries: Tuple[Tuple[str, Any], ...]
    source: Optional[str] = field(default=None, compare=False)
    lines: Tuple[Tuple[str, int], ...] = field(default=(), compare=False)

    def get(self, key: str, default: Any = None) -> Any:
        for k, value in self.entries:
            if k == key:
                return value
        return default

    def as_dict(self) -> Dict[str, Any]:
        return dict(self.entries)

    def line_of(self, key: str) -> Optional[int]:
        return dict(self.lines).get(key)


class ScenarioProblem(NamedTuple):
    """
    Everything a scenario run needs, built from a ScenarioFile.
    """

    name: str
    plant: PlantModel
    extended: ExtendedSystem
    gains: ServoGains
    weights: Optional[LqrWeights]
    limits: PositionLimits
    params: CbfParams
    sim: SimConfig
    output_directory: str
    extra_columns: Tuple[str, ...]


def _freeze(value: Any) -> Any:
    # Nested lists become tuples, numbers become floats
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _finite(value: Any) -> bool:
    if isinstance(value, tuple):
        return all(_finite(v) for v in value)
    if isinstance(value, float):
        return math.isfinite(value)
    return True


def parse_value(text: str) -> Any:
    """
    Parse one value with yaml.safe_load and normalise it.

    Numbers become floats (including exponent forms that YAML leaves as strings),
    sequences become tuples, booleans and strings are kept.

    Exceptions:
        ValueError: If the text is empty or not valid YAML.
    """
    if text.strip() == "":
        raise ValueError("empty value")
    try:
        loaded = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ValueError(f"malformed value '{text.strip()}': {e}") from e
    if isinstance(loaded, dict):
        raise ValueError(f"mappings are not allowed as values: '{text.strip()}'")
    return _freeze(loaded)


def _string_value(text: str) -> str:
    # Names and paths are kept verbatim, so "123" stays a string
    value = text.strip()
    if not value:
        raise ValueError("empty value")
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        value = value[1:-1]
    return value


def _scale_degrees(value: Any) -> Any:
    if isinstance(value, tuple):
        return tuple(_scale_degrees(v) for v in value)
    if isinstance(value, float):
        return math.radians(value)
    raise ValueError("angles must be numbers")


def _canonical_key(key: str) -> Tuple[str, bool]:
    if key.endswith(_DEG_SUFFIX) and key[: -len(_DEG_SUFFIX)] in constants.ANGLE_KEYS:
        return key[: -len(_DEG_SUFFIX)], True
    return key, False


def _store(
    values: Dict[str, Any],
    lines: Dict[str, int],
    key: str,
    value: Any,
    path: str,
    line: Optional[int],
    replace: bool,
) -> None:
    canonical, in_degrees = _canonical_key(key)
    if canonical not in constants.KNOWN_KEYS:
        raise ConfigError(f"unknown key '{key}'", path, line)
    if not _finite(value):
        raise ConfigError(f"non-finite number in '{key}'", path, line)
    if in_degrees:
        try:
            value = _scale_degrees(value)
        except ValueError as e:
            raise ConfigError(f"'{key}': {e}", path, line) from e
    if canonical in values and not replace:
        previous = lines.get(canonical)
        raise ConfigError(
            f"'{canonical}' is given more than once (first on line {previous})", path, line
        )
    values[canonical] = value
    if line is not None:
        lines[canonical] = line


def _check_types(values: Dict[str, Any], lines: Dict[str, int], path: str) -> None:
    for key, value in values.items():
        line = lines.get(key)
        if key in _BOOL_KEYS:
            if not isinstance(value, bool):
                raise ConfigError(f"'{key}' must be true/false or on/off", path, line)
        elif key in _STRING_KEYS:
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"'{key}' must be a string", path, line)
        elif key == "output.columns":
            if value is not None and not (
                isinstance(value, tuple) and all(isinstance(v, str) for v in value)
            ):
                raise ConfigError(f"'{key}' must be a list of column groups", path, line)
        elif isinstance(value, str) or isinstance(value, bool):
            raise ConfigError(f"'{key}' must be numeric, got {value!r}", path, line)


def parse_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> ScenarioFile:
    """
    Read a scenario file, apply overrides and fill the defaults.

    Each non-blank line is `dotted.key = value`; text after `#` is a comment. Values
    use YAML flow syntax (numbers, true/false/on/off, strings, [[..], [..]] matrices).
    Keys in constants.ANGLE_KEYS may be written with a `_deg` suffix, in which case
    the value is converted to radians.

    Args:
        path (str): Path to the scenario file.
        overrides (Optional[Dict[str, Any]]): Dotted keys replacing file values.

    Preconditions:
        - path is a string.

    Side effects:
        None

    Exceptions:
        ConfigError: If the file is missing, a line is malformed, a key is unknown,
                     duplicated or given in both spellings, a number is not finite,
                     a required key is missing, or the gain specification is ambiguous.
                     The message names the file and line where one applies.

    Returns:
        ScenarioFile: The validated scenario.
        Guarantees: Every key of constants.KNOWN_KEYS that has a default is present.
    """
    assert isinstance(path, str), "path must be a string"
    if not Path(path).is_file():
        raise ConfigError("scenario file not found", path)

    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}

    with open(path, encoding="utf-8") as file:
        for number, raw in enumerate(file, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value_text = text.partition("=")
            key = key.strip()
            if not sep or not _KEY_PATTERN.match(key):
                raise ConfigError(f"expected 'section.key = value', got '{text}'", path, number)
            try:
                if _canonical_key(key)[0] in _STRING_KEYS:
                    value = _string_value(value_text)
                else:
                    value = parse_value(value_text)
            except ValueError as e:
                raise ConfigError(str(e), path, number) from e
            _store(values, lines, key, value, path, number, replace=False)

    for key, value in (overrides or {}).items():
        if not (key in _STRING_KEYS and isinstance(value, str)):
            value = _freeze(value)
        _store(values, lines, key, value, path, None, replace=True)
        lines.pop(_canonical_key(key)[0], None)

    for key in constants.REQUIRED_KEYS:
        if key not in values:
            block = key.split(".")[0]
            raise ConfigError(f"missing required key '{key}' in block '{block}'", path)

    explicit = [k for k in constants.EXPLICIT_GAIN_KEYS if k in values]
    weights = [k for k in constants.LQR_WEIGHT_KEYS if k in values]
    if explicit and weights:
        raise ConfigError(
            "give either explicit gains (gains.K_I, gains.K_P) or LQR weights "
            "(gains.Q_diag, gains.R), not both",
            path,
            lines.get(weights[0]),
        )
    if not explicit and not weights:
        raise ConfigError("missing block 'gains': give gains.K_I/gains.K_P or gains.Q_diag/gains.R", path)
    chosen = constants.EXPLICIT_GAIN_KEYS if explicit else constants.LQR_WEIGHT_KEYS
    for key in chosen:
        if key not in values:
            raise ConfigError(f"missing required key '{key}' in block 'gains'", path)

    # Update the loaded scenario with any default values that are missing
    for key, value in constants.DEFAULT_CONFIG.items():
        if key not in values:
            values[key] = value

    if values["scenario.name"] is None:
        values["scenario.name"] = Path(path).stem

    _check_types(values, lines, path)

    return ScenarioFile(
        name=values["scenario.name"],
        entries=tuple(sorted(values.items())),
        source=path,
        lines=tuple(sorted(lines.items())),
    )


def scenario_path(name: str) -> Path:
    """
    Path of a bundled scenario fixture.

    Exceptions:
        UnknownScenarioError: If name is not a bundled scenario.
    """
    if name not in constants.SCENARIO_NAMES:
        raise UnknownScenarioError(
            f"unknown scenario '{name}'; expected one of {', '.join(constants.SCENARIO_NAMES)}"
        )
    return constants.SCENARIO_DIR / f"{name}{constants.SCENARIO_SUFFIX}"


def resolve_scenario(source: str) -> Path:
    """
    Accept either a bundled scenario name or the path of a scenario file.
    """
    if source in constants.SCENARIO_NAMES:
        return scenario_path(source)
    if Path(source).is_file():
        return Path(source)
    raise UnknownScenarioError(
        f"'{source}' is neither a bundled scenario nor an existing file"
    )


@contextlib.contextmanager
def _anchored(scenario: ScenarioFile, key: str) -> Iterator[None]:
    # Re-raise validation failures against the line that set key
    try:
        yield
    except ConfigError:
        raise
    except ValidationError as e:
        raise ConfigError(f"'{key}': {e}", scenario.source, scenario.line_of(key)) from e


def build_problem(scenario: ScenarioFile) -> ScenarioProblem:
    """
    Assemble the plant, gains, limits and simulation configuration of a scenario.

    Gains come from the explicit matrices or, when LQR weights are given, from
    solve_care on the integral-augmented plant.

    Args:
        scenario (ScenarioFile): A parsed scenario.

    Preconditions:
        - scenario was produced by parse_config.

    Side effects:
        - Logs the gains at INFO level.

    Exceptions:
        ConfigError: If dimensions disagree, A_p is not Hurwitz, the plant has a
                     transmission zero at the origin, or a value is out of range.
        SynthesisError: If the LQR design fails.

    Returns:
        ScenarioProblem: Ready-to-run problem.
    """
    assert isinstance(scenario, ScenarioFile), "scenario must be a ScenarioFile"
    get = scenario.get

    with _anchored(scenario, "plant.A_p"):
        plant = make_plant(get("plant.A_p"), get("plant.B_p"), get("plant.C_p_reg"), get("plant.D_p_reg"))
    if not check_hurwitz(plant.A_p):
        raise ConfigError("A_p is not Hurwitz", scenario.source, scenario.line_of("plant.A_p"))
    if not check_augmentation_controllable(plant):
        raise ConfigError(
            "the plant has a transmission zero at the origin; integral augmentation is uncontrollable",
            scenario.source,
            scenario.line_of("plant.C_p_reg"),
        )
    extended = build_extended_system(plant)

    weights: Optional[LqrWeights] = None
    if get("gains.K_I") is not None:
        with _anchored(scenario, "gains.K_I"):
            gains = make_gains(get("gains.K_I"), get("gains.K_P"), plant.n_p, plant.m)
    else:
        with _anchored(scenario, "gains.Q_diag"):
            q_diag = np.asarray(get("gains.Q_diag"), dtype=float).ravel()
            if q_diag.size != extended.n:
                raise ValidationError(f"Q_diag must have {extended.n} entries, got {q_diag.size}")
            weights = weights_from_diagonal(q_diag, get("gains.R"))
        gains = design_lqr_servo(extended, weights)
    logger.info(
        "Gains K_I = %s, K_P = %s",
        np.array2string(gains.K_I, precision=5),
        np.array2string(gains.K_P, precision=5),
    )

    with _anchored(scenario, "limits.u_min"):
        limits = make_limits(get("limits.u_min"), get("limits.u_max"), plant.m)
    with _anchored(scenario, "aw.alpha_cbf"):
        params = make_cbf_params(get("aw.alpha_cbf"))

    with _anchored(scenario, "sim.actuator.natural_frequency"):
        actuator = make_actuator(
            get("sim.actuator.natural_frequency"),
            get("sim.actuator.damping_ratio"),
            get("sim.actuator.enabled"),
        )
    signals = []
    for prefix in ("sim.command", "sim.disturbance"):
        with _anchored(scenario, f"{prefix}.kind"):
            signals.append(
                make_signal(
                    get(f"{prefix}.kind"),
                    get(f"{prefix}.amplitude"),
                    get(f"{prefix}.t_start"),
                    get(f"{prefix}.t_half"),
                    get(f"{prefix}.t_end"),
                    get(f"{prefix}.frequency"),
                )
            )
    with _anchored(scenario, "sim.dt"):
        sim = make_sim_config(
            plant,
            get("sim.dt"),
            get("sim.duration"),
            get("aw.enabled"),
            get("limits.enabled"),
            actuator,
            signals[0],
            signals[1],
            get("sim.disturbance_column"),
            get("sim.initial_state"),
        )

    columns = get("output.columns") or ()
    unknown: List[str] = [c for c in columns if c not in EXTRA_COLUMN_GROUPS]
    if unknown:
        raise ConfigError(
            f"unknown column groups {unknown}; expected some of {', '.join(EXTRA_COLUMN_GROUPS)}",
            scenario.source,
            scenario.line_of("output.columns"),
        )

    return ScenarioProblem(
        scenario.name,
        plant,
        extended,
        gains,
        weights,
        limits,
        params,
        sim,
        get("output.directory"),
        tuple(columns),
    )
