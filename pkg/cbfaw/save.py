"""
Utility functions for writing run artifacts to disk.

This module provides functions to:
1. Write simulation traces and tabular analysis results as CSV.
2. Write key=value summaries and stability margins.
3. Emit a canonical scenario file that parses back to an equal scenario.

Existing files are skipped with a warning unless force_overwrite is set.

Functions:
    emit_csv(trace, path, extra_groups, force_overwrite)
    write_summary(summary, path, force_overwrite)
    write_spectrum(closed, expected, path, force_overwrite)
    write_frequency_response(response, path, force_overwrite)
    write_margins(response, path, force_overwrite)
    write_step_response(response, path, force_overwrite)
    write_sweep(key, values, summaries, path, force_overwrite)
    format_config(scenario)
"""

import csv
import os
from typing import Any, List, Sequence

import numpy as np

from cbfaw import constants
from cbfaw.analysis import FrequencyResponse, SaturatedClosedLoop, StepResponse
from cbfaw.load import ScenarioFile
from cbfaw.printing import console
from cbfaw.pure import RunSummary, format_metrics
from cbfaw.sim_engine import SimTrace, trace_table


def _number(value: float) -> str:
    return f"{value:.{constants.CSV_PRECISION}g}"


def _ready(path: str, force_overwrite: bool) -> bool:
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)

    if not force_overwrite and os.path.exists(path):
        console.print(f"[bold yellow]{path} already exists. Skipping...[/bold yellow]")
        return False
    console.print(f"[bold green]Writing to {path}...[/bold green]")
    return True


def _write_rows(
    path: str, header: Sequence[str], rows: Sequence[Sequence[Any]], force_overwrite: bool
) -> bool:
    if not _ready(path, force_overwrite):
        return False
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_number(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )
    return True


def emit_csv(
    trace: SimTrace,
    path: str,
    extra_groups: Sequence[str] = (),
    force_overwrite: bool = False,
) -> bool:
    """
    Write a simulation trace as CSV, one row per sample.

    Args:
        trace (SimTrace): The trace to write.
        path (str): Output file.
        extra_groups (Sequence[str]): Optional column groups (xa, xadot, udot, delta1, delta2).
        force_overwrite (bool): Whether to replace an existing file.

    Preconditions:
        - The parent directory of path is writable.

    Side effects:
        - Creates the parent directory when missing.
        - Writes path unless it exists and force_overwrite is False.

    Exceptions:
        OSError: If the file cannot be written.

    Returns:
        bool: True if the file was written.
        Guarantees: Values are written with 17 significant digits, so identical traces
        give byte-identical files.
    """
    assert isinstance(trace, SimTrace), "trace must be a SimTrace"
    assert isinstance(force_overwrite, bool), "force_overwrite must be a bool"
    header, table = trace_table(trace, extra_groups)
    return _write_rows(path, header, [[float(v) for v in row] for row in table], force_overwrite)


def write_summary(summary: RunSummary, path: str, force_overwrite: bool = False) -> bool:
    """
    Write the run summary as key=value lines.
    """
    if not _ready(path, force_overwrite):
        return False
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(format_metrics(summary)) + "\n")
    return True


def write_spectrum(
    closed: SaturatedClosedLoop,
    expected: Sequence[complex],
    path: str,
    force_overwrite: bool = False,
) -> bool:
    """
    Write the saturated-mode eigenvalues beside the expected ones, both sorted by
    (real, imag).
    """
    actual = sorted((complex(z) for z in closed.spectrum), key=lambda z: (z.real, z.imag))
    reference = sorted((complex(z) for z in expected), key=lambda z: (z.real, z.imag))
    rows = [
        [float(a.real), float(a.imag), float(b.real), float(b.imag)]
        for a, b in zip(actual, reference)
    ]
    return _write_rows(
        path, ["real", "imag", "expected_real", "expected_imag"], rows, force_overwrite
    )


def write_frequency_response(
    response: FrequencyResponse, path: str, force_overwrite: bool = False
) -> bool:
    """
    Write the loop gain of the analysed channel: frequency, real and imaginary
    parts, magnitude (dB) and unwrapped phase (deg).
    """
    rows = []
    for w, mag_db, phase in zip(response.frequencies, response.magnitude_db, response.phase_deg):
        value = 10.0 ** (mag_db / 20.0) * np.exp(1j * np.radians(phase))
        rows.append([float(w), float(value.real), float(value.imag), float(mag_db), float(phase)])
    return _write_rows(
        path, ["omega", "re_L", "im_L", "magnitude_db", "phase_deg"], rows, force_overwrite
    )


def _optional(value: Any) -> str:
    return "inf" if value is None else repr(float(value))


def write_margins(response: FrequencyResponse, path: str, force_overwrite: bool = False) -> bool:
    """
    Write the margins as key=value lines followed by every crossing.
    An absent crossing is written as an infinite margin.
    """
    if not _ready(path, force_overwrite):
        return False
    lines: List[str] = [
        f"gain_margin_db={_optional(response.gain_margin)}",
        f"phase_margin_deg={_optional(response.phase_margin)}",
        f"crossover_rad_s={'none' if response.crossover is None else repr(response.crossover)}",
        f"phase_crossover_rad_s={'none' if response.phase_crossover is None else repr(response.phase_crossover)}",
    ]
    for c in response.gain_crossings:
        flag = " worst" if c.worst else ""
        lines.append(f"gain_crossing={c.frequency!r} phase_margin_deg={c.margin!r}{flag}")
    for c in response.phase_crossings:
        flag = " worst" if c.worst else ""
        lines.append(f"phase_crossing={c.frequency!r} gain_margin_db={c.margin!r}{flag}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return True


def write_step_response(response: StepResponse, path: str, force_overwrite: bool = False) -> bool:
    header = ["t"] + [f"y_reg_{i}" for i in range(response.output.shape[1])]
    rows = [[float(t)] + [float(y) for y in row] for t, row in zip(response.times, response.output)]
    return _write_rows(path, header, rows, force_overwrite)


def write_sweep(
    key: str,
    values: Sequence[Any],
    summaries: Sequence[RunSummary],
    path: str,
    force_overwrite: bool = False,
) -> bool:
    """
    Write one row per swept value with the summary metrics of its run.
    """
    assert len(values) == len(summaries), "one summary per swept value"
    metric_names = [name for name in RunSummary._fields if name != "scenario"]
    rows = []
    for value, summary in zip(values, summaries):
        row: List[Any] = [value]
        for name in metric_names:
            metric = getattr(summary, name)
            row.append(("pass" if metric else "fail") if isinstance(metric, bool) else float(metric))
        rows.append(row)
    return _write_rows(path, [key] + metric_names, rows, force_overwrite)


def _format_value(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    text = str(value)
    assert '"' not in text and "\\" not in text, "strings may not contain quotes or backslashes"
    return f'"{text}"'


def format_config(scenario: ScenarioFile) -> str:
    """
    Canonical scenario text: every key once, sorted, angles in radians and floats
    written with repr so that parse_config gives back an equal ScenarioFile.
    """
    lines = [f"# Canonical form of scenario {scenario.name}"]
    for key, value in scenario.entries:
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"
