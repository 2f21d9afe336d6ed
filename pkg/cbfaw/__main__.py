"""
This module provides the command-line interface of cbfaw.
It runs scenario simulations, closed-loop analysis, LQR synthesis, parameter
sweeps and the acceptance suite, writing CSV and key=value artifacts.

Exit codes: 0 success, 1 invalid input, 2 numerical or runtime failure,
3 verification failure.
"""

import os
import sys
from typing import Any, Callable, Dict, Optional

import click
import numpy as np

from cbfaw import constants
from cbfaw.analysis import (
    alpha_time_constant,
    loop_gain_response,
    saturated_mode_matrix,
    spectrum_identity,
    step_response,
)
from cbfaw.errors import CbfawError, ValidationError, VerificationError
from cbfaw.linalg import eigenvalues
from cbfaw.load import build_problem, parse_config, parse_value
from cbfaw.printing import console, print_key_values, print_rows, setup_logging
from cbfaw.pure import RunSummary
from cbfaw.save import (
    emit_csv,
    write_frequency_response,
    write_margins,
    write_spectrum,
    write_step_response,
    write_summary,
    write_sweep,
)
from cbfaw.sim_engine import parameter_sweep, run_config
from cbfaw.verify import run_acceptance


def _guarded(body: Callable[[], None]) -> None:
    # Map failures onto the documented exit codes
    try:
        body()
    except VerificationError as e:
        console.print(f"[red bold]Verification failed: {e}[/red bold]")
        sys.exit(constants.EXIT_VERIFICATION)
    except ValidationError as e:
        console.print(f"[red bold]{e}[/red bold]")
        sys.exit(constants.EXIT_VALIDATION)
    except (CbfawError, OSError, FloatingPointError) as e:
        console.print(f"[red bold]{type(e).__name__}: {e}[/red bold]")
        sys.exit(constants.EXIT_RUNTIME)


def _overrides(dt: Optional[float], aw: Optional[str], limits: Optional[str]) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if dt is not None:
        overrides["sim.dt"] = dt
    if aw is not None:
        overrides["aw.enabled"] = aw == "on"
    if limits is not None:
        overrides["limits.enabled"] = limits == "on"
    return overrides


def _output_dir(out: Optional[str], configured: Optional[str] = None) -> str:
    if out is not None:
        return out
    if configured and configured != ".":
        return configured
    return os.getcwd()


def _summary_table(summary: RunSummary) -> None:
    print_key_values(console, f"Scenario {summary.scenario}", summary._asdict())


config_option = click.option(
    "-c",
    "--config",
    "config",
    type=click.Path(),
    required=True,
    help="Path to the scenario file.",
)
out_option = click.option(
    "-o",
    "--out",
    "out",
    type=click.Path(file_okay=False),
    help="Output directory for generated files. "
    "Defaults to output.directory of the scenario, else the current working directory.",
    required=False,
)
force_option = click.option(
    "-f",
    "--force",
    "force",
    is_flag=True,
    help="Force overwrite of output files if they already exist.",
    required=False,
)
dt_option = click.option("--dt", "dt", type=float, help="Override the integration step (s).")
aw_option = click.option(
    "--aw", "aw", type=click.Choice(["on", "off"]), help="Switch the anti-windup law on or off."
)
limits_option = click.option(
    "--limits", "limits", type=click.Choice(["on", "off"]), help="Switch the position limits on or off."
)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress messages.")
@click.option("--debug", is_flag=True, help="Log solver iterations and timings.")
@click.version_option(version=constants.VERSION, prog_name="cbfaw")
def main(verbose: bool, debug: bool) -> None:
    """
    Integrator anti-windup for position-limited servo-controllers using
    control barrier functions.

    Run a scenario with 'simulate', inspect the saturated closed loop and the
    loop gain with 'analyze', print the LQR servo gains with 'lqr', sweep one
    scenario parameter with 'sweep', and run the acceptance suite with 'verify'.
    """
    setup_logging("DEBUG" if debug else "INFO" if verbose else "WARNING")


@main.command()
@config_option
@out_option
@dt_option
@aw_option
@limits_option
@force_option
def simulate(
    config: str,
    out: Optional[str],
    dt: Optional[float],
    aw: Optional[str],
    limits: Optional[str],
    force: bool,
) -> None:
    """
    Simulate a scenario and write trace.csv and the key=value summary.
    """

    def body() -> None:
        result = run_config(config, _overrides(dt, aw, limits))
        output_dir = _output_dir(out, result.problem.output_directory)
        console.print(f"Scenario: [green bold]{result.name}[/green bold]")
        emit_csv(
            result.trace,
            os.path.join(output_dir, constants.TRACE_FILE),
            result.problem.extra_columns,
            force,
        )
        write_summary(result.summary, os.path.join(output_dir, constants.SUMMARY_FILE), force)
        _summary_table(result.summary)

    _guarded(body)


@main.command()
@config_option
@out_option
@force_option
@click.option(
    "--include-actuator",
    "include_actuator",
    is_flag=True,
    help="Append the second-order actuator to the loop gain and the step response.",
)
def analyze(config: str, out: Optional[str], force: bool, include_actuator: bool) -> None:
    """
    Write the saturated-mode spectrum, the loop-gain frequency response, the
    stability margins and the unlimited step response.
    """

    def body() -> None:
        problem = build_problem(parse_config(config))
        output_dir = _output_dir(out, problem.output_directory)
        actuator = problem.sim.actuator if include_actuator else None

        closed = saturated_mode_matrix(problem.plant, problem.gains, problem.params)
        match = spectrum_identity(closed, problem.plant, problem.params)
        expected = np.concatenate([
            np.full(problem.plant.m, -problem.params.alpha_cbf, dtype=complex),
            eigenvalues(problem.plant.A_p),
        ])
        response = loop_gain_response(problem.extended, problem.gains, actuator=actuator)
        step = step_response(problem.extended, problem.plant, problem.gains, actuator=actuator)

        write_spectrum(closed, expected, os.path.join(output_dir, constants.SPECTRUM_FILE), force)
        write_frequency_response(response, os.path.join(output_dir, constants.FREQUENCY_FILE), force)
        write_margins(response, os.path.join(output_dir, constants.MARGINS_FILE), force)
        write_step_response(step, os.path.join(output_dir, constants.STEP_FILE), force)

        print_rows(
            console,
            "Saturated-mode spectrum",
            ["eigenvalue"],
            [[complex(z)] for z in closed.spectrum],
        )
        print_key_values(
            console,
            "Analysis",
            {
                "spectrum_check": match.matched,
                "spectrum_deviation": match.max_deviation,
                "saturated_time_constant_s": alpha_time_constant(problem.params),
                "phase_margin_deg": "inf" if response.phase_margin is None else response.phase_margin,
                "gain_margin_db": "inf" if response.gain_margin is None else response.gain_margin,
                "crossover_rad_s": "none" if response.crossover is None else response.crossover,
                "step_final_value": step.final_value,
                "step_overshoot_pct": step.overshoot_pct,
            },
        )
        if not match.matched:
            raise VerificationError(
                f"saturated-mode spectrum deviates by {match.max_deviation:.3e}"
            )

    _guarded(body)


@main.command()
@config_option
def lqr(config: str) -> None:
    """
    Print the servo gains of a scenario, designed by LQR when weights are given.
    """

    def body() -> None:
        problem = build_problem(parse_config(config))
        gains = problem.gains
        source = "LQR" if problem.weights is not None else "explicit"
        rows = [
            (f"K_I[{i},{j}]", float(gains.K_I[i, j]))
            for i in range(gains.K_I.shape[0])
            for j in range(gains.K_I.shape[1])
        ] + [
            (f"K_P[{i},{j}]", float(gains.K_P[i, j]))
            for i in range(gains.K_P.shape[0])
            for j in range(gains.K_P.shape[1])
        ]
        print_rows(console, f"Servo gains ({source})", ["gain", "value"], rows)
        closed_loop = eigenvalues(problem.extended.A - problem.extended.B @ gains.K)
        print_rows(
            console, "Closed-loop eigenvalues", ["eigenvalue"], [[complex(z)] for z in closed_loop]
        )

    _guarded(body)


@main.command()
@config_option
@click.option("-p", "--param", "param", required=True, help="Dotted scenario key to vary, e.g. aw.alpha_cbf.")
@click.option(
    "--values",
    "values",
    required=True,
    help="Comma-separated values of the parameter, e.g. 1,4.4721,10.",
)
@out_option
@dt_option
@aw_option
@limits_option
@force_option
def sweep(
    config: str,
    param: str,
    values: str,
    out: Optional[str],
    dt: Optional[float],
    aw: Optional[str],
    limits: Optional[str],
    force: bool,
) -> None:
    """
    Run a scenario once per parameter value and write sweep.csv.
    """

    def body() -> None:
        try:
            parsed = [parse_value(v) for v in values.split(",")]
        except ValueError as e:
            raise ValidationError(f"--values: {e}") from e
        results = parameter_sweep(config, param, parsed, _overrides(dt, aw, limits))
        output_dir = _output_dir(out, results[0].problem.output_directory if results else None)
        summaries = [r.summary for r in results]
        write_sweep(param, parsed, summaries, os.path.join(output_dir, constants.SWEEP_FILE), force)
        print_rows(
            console,
            f"Sweep of {param}",
            [param, "peak |e_yI|", "peak |u_cmd|", "saturated s"],
            [
                [value, s.peak_abs_e_yI, s.peak_abs_u_cmd, s.saturated_time_s]
                for value, s in zip(parsed, summaries)
            ],
        )

    _guarded(body)


@main.command()
@click.option(
    "-c",
    "--config",
    "config",
    type=click.Path(),
    required=False,
    help="Scenario file to check on top of the bundled scenarios.",
)
@out_option
@force_option
def verify(config: Optional[str], out: Optional[str], force: bool) -> None:
    """
    Run the acceptance suite. Exits with code 3 if any check fails.
    """

    def body() -> None:
        results = run_acceptance(out, force, config)
        print_rows(
            console,
            "Acceptance",
            ["check", "result", "detail"],
            [
                [r.name, "info" if r.informational else r.passed, r.detail]
                for r in results
            ],
        )
        failed = [r.name for r in results if not r.passed and not r.informational]
        if failed:
            raise VerificationError(", ".join(failed))
        console.print("[bold green]All acceptance checks passed[/bold green]")

    _guarded(body)


if __name__ == "__main__":
    main()
