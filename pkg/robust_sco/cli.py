import json
import sys
from pathlib import Path
from typing import Optional

import click
import typer

try:  # typer>=0.26 vendors its own copy of click and raises its exception classes
    from typer._click import exceptions as _typer_click_exceptions
    _CLICK_EXCEPTIONS = (click.ClickException, _typer_click_exceptions.ClickException)
    _ABORT_EXCEPTIONS = (click.Abort, _typer_click_exceptions.Abort)
except ImportError:
    _CLICK_EXCEPTIONS = (click.ClickException,)
    _ABORT_EXCEPTIONS = (click.Abort,)

from .analysis.scaling import fit_scaling
from .log import configure_logging
from .tools.bench import load_experiment_spec, read_records_csv, run_experiment

FIT_SCHEMA_VERSION = "scaling-fit-1"
EXIT_ERROR = 2

app = typer.Typer(help="Robust stochastic convex optimization benchmarks", add_completion=False)


def _error_line(e: Exception) -> None:
    message = e.format_message() if isinstance(e, _CLICK_EXCEPTIONS) else str(e)
    err = {"status": "error", "error_type": type(e).__name__, "error": message}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)


def _fail(e: Exception) -> None:
    _error_line(e)
    raise typer.Exit(EXIT_ERROR)


def envelope(payload: dict) -> dict:
    return {"schema_version": FIT_SCHEMA_VERSION, "status": "ok", "payload": payload}


@app.command()
def run(
    config: Path = typer.Option(..., "--config", help="TOML experiment config"),
    out: Path = typer.Option(..., "--out", help="CSV file for the trial records"),
    timings: bool = typer.Option(False, "--timings", help="add a wall_clock_s column"),
    trace_dir: Optional[Path] = typer.Option(None, "--trace-dir", help="write per-trial PGD and filter traces here"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="per-iteration debug logging"),
):
    """Run every (cell, trial) of an experiment and write the records."""
    configure_logging(verbose)
    try:
        spec = load_experiment_spec(config)
        records = run_experiment(spec, out=out, include_timing=timings, trace_dir=trace_dir)
    except (ValueError, OSError) as e:
        _fail(e)
    print(json.dumps({"status": "ok", "experiment": spec.name, "rows": len(records), "out": str(out)},
                     sort_keys=True))


@app.command()
def fit(
    records: Path = typer.Option(..., "--in", help="CSV written by `run`"),
    axis: str = typer.Option(..., "--axis", help="epsilon or n"),
    experiment: Optional[str] = typer.Option(None, "--experiment", help="restrict to one experiment name"),
):
    """Fit mean excess risk ~ prefactor * axis ** exponent."""
    try:
        df = read_records_csv(records)
        if experiment is not None:
            df = df[df["experiment"] == experiment]
        result = fit_scaling(df, axis)
    except (ValueError, OSError) as e:
        _fail(e)
    payload = result.to_dict()
    payload["source"] = str(records)
    print(json.dumps(envelope(payload), indent=2, sort_keys=True))


def main() -> int:
    # standalone_mode=False hands usage errors back so they get the JSON error line too
    try:
        code = app(standalone_mode=False)
    except _CLICK_EXCEPTIONS as e:
        _error_line(e)
        return EXIT_ERROR
    except _ABORT_EXCEPTIONS:
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
