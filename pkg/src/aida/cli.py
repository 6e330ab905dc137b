"""Experiment harness and service launcher.

Every verification subcommand is deterministic under --seed, writes a JSON
report plus companion CSV tables next to it, and exits nonzero when its
acceptance gates fail (suppress with --no-gate).
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from .experiments import (
    run_agent_experiment,
    run_context_experiment,
    run_separation_experiment,
)


def _write_outputs(out: Path, report: dict, tables: dict[str, list[dict]]):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2))
    for name, rows in tables.items():
        if not rows:
            continue
        csv_path = out.with_suffix(f".{name}.csv")
        fields = list(rows[0].keys())
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, restval="")
            writer.writeheader()
            writer.writerows(rows)
    click.echo(f"report written to {out}")


def _finish(report: dict, no_gate: bool):
    for name, gate in report["gates"].items():
        status = "pass" if gate["passed"] else "FAIL"
        click.echo(f"gate {name}: {gate['value']} vs {gate['threshold']} -> {status}")
    if not report["passed"] and not no_gate:
        sys.exit(1)


@click.group()
def main():
    """Verification experiments and the interactive console service."""


@main.command("verify-context")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--frames", default=1000, show_default=True, type=int)
@click.option("--frame-len", default=100, show_default=True, type=int)
@click.option("--out", default="context-report.json", show_default=True, type=click.Path())
@click.option("--no-gate", is_flag=True, help="always exit 0")
def verify_context(seed, frames, frame_len, out, no_gate):
    """Context classification accuracy over a generated stream."""
    report, tables = run_context_experiment(seed, frames, frame_len)
    _write_outputs(Path(out), report, tables)
    _finish(report, no_gate)


@main.command("verify-separation")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--datasets", default=1000, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", default="separation-report.json", show_default=True, type=click.Path())
@click.option(
    "--diagnostics", is_flag=True,
    help="also dump per-dataset traces and marginal summaries as JSON lines",
)
@click.option("--no-gate", is_flag=True)
def verify_separation(seed, datasets, workers, out, diagnostics, no_gate):
    """Coupled source separation across generated datasets."""
    diag_path = Path(out).with_suffix(".diagnostics.jsonl") if diagnostics else None
    report, tables = run_separation_experiment(
        seed, datasets, workers, diagnostics_path=diag_path
    )
    _write_outputs(Path(out), report, tables)
    _finish(report, no_gate)


@main.command("verify-agent")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--agents", default=80, show_default=True, type=int)
@click.option("--trials", default=80, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--out", default="agent-report.json", show_default=True, type=click.Path())
@click.option("--no-gate", is_flag=True)
def verify_agent(seed, agents, trials, workers, out, no_gate):
    """Preference-learning ensemble against the simulated user."""
    report, tables = run_agent_experiment(seed, agents, trials, workers)
    _write_outputs(Path(out), report, tables)
    _finish(report, no_gate)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int, envvar="AIDA_PORT")
@click.option(
    "--data-dir",
    default="./aida-sessions",
    show_default=True,
    type=click.Path(),
    envvar="AIDA_DATA_DIR",
)
@click.option("--static-dir", default=None, type=click.Path(exists=True))
def serve(host, port, data_dir, static_dir):
    """Boot the console service; Ctrl-C shuts down and flushes logs."""
    import uvicorn

    from .api import ApiConfig, create_app

    config = ApiConfig(
        host=host,
        port=port,
        data_dir=Path(data_dir),
        static_dir=Path(static_dir) if static_dir else None,
    )
    app = create_app(config)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        click.echo(f"service failed to bind {host}:{port}: {exc}", err=True)
        sys.exit(2)
    finally:
        app.state.manager.close_all()


if __name__ == "__main__":
    main()
