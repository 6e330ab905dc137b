#!/usr/bin/env python3
"""Pilot runs behind the frozen thresholds in aida.calibration.

Reruns the seeded pilots and prints the measured quantiles next to the
currently frozen values. Run from the repository root:

    python3 scripts/calibrate_gates.py [--datasets 200] [--ensembles 5]
"""

import argparse

import numpy as np

from aida import calibration
from aida.experiments import run_agent_experiment, run_separation_experiment


def separation_pilot(n_datasets: int, workers: int):
    report, tables = run_separation_experiment(seed=1234, n_datasets=n_datasets, workers=workers)
    corrs = np.array(
        [r["matched_correlation"] for r in tables["datasets"] if not r["failed"]]
    )
    print("separation pilot:")
    print(f"  datasets: {n_datasets}, failures: {report['metrics']['n_failed']}")
    for q in (5, 10, 20, 50):
        print(f"  correlation p{q}: {np.percentile(corrs, q):.3f}")
    print(
        f"  frozen baseline {calibration.SEPARATION_CORRELATION_BASELINE} -> "
        f"fraction above: {(corrs > calibration.SEPARATION_CORRELATION_BASELINE).mean():.3f} "
        f"(gate {calibration.SEPARATION_PASS_FRACTION})"
    )
    print(f"  mean trace non-increasing: {report['metrics']['mean_trace_non_increasing']}")


def ensemble_pilot(n_ensembles: int, workers: int):
    print("ensemble pilot:")
    rates, medians = [], []
    for seed in range(n_ensembles):
        report, _ = run_agent_experiment(seed=seed, workers=workers)
        rates.append(report["metrics"]["success_rate"])
        medians.append(report["metrics"]["first_success_median"])
        print(
            f"  seed {seed}: success {rates[-1]:.3f}, median first {medians[-1]}"
        )
    print(
        f"  min success {min(rates):.3f} (gate {calibration.ENSEMBLE_SUCCESS_GATE}), "
        f"max median {max(medians)} (gate {calibration.ENSEMBLE_MEDIAN_GATE})"
    )


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--datasets", type=int, default=200)
    parser.add_argument("--ensembles", type=int, default=5)
    parser.add_argument("--workers", type=int, default=8)
    parser.add_argument("--skip-ensemble", action="store_true")
    args = parser.parse_args()
    separation_pilot(args.datasets, args.workers)
    if not args.skip_ensemble:
        ensemble_pilot(args.ensembles, args.workers)
