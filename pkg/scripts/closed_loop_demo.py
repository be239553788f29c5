#!/usr/bin/env python3
"""Run the sampled-data closed loop on the bundled systems and verify the
decrease/boundedness/attractivity facts on the result.

Use --quick for short horizons (smoke test), default horizons reproduce the
convergence runs. Trajectories, reports and gnuplot scripts land in --out.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from sdstab.cli import (
    _report_to_json, load_system, write_plot_script, write_trajectory_csv,
)
from sdstab.simloop import Partition, run_closed_loop, verify_facts

RUNS = [
    ("dblint", [1.0, 0.0], 0.5, 50.0),
    ("rotation3", [1.0, 0.0, 0.0], 0.5, 100.0),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--systems-dir", default=Path(__file__).parents[1] / "systems")
    parser.add_argument("--out", default="loop_out")
    parser.add_argument("--quick", action="store_true", help="short horizons")
    args = parser.parse_args()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, x0, step, horizon in RUNS:
        if args.quick:
            horizon = min(horizon, 3.0)
        sysd = load_system(Path(args.systems_dir) / f"{name}.sys")
        traj, report = run_closed_loop(sysd, x0, Partition.uniform(step), horizon)
        norms = np.linalg.norm(traj.states, axis=1)
        print(f"{name}: |x0| = {norms[0]:.3f} -> |x(T)| = {report.final_norm:.2e} "
              f"at t = {traj.times[-1]:.2f} "
              f"({len(report.checkpoint_vs)} checkpoints, "
              f"overshoot {report.overshoot_ratio:.4f})")
        for check in verify_facts(traj, report):
            print(f"    {check.name}: {'pass' if check.passed else 'FAIL'}")
        if report.failure:
            print(f"    synthesis failure: {report.failure}")
        write_trajectory_csv(out_dir / f"{name}_trajectory.csv", traj, sysd.dim)
        write_plot_script(out_dir / f"{name}_plot.gp",
                          f"{name}_trajectory.csv", sysd.dim)
        (out_dir / f"{name}_report.json").write_text(
            json.dumps(_report_to_json(report), indent=2) + "\n")


if __name__ == "__main__":
    main()
