"""Contraction diagnostics from a stationary run: per-iteration update norm
and update ratio, with the guaranteed-factor reference line at 1/2."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .artifacts import MalformedArtifact, RunArtifacts, STATIONARY_COLUMNS, read_series


def plot_contraction(run_dir, out_dir):
    """Render the iteration trail; returns (figure, plotted-series dict, png)."""
    art = RunArtifacts.discover(run_dir)
    if art.stationary_series is None:
        raise MalformedArtifact(f"{run_dir}: no stationary_iterations.csv")
    cols = read_series(art.stationary_series, STATIONARY_COLUMNS)
    it = cols["iter"]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    ln_u, = ax1.semilogy(it, cols["lambda_update"], marker="o",
                         color="tab:blue", label="decay-norm update")
    ax1.set_xlabel("iteration")
    ax1.set_title("outer update")
    ax1.legend()

    mask = np.isfinite(cols["contraction_ratio"])
    ln_r, = ax2.plot(it[mask], cols["contraction_ratio"][mask], marker="s",
                     color="tab:orange", label="update ratio")
    ax2.axhline(0.5, linestyle="--", color="tab:red", label="factor 1/2")
    ax2.set_xlabel("iteration")
    ax2.set_title("contraction ratio")
    ax2.legend()
    fig.tight_layout()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / "contraction.png"
    fig.savefig(png, dpi=130)
    series = {"iter": it, "lambda_update": cols["lambda_update"],
              "contraction_ratio": cols["contraction_ratio"],
              "_lines": {"lambda_update": ln_u, "contraction_ratio": ln_r}}
    return fig, series, png


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--run", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        _, _, png = plot_contraction(args.run, args.out)
    except MalformedArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(png)
    return 0


if __name__ == "__main__":
    sys.exit(main())
