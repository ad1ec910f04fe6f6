"""Energy-decay plots from an evolve run: N(t) and the triple norm on a log
scale, with the emitted a-priori bound overlaid."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .artifacts import EVOLVE_COLUMNS, MalformedArtifact, RunArtifacts, read_series


def plot_decay(run_dir, out_dir):
    """Render decay curves; returns (figure, plotted-series dict, png path)."""
    art = RunArtifacts.discover(run_dir)
    if art.evolve_series is None:
        raise MalformedArtifact(f"{run_dir}: no evolve_series.csv")
    cols = read_series(art.evolve_series, EVOLVE_COLUMNS)
    t = cols["t"]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    ln_n, = ax1.semilogy(t, cols["N_total"], label="N(t)", color="tab:blue")
    ln_h, = ax1.semilogy(t, cols["H433"], label="triple norm", color="tab:orange")
    ax1.set_xlabel("t")
    ax1.set_title("energy functional and triple norm")
    ax1.legend()

    budget = cols["H433"] ** 2 + cols["dissipation_integral"]
    ln_b, = ax2.plot(t, budget, label="norm^2 + dissipation", color="tab:green")
    series = {"t": t, "N_total": cols["N_total"], "H433": cols["H433"],
              "budget": budget}
    fitted = art.energy_ledger.get("fitted_C")
    if fitted is not None and np.isfinite(fitted) and len(cols["H433"]):
        bound = fitted * cols["H433"][0] ** 2
        ax2.axhline(bound, linestyle="--", color="tab:red",
                    label=f"fitted bound C = {fitted:.3g}")
        series["bound"] = np.full_like(t, bound)
    ax2.set_xlabel("t")
    ax2.set_title("a-priori budget")
    ax2.legend()
    fig.tight_layout()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / "decay.png"
    fig.savefig(png, dpi=130)
    series["_lines"] = {"N_total": ln_n, "H433": ln_h, "budget": ln_b}
    return fig, series, png


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--run", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        _, _, png = plot_decay(args.run, args.out)
    except MalformedArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(png)
    return 0


if __name__ == "__main__":
    sys.exit(main())
