"""Axis-aligned heat-map slices of field snapshot files."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .artifacts import MalformedArtifact, read_snapshot


def plot_slice(snapshot_path, axis: int, index: int, out_dir):
    """Render one 2-D slice; returns (figure, slice array, png path)."""
    data, meta = read_snapshot(snapshot_path)
    if meta["dim"] != 3:
        raise MalformedArtifact(f"{snapshot_path}: slices need 3-D snapshots")
    if axis not in (0, 1, 2):
        raise MalformedArtifact(f"axis must be 0, 1 or 2, got {axis}")
    n = data.shape[axis]
    if not 0 <= index < n:
        raise MalformedArtifact(f"slice index {index} outside [0, {n})")
    sl = np.take(data, index, axis=axis)

    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(sl.T, origin="lower", cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    kept = [a for a in "xyz" if a != "xyz"[axis]]
    ax.set_xlabel(kept[0])
    ax.set_ylabel(kept[1])
    ax.set_title(f"{meta['tag']}  ({'xyz'[axis]} index {index})")
    fig.tight_layout()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    png = out_dir / f"slice_{meta['tag']}_{'xyz'[axis]}{index}.png"
    fig.savefig(png, dpi=130)
    return fig, sl, png


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--snapshot", required=True)
    ap.add_argument("--axis", type=int, default=2)
    ap.add_argument("--index", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        _, _, png = plot_slice(args.snapshot, args.axis, args.index, args.out)
    except MalformedArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(png)
    return 0


if __name__ == "__main__":
    sys.exit(main())
