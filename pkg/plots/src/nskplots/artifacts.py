"""Run-artifact discovery and validation.

The plots consume solver outputs purely through their on-disk formats:
CSV time series with fixed column contracts, JSON reports, and field
snapshots ("NSKFLD01" 64-byte header + little-endian float64 samples in
x-fastest order).  Nothing here recomputes physics.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"NSKFLD01"
_HEADER = struct.Struct("<8sB3x3I3d16s")

EVOLVE_COLUMNS = [
    "t", "H433", "Linf", "N_total", "N_bracket0", "N_bracket1", "N_bracket2",
    "N_bracket3", "N_cross0", "N_cross1", "N_cross2", "N_cross3",
    "dissipation_integral",
]
STATIONARY_COLUMNS = [
    "iter", "lambda_update", "contraction_ratio", "residual_mass",
    "residual_momentum", "residual_energy",
]


class MalformedArtifact(Exception):
    """A run artifact failed format validation."""


def read_series(path, expected_columns) -> dict:
    """Strict CSV reader: validates the header, returns float columns."""
    path = Path(path)
    if not path.exists():
        raise MalformedArtifact(f"missing series file {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != expected_columns:
        raise MalformedArtifact(
            f"{path}: header {rows[0] if rows else '<empty>'} does not match "
            f"the column contract {expected_columns}")
    if len(rows) < 2:
        raise MalformedArtifact(f"{path}: empty time series")
    cols = {name: [] for name in expected_columns}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(expected_columns):
            raise MalformedArtifact(f"{path}:{lineno}: ragged row")
        for name, tok in zip(expected_columns, row):
            try:
                cols[name].append(float(tok))
            except ValueError as exc:
                raise MalformedArtifact(f"{path}:{lineno}: bad number {tok!r}") from exc
    return {name: np.asarray(vals) for name, vals in cols.items()}


def read_snapshot(path):
    """Returns (data, meta) for one field snapshot file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedArtifact(f"{path}: shorter than the 64-byte header")
    magic, dim, n0, n1, n2, l0, l1, l2, tag = _HEADER.unpack(raw[:_HEADER.size])
    if magic != MAGIC:
        raise MalformedArtifact(f"{path}: bad magic {magic!r}")
    ns = (n0, n1, n2)[:dim]
    payload = np.frombuffer(raw[_HEADER.size:], dtype="<f8")
    if payload.size != int(np.prod(ns)):
        raise MalformedArtifact(f"{path}: sample count mismatch")
    meta = {"dim": dim, "n": ns, "length": (l0, l1, l2)[:dim],
            "tag": tag.rstrip(b"\x00").decode()}
    return payload.reshape(ns, order="F"), meta


@dataclass
class RunArtifacts:
    """Paths and parsed metadata for one run directory."""

    run_dir: Path
    manifest: dict = field(default_factory=dict)
    evolve_series: Path | None = None
    stationary_series: Path | None = None
    energy_ledger: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)

    @classmethod
    def discover(cls, run_dir) -> "RunArtifacts":
        run_dir = Path(run_dir)
        if not run_dir.is_dir():
            raise MalformedArtifact(f"run directory {run_dir} does not exist")
        art = cls(run_dir=run_dir)
        man = run_dir / "manifest.json"
        if man.exists():
            try:
                art.manifest = json.loads(man.read_text())
            except json.JSONDecodeError as exc:
                raise MalformedArtifact(f"{man}: invalid JSON") from exc
        ev = run_dir / "evolve_series.csv"
        art.evolve_series = ev if ev.exists() else None
        st = run_dir / "stationary_iterations.csv"
        art.stationary_series = st if st.exists() else None
        led = run_dir / "energy_ledger.json"
        if led.exists():
            art.energy_ledger = json.loads(led.read_text())
        art.snapshots = sorted(run_dir.glob("**/*.fld"))
        for snap in art.snapshots:
            read_snapshot(snap)  # validates magic and sample counts
        return art
