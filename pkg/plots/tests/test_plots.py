import struct
import subprocess
import sys

import numpy as np
import pytest

from nskplots.artifacts import (
    EVOLVE_COLUMNS,
    MalformedArtifact,
    RunArtifacts,
    STATIONARY_COLUMNS,
    read_series,
    read_snapshot,
)
from nskplots.contraction import plot_contraction
from nskplots.decay import plot_decay
from nskplots.slice import plot_slice


def _write_evolve_csv(path, n=30, seed=5):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 0.02
    n0 = 1.7e-6
    ntot = n0 * np.exp(-1.2 * t)
    h433 = np.sqrt(ntot)
    linf = 1e-3 * np.exp(-0.9 * t)
    diss = np.cumsum(np.full(n, 4e-8))
    rows = [",".join(EVOLVE_COLUMNS)]
    for i in range(n):
        br = [repr(float(ntot[i] / 8))] * 4
        cr = [repr(float(1e-9 * rng.random()))] * 4
        rows.append(",".join([repr(float(t[i])), repr(float(h433[i])),
                              repr(float(linf[i])), repr(float(ntot[i])),
                              *br, *cr, repr(float(diss[i]))]))
    path.write_text("\n".join(rows) + "\n")
    return t, ntot, h433, diss


def _write_stationary_csv(path, n=7):
    rows = [",".join(STATIONARY_COLUMNS)]
    upd = 2.6e3
    for i in range(1, n + 1):
        ratio = float("nan") if i == 1 else 0.006
        rows.append(",".join([str(i), repr(float(upd)), repr(float(ratio)),
                              repr(1e-12), repr(3e-9), repr(2e-9)]))
        upd *= 0.006
    path.write_text("\n".join(rows) + "\n")


def _write_snapshot(path, n=8, dim=3, tag="sigma"):
    header = struct.pack("<8sB3x3I3d16s", b"NSKFLD01", dim, n, n, n,
                         6.28, 6.28, 6.28, tag.encode())
    rng = np.random.default_rng(0)
    data = rng.standard_normal((n,) * dim)
    path.write_bytes(header + data.ravel(order="F").astype("<f8").tobytes())
    return data


@pytest.fixture()
def run_dir(tmp_path):
    d = tmp_path / "run"
    d.mkdir()
    _write_evolve_csv(d / "evolve_series.csv")
    _write_stationary_csv(d / "stationary_iterations.csv")
    (d / "energy_ledger.json").write_text('{"fitted_C": 1.42, "monotone": true}')
    (d / "manifest.json").write_text('{"seed": 1, "config_hash": "x"}')
    _write_snapshot(d / "sigma.fld")
    return d


def test_discover_and_validate(run_dir):
    art = RunArtifacts.discover(run_dir)
    assert art.evolve_series is not None and art.stationary_series is not None
    assert art.energy_ledger["fitted_C"] == 1.42
    assert len(art.snapshots) == 1


def test_empty_series_rejected(tmp_path):
    d = tmp_path / "empty"
    d.mkdir()
    (d / "evolve_series.csv").write_text(",".join(EVOLVE_COLUMNS) + "\n")
    with pytest.raises(MalformedArtifact):
        plot_decay(d, tmp_path / "out")


def test_wrong_header_rejected(tmp_path):
    d = tmp_path / "bad"
    d.mkdir()
    (d / "evolve_series.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(MalformedArtifact):
        plot_decay(d, tmp_path / "out")


def test_bad_snapshot_rejected(tmp_path):
    p = tmp_path / "x.fld"
    p.write_bytes(b"JUNKJUNK" + b"\x00" * 56)
    with pytest.raises(MalformedArtifact):
        read_snapshot(p)


def test_decay_series_bit_identical(run_dir, tmp_path):
    fig, series, png = plot_decay(run_dir, tmp_path / "out")
    cols = read_series(run_dir / "evolve_series.csv", EVOLVE_COLUMNS)
    # the rendered line carries exactly the emitted numbers
    ln = series["_lines"]["N_total"]
    assert np.array_equal(np.asarray(ln.get_ydata(), dtype=float), cols["N_total"])
    assert np.array_equal(np.asarray(ln.get_xdata(), dtype=float), cols["t"])
    ln_h = series["_lines"]["H433"]
    assert np.array_equal(np.asarray(ln_h.get_ydata(), dtype=float), cols["H433"])
    assert png.exists() and png.stat().st_size > 0


def test_decay_monotone_pixels(run_dir, tmp_path):
    fig, series, _ = plot_decay(run_dir, tmp_path / "out")
    fig.canvas.draw()
    ln = series["_lines"]["N_total"]
    pts = ln.get_transform().transform(
        np.column_stack([ln.get_xdata(), ln.get_ydata()]))
    assert np.all(np.diff(pts[:, 1]) <= 0.5)  # nonincreasing to half a pixel


def test_contraction_series_bit_identical(run_dir, tmp_path):
    fig, series, png = plot_contraction(run_dir, tmp_path / "out")
    cols = read_series(run_dir / "stationary_iterations.csv", STATIONARY_COLUMNS)
    ln = series["_lines"]["lambda_update"]
    assert np.array_equal(np.asarray(ln.get_ydata(), dtype=float),
                          cols["lambda_update"])
    finite = cols["contraction_ratio"][np.isfinite(cols["contraction_ratio"])]
    ln_r = series["_lines"]["contraction_ratio"]
    assert np.array_equal(np.asarray(ln_r.get_ydata(), dtype=float), finite)
    assert png.exists()


def test_slice_uniform_field(tmp_path):
    p = tmp_path / "flat.fld"
    n = 8
    header = struct.pack("<8sB3x3I3d16s", b"NSKFLD01", 3, n, n, n,
                         1.0, 1.0, 1.0, b"flat")
    p.write_bytes(header + np.full((n, n, n), 2.5).ravel(order="F").tobytes())
    fig, sl, png = plot_slice(p, axis=2, index=3, out_dir=tmp_path / "out")
    assert np.all(sl == 2.5)
    assert png.exists()


def test_slice_extracts_correct_plane(tmp_path):
    p = tmp_path / "f.fld"
    data = _write_snapshot(p, n=8)
    fig, sl, _ = plot_slice(p, axis=1, index=2, out_dir=tmp_path / "out")
    assert np.array_equal(sl, data[:, 2, :])
    with pytest.raises(MalformedArtifact):
        plot_slice(p, axis=1, index=99, out_dir=tmp_path / "out")


def test_cli_exit_codes(run_dir, tmp_path):
    from nskplots import contraction, decay

    assert decay.main(["--run", str(run_dir), "--out", str(tmp_path / "o1")]) == 0
    assert contraction.main(["--run", str(run_dir), "--out", str(tmp_path / "o2")]) == 0
    empty = tmp_path / "novotna"
    empty.mkdir()
    assert decay.main(["--run", str(empty), "--out", str(tmp_path / "o3")]) == 2


@pytest.mark.skipif(subprocess.run([sys.executable, "-c", "import nsk"],
                                   capture_output=True).returncode != 0,
                    reason="solver package not installed")
def test_end_to_end_with_real_run(tmp_path):
    # drive the solver CLI as an external program and plot its artifacts
    cfg = tmp_path / "scenario.cfg"
    cfg.write_text("""
seed = 3
[grid]
n = 16
length = 50.26548245743669
[forcing]
amplitude = 1e-3
[evolution]
dt = 0.05
t_end = 0.3
init_amplitude = 1e-4
init_kmin = 2
init_kmax = 4
""")
    run = tmp_path / "run"
    proc = subprocess.run([sys.executable, "-m", "nsk.cli", "evolve",
                           "--config", str(cfg), "--out", str(run), "--quiet"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    fig, series, png = plot_decay(run, tmp_path / "plots")
    cols = read_series(run / "evolve_series.csv", EVOLVE_COLUMNS)
    ln = series["_lines"]["N_total"]
    assert np.array_equal(np.asarray(ln.get_ydata(), dtype=float), cols["N_total"])
    proc2 = subprocess.run([sys.executable, "-m", "nsk.cli", "stationary",
                            "--config", str(cfg), "--out", str(run), "--quiet"],
                           capture_output=True, text=True)
    assert proc2.returncode == 0, proc2.stderr
    _, series2, png2 = plot_contraction(run, tmp_path / "plots")
    assert png2.exists()
    snaps = sorted(run.glob("*.fld"))
    assert snaps
    _, sl, png3 = plot_slice(snaps[0], axis=0, index=4, out_dir=tmp_path / "plots")
    assert png3.exists()
