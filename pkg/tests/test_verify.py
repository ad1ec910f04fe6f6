import numpy as np
import pytest

from nsk.evolution import PerturbationState, SteadyBackground, run_stability
from nsk.model import IdealGas, PhysParams
from nsk.spectral import SpectralGrid, random_band_scalar, random_band_vector
from nsk.verify import (
    audit_decay,
    audit_kernel_decay,
    audit_linear_estimate,
    audit_linf_estimate,
    audit_regularization_limit,
    audit_weighted_estimate,
    newtonian_derivatives,
    oseen_derivatives,
)

PARAMS = PhysParams()
EOS = IdealGas(R=1.0)


@pytest.fixture(scope="module")
def gbox():
    return SpectralGrid(32, 16 * np.pi)


def test_audit_linear_estimate_small_ensemble(gbox):
    audit = audit_linear_estimate(gbox, PARAMS, 1.0, -1.0, seed=1, ensemble=6)
    assert audit.passed
    assert np.isfinite(audit.max_ratio) and audit.max_ratio > 0
    assert audit.eps_ratio_spread < 3.0
    assert audit.scale_invariance_gap < 1e-6


def test_audit_linear_estimate_deterministic(gbox):
    a1 = audit_linear_estimate(gbox, PARAMS, 1.0, -1.0, seed=7, ensemble=3)
    a2 = audit_linear_estimate(gbox, PARAMS, 1.0, -1.0, seed=7, ensemble=3)
    assert a1.lhs == a2.lhs and a1.rhs == a2.rhs


@pytest.mark.slow
def test_audit_weighted_estimate(gbox):
    audit = audit_weighted_estimate(gbox, PARAMS, EOS, seed=2, ensemble=4)
    assert audit.passed
    assert audit.scale_invariance_gap < 1e-6


@pytest.mark.slow
def test_audit_linf_estimate(gbox):
    audit = audit_linf_estimate(gbox, PARAMS, EOS, seed=3, ensemble=4)
    assert audit.passed


def test_kernel_decay_constants():
    rep = audit_kernel_decay(mu=1.3, seed=4)
    assert rep["passed"]
    assert abs(rep["newtonian"]["C0"] - 1.0 / (4 * np.pi)) < 1e-13
    assert rep["oseen"]["C0"] <= 1.0 / (4 * np.pi * 1.3) + 1e-13
    # homogeneity: doubling |x| halves the order-0 bound sample-wise
    x = np.array([[1.0], [0.5], [-0.25]])
    e1, _, _ = newtonian_derivatives(x)
    e2, _, _ = newtonian_derivatives(2 * x)
    assert abs(e2[0] - e1[0] / 2) < 1e-14


def test_kernel_derivatives_match_finite_differences():
    rng = np.random.default_rng(11)
    x0 = rng.standard_normal(3)
    x0 /= np.linalg.norm(x0) / 1.7
    hstep = 1e-5
    _, grad, hess = newtonian_derivatives(x0[:, None])
    E0, dE, d2E = oseen_derivatives(x0[:, None], mu=0.9)
    for k in range(3):
        ek = np.zeros(3)
        ek[k] = hstep
        ep, _, _ = newtonian_derivatives((x0 + ek)[:, None])
        em, _, _ = newtonian_derivatives((x0 - ek)[:, None])
        assert abs((ep[0] - em[0]) / (2 * hstep) - grad[k, 0]) < 1e-7
        Ep, dEp, _ = oseen_derivatives((x0 + ek)[:, None], mu=0.9)
        Em, dEm, _ = oseen_derivatives((x0 - ek)[:, None], mu=0.9)
        fd1 = (Ep - Em) / (2 * hstep)
        assert np.max(np.abs(fd1[:, :, 0] - dE[k, :, :, 0])) < 1e-7
        fd2 = (dEp - dEm) / (2 * hstep)
        assert np.max(np.abs(fd2[:, :, :, 0] - d2E[k, :, :, :, 0])) < 1e-6


def test_regularization_limit(gbox):
    rep = audit_regularization_limit(gbox, PARAMS, 1.0, -1.0, seed=5)
    assert rep["passed"]
    assert rep["cauchy_monotone"]
    assert rep["limit_gap"] < 1e-6
    gaps = rep["successive_gaps"]
    assert all(gaps[i + 1] < gaps[i] for i in range(len(gaps) - 1))


def test_regularization_limit_zero_data(gbox):
    # zero data gives identically zero solutions at every eps
    from nsk.stationary import solve_linearized
    z = np.zeros(gbox.shape)
    zv = np.zeros((3,) + gbox.shape)
    for eps in (0.1, 0.0):
        sig, v, th, _ = solve_linearized(gbox, PARAMS, 1.0, -1.0, None, z, zv, z, eps=eps)
        assert np.max(np.abs(sig)) == 0.0


@pytest.mark.slow
def test_audit_decay_on_short_runs(gbox):
    bg = SteadyBackground.constant(gbox, PARAMS, EOS)
    rng = np.random.Generator(np.random.Philox(key=31))
    ledgers = []
    for amp in (1e-3, 5e-4):
        init = PerturbationState(
            amp * random_band_scalar(gbox, rng, kmin=6, kmax=10),
            amp * random_band_vector(gbox, rng, kmin=6, kmax=10),
            amp * random_band_scalar(gbox, rng, kmin=6, kmax=10))
        _, led = run_stability(gbox, PARAMS, EOS, bg, init, dt=0.02, t_end=0.5)
        ledgers.append(led)
    rep = audit_decay(ledgers)
    assert rep["monotone"]
    assert np.isfinite(rep["C_spread"])
