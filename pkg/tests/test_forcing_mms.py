import numpy as np
import pytest

from nsk.errors import BoxTooSmall
from nsk.forcing import (
    ForcingData,
    ForcingSpec,
    build_forcing,
    component_norm_L,
    forcing_norm_L,
    forcing_smallness,
    mms_evolution,
    mms_stationary,
)
from nsk.model import IdealGas, PhysParams
from nsk.spectral import SpectralGrid

PARAMS = PhysParams()
EOS = IdealGas(R=1.0)


@pytest.fixture(scope="module")
def gbox():
    return SpectralGrid(32, 16 * np.pi)


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(key=seed))


def test_zero_spec_gives_zero_forcing(gbox):
    spec = ForcingSpec(amplitude=0.0)
    fd = build_forcing(gbox, spec, _rng())
    for arr in (fd.G, fd.F, fd.H, fd.G1, fd.G2, fd.F1, fd.F2, fd.H1, fd.H2):
        assert np.max(np.abs(arr)) == 0.0
    assert forcing_norm_L(gbox, fd) == 0.0


def test_degenerate_decomposition_force_only(gbox):
    spec = ForcingSpec(amplitude=1e-2, active=("F",))
    fd = build_forcing(gbox, spec, _rng(1))
    assert np.max(np.abs(fd.G)) == 0.0 and np.max(np.abs(fd.H)) == 0.0
    assert fd.reassembly_residual() < 1e-12


def test_reassembly_residual_random(gbox):
    fd = build_forcing(gbox, ForcingSpec(amplitude=0.5), _rng(2))
    assert fd.reassembly_residual() < 1e-10


def test_mass_source_zero_mean(gbox):
    fd = build_forcing(gbox, ForcingSpec(amplitude=1.0), _rng(3))
    assert abs(np.mean(fd.G)) < 1e-14


def test_box_too_small(gbox):
    spec = ForcingSpec(amplitude=1e-2, decay=4.0, width_frac=0.45)
    with pytest.raises(BoxTooSmall):
        build_forcing(gbox, spec, _rng(4))


def test_smallness_homogeneity(gbox):
    fd = build_forcing(gbox, ForcingSpec(amplitude=2e-3), _rng(5))
    s1 = forcing_smallness(gbox, fd)
    c = 3.5
    s2 = forcing_smallness(gbox, fd.scaled(c))
    for name in ("K0", "K", "K1", "K2", "K3", "G_weighted_L1", "norm_L", "budget"):
        a, b = getattr(s1, name), getattr(s2, name)
        assert abs(b - c * a) < 1e-10 * max(c * a, 1e-30), name
        assert b >= 0.0


def test_smallness_K0_below_K_on_decaying_data(gbox):
    # the L-infinity-heavy entries dominate the plain weighted-L2 sums for
    # envelope-decaying sources
    for seed in range(3):
        fd = build_forcing(gbox, ForcingSpec(amplitude=1e-3), _rng(10 + seed))
        s = forcing_smallness(gbox, fd)
        assert s.K0 <= s.K * (1.0 + 5 * s.boundary_tail + 1e-9)


def test_gaussian_moment_oracle(gbox):
    # single Gaussian G2: weighted L2 integrals against closed-form moments
    import sympy as sp

    s_val = gbox.length / 12
    g2 = np.exp(-gbox.radius**2 / (2 * s_val**2))
    fd = ForcingData.zero(gbox)
    fd.G2 = g2
    fd.G = fd.G2.copy()

    x, y, z, s = sp.symbols("x y z s", positive=True)
    r2 = x**2 + y**2 + z**2
    gauss = sp.exp(-r2 / (2 * s**2))

    def weighted_l2_moment(expr_sq, wexp):
        r = sp.sqrt(r2)
        integrand = (1 + r) ** (2 * wexp) * expr_sq
        # radial integral over R^3
        rr = sp.symbols("rr", positive=True)
        radial = integrand.subs({x: rr, y: 0, z: 0})
        val = sp.integrate(4 * sp.pi * rr**2 * radial, (rr, 0, sp.oo))
        return float(sp.sqrt(val.subs(s, s_val)))

    # nu = 1 term of the component decay norm: ||w^2 grad G||
    grad_sq = sum(sp.diff(gauss, v_) ** 2 for v_ in (x, y, z))
    # grad_sq depends only on r; rewrite via substitution on the x-axis
    exact = weighted_l2_moment(grad_sq, 2)
    from nsk.norms import grad_pow_sq, weight
    w = weight(gbox)
    got = float(np.sqrt(np.sum(w**4 * grad_pow_sq(gbox, fd.G, 1)) * gbox.dV))
    assert abs(got - exact) / exact < 1e-6


def test_mms_stationary_constant_state(gbox):
    P0 = np.full(gbox.shape, 1.0)
    v0 = np.zeros((3,) + gbox.shape)
    t0 = np.full(gbox.shape, 1.0)
    fd, res = mms_stationary(gbox, PARAMS, EOS, P0, v0, t0)
    assert np.max(np.abs(fd.G)) < 1e-14
    assert np.max(np.abs(fd.F)) < 1e-13
    assert np.max(np.abs(fd.H)) < 1e-13
    assert max(res.values()) < 1e-12 or np.isnan(max(res.values())) is False


def test_mms_stationary_pressure_bump(gbox):
    # v = 0: G = 0, H carries no dissipation, F balances pressure vs capillarity
    a = 1e-3
    P0 = 1.0 + a * np.cos(gbox.x[0] / 8)  # one box mode
    v0 = np.zeros((3,) + gbox.shape)
    t0 = np.full(gbox.shape, 1.0)
    fd, res = mms_stationary(gbox, PARAMS, EOS, P0, v0, t0)
    assert np.max(np.abs(fd.G)) < 1e-15
    rho = EOS.rho_of(P0, t0)
    expected_F = (np.stack([gbox.pmul(1.0 / rho, gbox.grad(P0)[j]) for j in range(3)])
                  - PARAMS.kappa * gbox.grad_laplacian(rho))
    assert np.max(np.abs(fd.F - expected_F)) < 1e-12
    assert max(res.values()) < 1e-10


def test_mms_stationary_random_triple(gbox):
    rng = _rng(7)
    from nsk.spectral import random_band_scalar, random_band_vector
    a = 1e-3
    P0 = 1.0 + a * random_band_scalar(gbox, rng, kmax=2)
    v0 = a * random_band_vector(gbox, rng, kmax=2)
    t0 = 1.0 + a * random_band_scalar(gbox, rng, kmax=2)
    fd, res = mms_stationary(gbox, PARAMS, EOS, P0, v0, t0)
    assert max(res.values()) < 1e-10


def test_mms_evolution_static_reduces_to_stationary(gbox):
    rng = _rng(8)
    from nsk.spectral import random_band_scalar, random_band_vector
    a = 1e-3
    P0 = 1.0 + a * random_band_scalar(gbox, rng, kmax=2)
    v0 = a * random_band_vector(gbox, rng, kmax=2)
    t0 = 1.0 + a * random_band_scalar(gbox, rng, kmax=2)
    rho0 = EOS.rho_of(P0, t0)
    fd, _ = mms_stationary(gbox, PARAMS, EOS, P0, v0, t0)
    zero_s = np.zeros(gbox.shape)
    zero_v = np.zeros((3,) + gbox.shape)
    (G, F, H), res = mms_evolution(gbox, PARAMS, EOS, rho0, v0, t0,
                                   zero_s, zero_v, zero_s)
    assert np.max(np.abs(G - fd.G)) < 1e-12
    assert np.max(np.abs(F - fd.F)) < 1e-12
    assert np.max(np.abs(H - fd.H)) < 1e-12
    assert max(res.values()) < 1e-9


def test_mms_evolution_heat_mode(gbox):
    # theta = bar + eps e^{-t} sin(x/8) at t=0: the energy source must balance
    # rho c_v theta_t - alpha lap theta
    eps = 1e-3
    mode = np.sin(gbox.x[0] / 8)
    rho0 = np.full(gbox.shape, 1.0)
    v0 = np.zeros((3,) + gbox.shape)
    t0 = 1.0 + eps * mode
    theta_t = -eps * mode
    (G, F, H), res = mms_evolution(gbox, PARAMS, EOS, rho0, v0, t0,
                                   np.zeros(gbox.shape), v0.copy(), theta_t)
    assert np.max(np.abs(G)) < 1e-15
    lap = gbox.laplacian(t0)
    expected_H = (gbox.pmul(rho0 * PARAMS.c_v, theta_t)
                  - PARAMS.alpha_tilde * lap)
    assert np.max(np.abs(H - expected_H)) < 1e-12
    assert max(res.values()) < 1e-9


def test_mms_evolution_random_spacetime(gbox):
    rng = _rng(9)
    from nsk.spectral import random_band_scalar, random_band_vector
    a = 1e-3
    rho0 = 1.0 + a * random_band_scalar(gbox, rng, kmax=2)
    v0 = a * random_band_vector(gbox, rng, kmax=2)
    t0 = 1.0 + a * random_band_scalar(gbox, rng, kmax=2)
    # separable time factor e^{-2t} at t = 0.3
    lam, t = 2.0, 0.3
    decay = np.exp(-lam * t)
    fields = (1.0 + (rho0 - 1.0) * decay, v0 * decay, 1.0 + (t0 - 1.0) * decay)
    tders = (-lam * (rho0 - 1.0) * decay, -lam * v0 * decay, -lam * (t0 - 1.0) * decay)
    _, res = mms_evolution(gbox, PARAMS, EOS, *fields, *tders)
    assert max(res.values()) < 1e-9


def test_forcing_dump_load_roundtrip(gbox, tmp_path):
    from nsk.forcing import dump_forcing, load_forcing

    fd = build_forcing(gbox, ForcingSpec(amplitude=2e-3), _rng(40))
    dump_forcing(fd, tmp_path / "forcing")
    back = load_forcing(gbox, tmp_path / "forcing")
    for name in ("G", "F", "H", "G1", "G2", "F1", "F2", "H1", "H2"):
        assert np.array_equal(getattr(fd, name), getattr(back, name)), name
