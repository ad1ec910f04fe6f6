import numpy as np
import pytest

from nsk.equations import evolution_tendencies
from nsk.errors import BlowUpDetected, CFLViolation
from nsk.evolution import (
    EnergyCoeffs,
    ImexStepper,
    PerturbationState,
    SteadyBackground,
    assemble_f,
    assemble_h,
    default_energy_coeffs,
    energy_N,
    explicit_rhs,
    imex_step,
    run_stability,
    state_linf,
    triple_h433,
)
from nsk.forcing import mms_stationary
from nsk.model import IdealGas, PhysParams
from nsk.spectral import SpectralGrid, random_band_scalar, random_band_vector
from nsk.stationary import make_trial_state

PARAMS = PhysParams()
EOS = IdealGas(R=1.0)


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


@pytest.fixture(scope="module")
def g2pi():
    return SpectralGrid(16, 2 * np.pi)


@pytest.fixture(scope="module")
def gbox():
    return SpectralGrid(32, 16 * np.pi)


@pytest.fixture(scope="module")
def mms_bg(gbox):
    rng = _rng(300)
    amp = 1e-3
    P = 1.0 + amp * random_band_scalar(gbox, rng, kmin=1, kmax=2)
    v = amp * random_band_vector(gbox, rng, kmin=1, kmax=2)
    t = 1.0 + amp * random_band_scalar(gbox, rng, kmin=1, kmax=2)
    fd, _ = mms_stationary(gbox, PARAMS, EOS, P, v, t)
    state = make_trial_state(gbox, PARAMS, EOS, P - 1.0, v, t - 1.0)
    return SteadyBackground.from_stationary(gbox, PARAMS, EOS, state, fd)


def _random_state(grid, seed, amp):
    rng = _rng(seed)
    return PerturbationState(
        amp * random_band_scalar(grid, rng, kmin=1, kmax=3),
        amp * random_band_vector(grid, rng, kmin=1, kmax=3),
        amp * random_band_scalar(grid, rng, kmin=1, kmax=3))


def test_f_h_vanish_at_zero_state(mms_bg, gbox):
    z = PerturbationState.zero(gbox)
    assert np.max(np.abs(assemble_f(gbox, PARAMS, mms_bg, z))) == 0.0
    assert np.max(np.abs(assemble_h(gbox, PARAMS, mms_bg, z))) == 0.0
    e1, e2, e3 = explicit_rhs(gbox, PARAMS, mms_bg, z)
    assert np.max(np.abs(e1)) == 0.0
    assert np.max(np.abs(e2)) == 0.0
    assert np.max(np.abs(e3)) == 0.0


def test_f_constant_background_no_velocity(gbox):
    # constant steady state and w = 0: no gradients for the secant terms to act on
    bg = SteadyBackground.constant(gbox, PARAMS, EOS)
    rng = _rng(4)
    st = PerturbationState(1e-3 * random_band_scalar(gbox, rng, kmax=2),
                           np.zeros((3,) + gbox.shape),
                           1e-3 * random_band_scalar(gbox, rng, kmax=2))
    f = assemble_f(gbox, PARAMS, bg, st)
    assert np.max(np.abs(f)) < 1e-16


def test_h_reduction_sigma_zero(gbox):
    # constant steady state, sigma = 0: h = -(w.grad)theta + D*(Psi + Phi)(w)
    bg = SteadyBackground.constant(gbox, PARAMS, EOS)
    rng = _rng(5)
    w = 1e-2 * random_band_vector(gbox, rng, kmax=2)
    var = 1e-2 * random_band_scalar(gbox, rng, kmax=2)
    st = PerturbationState(np.zeros(gbox.shape), w, var)
    h = assemble_h(gbox, PARAMS, bg, st)
    from nsk.model import capillary_heating, dissipation
    D_star = 1.0 / (PARAMS.c_v * PARAMS.rho_bar)
    expected = (-gbox.dealias(sum(w[j] * gbox.grad(var)[j] for j in range(3)))
                + D_star * (dissipation(gbox, w, PARAMS)
                            + capillary_heating(gbox, np.full(gbox.shape, 1.0), w, PARAMS)))
    assert np.max(np.abs(h - expected)) < 1e-12 * max(np.max(np.abs(expected)), 1e-30)


@pytest.mark.parametrize("half", [1, 2])
def test_f_h_quadratic_dominance(mms_bg, gbox, half):
    # halving the state amplitude drops the remainders by at least 2x
    st1 = _random_state(gbox, 6, 1e-3 / half)
    st2 = PerturbationState(0.5 * st1.sigma, 0.5 * st1.w, 0.5 * st1.vartheta)
    for fn in (assemble_f, assemble_h):
        n1 = gbox.l2(fn(gbox, PARAMS, mms_bg, st1))
        n2 = gbox.l2(fn(gbox, PARAMS, mms_bg, st2))
        assert n2 <= 0.55 * n1


def test_perturbation_rhs_matches_primitive_tendencies(mms_bg, gbox):
    # two-path oracle: implicit-block linear part + explicit remainder must
    # equal the primitive-variable tendencies of the full system
    st = _random_state(gbox, 7, 1e-3)
    e1, e2, e3 = explicit_rhs(gbox, PARAMS, mms_bg, st)
    # linear implicit part evaluated directly in physical space
    from nsk.model import evolution_coeffs
    ec = evolution_coeffs(PARAMS, EOS)
    rb, tb = PARAMS.rho_bar, PARAMS.theta_bar
    mu, mup, kap, alt = PARAMS.mu, PARAMS.mu_prime, PARAMS.kappa, PARAMS.alpha_tilde
    lin_sig = -rb * gbox.div(st.w)
    lin_w = ((1.0 / rb) * (mu * gbox.laplacian(st.w) + (mu + mup) * gbox.grad_div(st.w))
             - float(ec.A(rb, tb)) * gbox.grad(st.sigma)
             + kap * gbox.grad_laplacian(st.sigma)
             - float(ec.B(rb, tb)) * gbox.grad(st.vartheta))
    lin_th = alt * float(ec.D(rb)) * gbox.laplacian(st.vartheta) \
        - float(ec.E(rb, tb)) * gbox.div(st.w)
    sig_t = lin_sig + e1
    w_t = lin_w + e2
    th_t = lin_th + e3

    rho = mms_bg.rho + st.sigma
    v = mms_bg.v + st.w
    theta = mms_bg.theta + st.vartheta
    rho_t, v_t, theta_t = evolution_tendencies(gbox, PARAMS, EOS, rho, v, theta,
                                               mms_bg.G, mms_bg.F, mms_bg.H)
    scale = max(gbox.l2(rho_t), gbox.l2(v_t), gbox.l2(theta_t))
    assert gbox.l2(sig_t - rho_t) < 1e-8 * scale
    assert gbox.l2(w_t - v_t) < 1e-8 * scale
    assert gbox.l2(th_t - theta_t) < 1e-8 * scale


def test_equilibrium_exactly_preserved(mms_bg, gbox):
    stepper = ImexStepper(gbox, PARAMS, EOS, dt=0.05)
    st = PerturbationState.zero(gbox)
    for _ in range(5):
        st = stepper.advance(mms_bg, st)
    assert state_linf(gbox, st) == 0.0


def test_heat_mode_implicit_recurrence(g2pi):
    # exchange off, theta = sin x1: one step gives theta / (1 + dt alpha D)
    bg = SteadyBackground.constant(g2pi, PARAMS, EOS)
    dt = 0.1
    st = PerturbationState(np.zeros(g2pi.shape), np.zeros((3,) + g2pi.shape),
                           1e-3 * np.sin(g2pi.x[0]))
    out = imex_step(g2pi, PARAMS, EOS, bg, st, dt, disable_exchange=True)
    D_bar = 1.0 / (PARAMS.c_v * PARAMS.rho_bar)
    expected = st.vartheta / (1.0 + dt * PARAMS.alpha_tilde * D_bar)
    assert np.max(np.abs(out.vartheta - expected)) < 1e-13 * np.max(np.abs(expected))
    assert np.max(np.abs(out.sigma)) < 1e-16
    assert np.max(np.abs(out.w)) < 1e-16


def test_amplification_factors_bounded(g2pi):
    # implicit block is non-expansive for all resolved modes at any dt
    for dt in (1e-3, 0.05, 0.5):
        stepper = ImexStepper(g2pi, PARAMS, EOS, dt)
        Minv = np.transpose(stepper.Minv, (2, 3, 4, 0, 1)).reshape(-1, 3, 3)
        eig = np.linalg.eigvals(Minv)
        assert np.max(np.abs(eig)) <= 1.0 + 1e-10


def test_mean_sigma_conserved(mms_bg, gbox):
    st = _random_state(gbox, 8, 1e-3)
    st.sigma += 3e-4  # deliberately nonzero mean
    m0 = np.mean(st.sigma)
    stepper = ImexStepper(gbox, PARAMS, EOS, dt=0.02)
    for _ in range(20):
        st = stepper.advance(mms_bg, st)
    assert abs(np.mean(st.sigma) - m0) < 1e-10 * max(abs(m0), 1e-30)


def test_cfl_violation(gbox):
    bg = SteadyBackground.constant(gbox, PARAMS, EOS)
    rng = _rng(9)
    st = PerturbationState(np.zeros(gbox.shape),
                           0.5 * random_band_vector(gbox, rng, kmax=2),
                           np.zeros(gbox.shape))
    stepper = ImexStepper(gbox, PARAMS, EOS, dt=5.0)
    with pytest.raises(CFLViolation):
        stepper.advance(bg, st)


def test_energy_zero_state(mms_bg, gbox):
    coeffs = default_energy_coeffs(PARAMS, EOS)
    total, br, cr = energy_N(gbox, PARAMS, mms_bg, PerturbationState.zero(gbox), coeffs)
    assert total == 0.0 and max(br) == 0.0 and max(abs(c) for c in cr) == 0.0


def test_energy_analytic_sine(g2pi):
    # sigma = sin x1 about the constant state with a = 1, b = 0:
    # N = sum_nu (||grad^nu sigma||^2 + A_hat ||grad^(nu+1) sigma||^2), all equal
    bg = SteadyBackground.constant(g2pi, PARAMS, EOS)
    st = PerturbationState(np.sin(g2pi.x[0]), np.zeros((3,) + g2pi.shape),
                           np.zeros(g2pi.shape))
    coeffs = EnergyCoeffs(a=(1.0,) * 4, b=(0.0,) * 4, B0=1.0, B1=1.0)
    total, br, cr = energy_N(g2pi, PARAMS, bg, st, coeffs)
    l2sq = (2 * np.pi) ** 3 / 2
    A_hat_bar = 1.0  # rho/P_rho at the reference for the unit ideal gas
    expected = 4 * (l2sq + A_hat_bar * l2sq)
    assert abs(total - expected) < 1e-10 * expected
    assert max(abs(c) for c in cr) < 1e-13


def test_energy_equivalence_bounds(mms_bg, gbox):
    coeffs = default_energy_coeffs(PARAMS, EOS)
    for seed in range(5):
        st = _random_state(gbox, 20 + seed, 1e-3)
        total, _, _ = energy_N(gbox, PARAMS, mms_bg, st, coeffs)
        h = triple_h433(gbox, st)
        assert coeffs.a[3] / 4 * coeffs.B0 * h**2 <= total <= 2 * coeffs.a[0] * h**2


def test_run_stability_zero_init(mms_bg, gbox):
    state, ledger = run_stability(gbox, PARAMS, EOS, mms_bg,
                                  PerturbationState.zero(gbox), dt=0.05, t_end=0.25)
    assert max(ledger.H433) == 0.0 and max(ledger.N_total) == 0.0
    assert ledger.monotone


def test_run_stability_heat_decay_envelope(g2pi):
    # pure heat mode, exchange off: lowest-mode decay tracks exp(-alpha D t)
    bg = SteadyBackground.constant(g2pi, PARAMS, EOS)
    init = PerturbationState(np.zeros(g2pi.shape), np.zeros((3,) + g2pi.shape),
                             1e-3 * np.sin(g2pi.x[0]))
    dt = 1e-3
    state, ledger = run_stability(g2pi, PARAMS, EOS, bg, init, dt=dt, t_end=1.0,
                                  disable_exchange=True, record_every=100)
    D_bar = 1.0 / (PARAMS.c_v * PARAMS.rho_bar)
    lam = PARAMS.alpha_tilde * D_bar
    got = ledger.Linf[-1] / ledger.Linf[0]
    expected = np.exp(-lam * 1.0)
    assert abs(got - expected) / expected < 0.05


def test_blowup_detection(gbox):
    bg = SteadyBackground.constant(gbox, PARAMS, EOS)
    init = _random_state(gbox, 30, 0.69)  # near the admissibility edge
    with pytest.raises(BlowUpDetected):
        run_stability(gbox, PARAMS, EOS, bg, init, dt=0.01, t_end=1.0,
                      growth_guard=1.0001)


@pytest.mark.slow
def test_run_stability_decay_about_steady_state(mms_bg, gbox):
    init = _random_state(gbox, 31, 1e-3)
    # scale to the target triple-norm size
    h = triple_h433(gbox, init)
    c = 1e-3 / h
    init = PerturbationState(c * init.sigma, c * init.w, c * init.vartheta)
    state, ledger = run_stability(gbox, PARAMS, EOS, mms_bg, init, dt=0.02,
                                  t_end=2.0)
    assert ledger.monotone
    assert ledger.N_total[-1] < ledger.N_total[0]
    assert np.isfinite(ledger.fitted_C)


def test_midpoint_scheme_second_order(g2pi):
    # heat mode with exchange off: midpoint tracks exp(-lam t) at O(dt^2)
    bg = SteadyBackground.constant(g2pi, PARAMS, EOS)
    lam = PARAMS.alpha_tilde / (PARAMS.c_v * PARAMS.rho_bar)
    errs = {}
    for scheme in ("euler", "midpoint"):
        st = PerturbationState(np.zeros(g2pi.shape), np.zeros((3,) + g2pi.shape),
                               1e-3 * np.sin(g2pi.x[0]))
        stepper = ImexStepper(g2pi, PARAMS, EOS, dt=0.05, disable_exchange=True,
                              scheme=scheme)
        for _ in range(20):
            st = stepper.advance(bg, st)
        got = np.max(np.abs(st.vartheta)) / 1e-3
        errs[scheme] = abs(got - np.exp(-lam * 1.0))
    assert errs["midpoint"] < 0.05 * errs["euler"]


def test_midpoint_preserves_equilibrium(mms_bg, gbox):
    stepper = ImexStepper(gbox, PARAMS, EOS, dt=0.05, scheme="midpoint")
    st = PerturbationState.zero(gbox)
    for _ in range(3):
        st = stepper.advance(mms_bg, st)
    assert state_linf(gbox, st) == 0.0
