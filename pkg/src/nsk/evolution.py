"""Semi-implicit time integration of perturbations around a steady state.

The unknowns here are density-based: sigma = rho - rho*, w = v - v*,
vartheta = theta - theta* (a different convention from the stationary
solver's pressure-based sigma; conversions go through the density map).

The stiff constant-coefficient part (viscosity, capillarity, heat diffusion
and the reference-state exchange terms) is advanced implicitly (first-order
Euler by default, an optional second-order midpoint variant), solved exactly
per Fourier mode; every remaining term, including the coefficient deviations
from the reference state and the steady-background couplings, is explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpDetected, CFLViolation, OutOfAdmissibleRange
from .model import (
    EquationOfState,
    PhysParams,
    capillary_heating,
    check_admissible,
    coefficient_extremes,
    dissipation,
    evolution_coeffs,
)
from .norms import deriv_table, sobolev_seminorm_sq
from .spectral import SpectralGrid


@dataclass
class PerturbationState:
    """Density-based perturbation triple at time t."""

    sigma: np.ndarray
    w: np.ndarray
    vartheta: np.ndarray
    t: float = 0.0

    @classmethod
    def zero(cls, grid: SpectralGrid, t: float = 0.0):
        return cls(np.zeros(grid.shape), np.zeros((grid.dim,) + grid.shape),
                   np.zeros(grid.shape), t)

    def copy(self):
        return PerturbationState(self.sigma.copy(), self.w.copy(),
                                 self.vartheta.copy(), self.t)


class SteadyBackground:
    """A steady state with its forcing and precomputed derived fields."""

    def __init__(self, grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                 rho_s, v_s, theta_s, G=None, F=None, H=None):
        self.grid, self.params, self.eos = grid, params, eos
        self.rho = np.asarray(rho_s, dtype=float) + np.zeros(grid.shape)
        self.v = np.asarray(v_s, dtype=float) + np.zeros((grid.dim,) + grid.shape)
        self.theta = np.asarray(theta_s, dtype=float) + np.zeros(grid.shape)
        self.G = np.zeros(grid.shape) if G is None else G
        self.F = np.zeros((grid.dim,) + grid.shape) if F is None else F
        self.H = np.zeros(grid.shape) if H is None else H
        check_admissible(self.rho, self.theta, params, what="steady background")

        self.grad_rho = grid.grad(self.rho)
        self.grad_theta = grid.grad(self.theta)
        self.div_v = grid.div(self.v)
        self.lap_theta = grid.laplacian(self.theta)
        mu, mup = params.mu, params.mu_prime
        self.visc_v = mu * grid.laplacian(self.v) + (mu + mup) * grid.grad_div(self.v)
        self.psi = dissipation(grid, self.v, params)
        self.phi = capillary_heating(grid, self.rho, self.v, params)
        self.coeffs = evolution_coeffs(params, eos)
        self.E_s = self.coeffs.E(self.rho, self.theta)
        self.grad_v = [grid.grad(self.v[j]) for j in range(grid.dim)]
        ec, rb, tb = self.coeffs, params.rho_bar, params.theta_bar
        self.A_dev_base = ec.A(self.rho, self.theta) - ec.A(rb, tb)
        self.B_dev_base = ec.B(self.rho, self.theta) - ec.B(rb, tb)
        self.D_dev_base = ec.D(self.rho) - ec.D(rb)
        self.E_dev_base = self.E_s - ec.E(rb, tb)
        self.vmax = float(np.max(np.sqrt(sum(c**2 for c in self.v))))

    @classmethod
    def constant(cls, grid: SpectralGrid, params: PhysParams, eos: EquationOfState):
        return cls(grid, params, eos, np.full(grid.shape, params.rho_bar),
                   np.zeros((grid.dim,) + grid.shape),
                   np.full(grid.shape, params.theta_bar))

    @classmethod
    def from_stationary(cls, grid, params, eos, state, fd):
        """Convention firewall: the steady density comes from the pressure-based
        state through the inverse map; downstream sigma is density-based."""
        return cls(grid, params, eos, state.rho, state.v,
                   params.theta_bar + state.vartheta, fd.G, fd.F, fd.H)


def _adv(grid, vel, grad_scalar):
    return grid.dealias(sum(vel[j] * grad_scalar[j] for j in range(grid.dim)))


def assemble_f(grid: SpectralGrid, params: PhysParams, bg: SteadyBackground,
               state: PerturbationState, shared: dict | None = None) -> np.ndarray:
    """Momentum-equation remainder: advection differences, coefficient
    deviations against the steady state (exact secant splittings), the mass
    source coupling and the density-deviation viscous term."""
    d = grid.dim
    sig, w, var = state.sigma, state.w, state.vartheta
    rho_tot = bg.rho + sig
    ec = bg.coeffs
    shared = shared if shared is not None else _shared_step_fields(grid, params, bg, state)
    fac = shared["fac"]
    dA = fac["A1"] * sig + fac["A2"] * var
    dB = fac["B1"] * sig + fac["B2"] * var

    mu, mup = params.mu, params.mu_prime
    visc_tot = bg.visc_v + shared["visc_w"]
    grad_w = shared["grad_w"]
    grad_vs = bg.grad_v

    f = np.empty((d,) + grid.shape)
    for j in range(d):
        f[j] = (-_adv(grid, bg.v, grad_w[j])
                - _adv(grid, w, grad_vs[j]) - _adv(grid, w, grad_w[j])
                - grid.dealias(dA * bg.grad_rho[j])
                - grid.dealias(dB * bg.grad_theta[j])
                - grid.dealias((w[j] / rho_tot
                                - bg.v[j] * sig / (bg.rho * rho_tot)) * bg.G)
                - grid.dealias(sig / (bg.rho * rho_tot) * visc_tot[j]))
    return f


def assemble_h(grid: SpectralGrid, params: PhysParams, bg: SteadyBackground,
               state: PerturbationState, shared: dict | None = None) -> np.ndarray:
    """Heat-equation remainder, grouped so that every term carries an exact
    perturbation factor (zero state gives identically zero)."""
    d = grid.dim
    sig, w, var = state.sigma, state.w, state.vartheta
    rho_tot = bg.rho + sig
    theta_tot = bg.theta + var
    ec = bg.coeffs
    shared = shared if shared is not None else _shared_step_fields(grid, params, bg, state)
    fac = shared["fac"]
    dD = fac["D1"] * sig
    dE = fac["E1"] * sig + fac["E2"] * var
    D_t = ec.D(rho_tot)

    grad_var = shared["grad_var"]
    grad_thtot = bg.grad_theta + grad_var
    v_tot = bg.v + w
    psi_tot = dissipation(grid, v_tot, params)
    phi_tot = capillary_heating(grid, rho_tot, v_tot, params)
    # v^2 - v*^2 = w . (2 v* + w), exact at w = 0
    v2_diff = grid.dealias(sum(w[j] * (2 * bg.v[j] + w[j]) for j in range(d)))
    v_s2 = grid.dealias(sum(bg.v[j] ** 2 for j in range(d)))

    alt, cv = params.alpha_tilde, params.c_v
    h = (-_adv(grid, bg.v, grad_var)
         - _adv(grid, w, grad_thtot)
         + alt * grid.dealias(dD * (bg.lap_theta + grid.laplacian(var)))
         + grid.dealias(dD * bg.H)
         + grid.dealias(dD * (bg.psi + bg.phi))
         + grid.dealias(D_t * ((psi_tot - bg.psi) + (phi_tot - bg.phi)))
         + 0.5 * grid.dealias((D_t * v2_diff + dD * v_s2) * bg.G)
         - cv * grid.dealias((D_t * var + dD * bg.theta) * bg.G)
         - grid.dealias(dE * bg.div_v))
    return h


def _shared_step_fields(grid, params, bg, state) -> dict:
    """Per-step quantities used by several assembly routines."""
    mu, mup = params.mu, params.mu_prime
    return {
        "fac": bg.coeffs.secant_factors(bg.rho, bg.theta, state.sigma,
                                        state.vartheta),
        "grad_w": [grid.grad(state.w[j]) for j in range(grid.dim)],
        "grad_var": grid.grad(state.vartheta),
        "grad_sig": grid.grad(state.sigma),
        "visc_w": mu * grid.laplacian(state.w) + (mu + mup) * grid.grad_div(state.w),
    }


def explicit_rhs(grid: SpectralGrid, params: PhysParams, bg: SteadyBackground,
                 state: PerturbationState):
    """Everything outside the frozen-coefficient implicit block."""
    d = grid.dim
    sig, w, var = state.sigma, state.w, state.vartheta
    ec = bg.coeffs
    shared = _shared_step_fields(grid, params, bg, state)

    # mass: - div((rho* - rho_bar + sigma) w) - div(v* sigma)
    drho = bg.rho - params.rho_bar + sig
    e_sig = (-grid.div(np.stack([grid.dealias(drho * w[j]) for j in range(d)]))
             - grid.div(np.stack([grid.dealias(bg.v[j] * sig) for j in range(d)])))

    f = assemble_f(grid, params, bg, state, shared)
    fac = shared["fac"]
    rb, tb = params.rho_bar, params.theta_bar
    A_dev = fac["A1"] * sig + fac["A2"] * var + bg.A_dev_base
    B_dev = fac["B1"] * sig + fac["B2"] * var + bg.B_dev_base
    grad_sig = shared["grad_sig"]
    grad_var = shared["grad_var"]
    inv_dev = 1.0 / bg.rho - 1.0 / rb
    e_w = np.empty((d,) + grid.shape)
    for j in range(d):
        e_w[j] = (f[j] + grid.dealias(inv_dev * shared["visc_w"][j])
                  - grid.dealias(A_dev * grad_sig[j])
                  - grid.dealias(B_dev * grad_var[j]))

    h = assemble_h(grid, params, bg, state, shared)
    D_dev = bg.D_dev_base
    E_dev = fac["E1"] * sig + fac["E2"] * var + bg.E_dev_base
    e_var = (h + params.alpha_tilde * grid.dealias(D_dev * grid.laplacian(var))
             - grid.dealias(E_dev * grid.div(w)))
    return e_sig, e_w, e_var


def _invert_3x3(M, kshape):
    det = (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
           - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
           + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))
    inv = np.empty((3, 3) + kshape)
    inv[0, 0] = (M[1][1] * M[2][2] - M[1][2] * M[2][1]) / det
    inv[0, 1] = (M[0][2] * M[2][1] - M[0][1] * M[2][2]) / det
    inv[0, 2] = (M[0][1] * M[1][2] - M[0][2] * M[1][1]) / det
    inv[1, 0] = (M[1][2] * M[2][0] - M[1][0] * M[2][2]) / det
    inv[1, 1] = (M[0][0] * M[2][2] - M[0][2] * M[2][0]) / det
    inv[1, 2] = (M[0][2] * M[1][0] - M[0][0] * M[1][2]) / det
    inv[2, 0] = (M[1][0] * M[2][1] - M[1][1] * M[2][0]) / det
    inv[2, 1] = (M[0][1] * M[2][0] - M[0][0] * M[2][1]) / det
    inv[2, 2] = (M[0][0] * M[1][1] - M[0][1] * M[1][0]) / det
    return inv


class ImexStepper:
    """IMEX stepping with the reference-state linear block implicit.

    The implicit per-mode system couples (sigma, longitudinal w, vartheta)
    through a real 3x3 matrix; transverse velocity is a scalar divide.  The
    required scheme is first-order Euler; ``scheme="midpoint"`` switches to
    the optional second-order variant (trapezoidal linear part, explicit
    terms at a predicted midpoint), which stays out of acceptance runs.
    With ``disable_exchange`` the off-diagonal couplings are dropped
    (diagnostic mode for isolating pure diffusion)."""

    def __init__(self, grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                 dt: float, disable_exchange: bool = False, scheme: str = "euler"):
        if scheme not in ("euler", "midpoint"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.grid, self.params, self.dt, self.scheme = grid, params, dt, scheme
        ec = evolution_coeffs(params, eos)
        rb, tb = params.rho_bar, params.theta_bar
        Ab = float(ec.A(rb, tb))
        Bb = float(ec.B(rb, tb))
        Db = float(ec.D(rb))
        Eb = float(ec.E(rb, tb))
        mu, mup, kap, alt = params.mu, params.mu_prime, params.kappa, params.alpha_tilde

        xi2 = grid.xi2
        m = np.sqrt(xi2)
        one = np.ones(grid.kshape)
        zero = np.zeros(grid.kshape)
        if disable_exchange:
            L = [[zero, zero, zero],
                 [zero, (2 * mu + mup) * xi2 / rb, zero],
                 [zero, zero, alt * Db * xi2]]
        else:
            L = [[zero, rb * m, zero],
                 [-(Ab + kap * xi2) * m, (2 * mu + mup) * xi2 / rb, -Bb * m],
                 [zero, Eb * m, alt * Db * xi2]]
        self.L = L

        def backward(step):
            return _invert_3x3(
                [[one + step * L[0][0], step * L[0][1], step * L[0][2]],
                 [step * L[1][0], one + step * L[1][1], step * L[1][2]],
                 [step * L[2][0], step * L[2][1], one + step * L[2][2]]],
                grid.kshape)

        self.Minv = backward(dt)
        self.trans_factor = 1.0 / (1.0 + dt * mu * xi2 / rb)
        if scheme == "midpoint":
            self.Minv_half = backward(dt / 2)
            self.trans_half = 1.0 / (1.0 + 0.5 * dt * mu * xi2 / rb)
            self.forward_half = [[one - 0.5 * dt * L[0][0], -0.5 * dt * L[0][1],
                                  -0.5 * dt * L[0][2]],
                                 [-0.5 * dt * L[1][0], one - 0.5 * dt * L[1][1],
                                  -0.5 * dt * L[1][2]],
                                 [-0.5 * dt * L[2][0], -0.5 * dt * L[2][1],
                                  one - 0.5 * dt * L[2][2]]]
            self.trans_forward_half = 1.0 - 0.5 * dt * mu * xi2 / rb
        with np.errstate(divide="ignore", invalid="ignore"):
            self.inv_mag = np.where(m > 0, 1.0 / np.maximum(m, 1e-300), 0.0)

    def _split(self, rs, rw, rt):
        wpar = sum(self.grid.xi[j] * rw[j] for j in range(self.grid.dim)) * self.inv_mag
        return wpar, 1j * wpar

    def _solve(self, Minv, trans, rs, rw, rt):
        grid = self.grid
        wpar, u = self._split(rs, rw, rt)
        sig = Minv[0, 0] * rs + Minv[0, 1] * u + Minv[0, 2] * rt
        u_new = Minv[1, 0] * rs + Minv[1, 1] * u + Minv[1, 2] * rt
        th = Minv[2, 0] * rs + Minv[2, 1] * u + Minv[2, 2] * rt
        wpar_new = -1j * u_new
        w = np.empty_like(rw)
        for j in range(grid.dim):
            perp = rw[j] - grid.xi[j] * self.inv_mag * wpar
            w[j] = perp * trans + grid.xi[j] * self.inv_mag * wpar_new
        return sig, w, th

    def _check_cfl(self, bg, state):
        grid, dt = self.grid, self.dt
        speed = (np.sqrt(sum(bg.v[j] ** 2 for j in range(grid.dim)))
                 + np.sqrt(sum(state.w[j] ** 2 for j in range(grid.dim))))
        bound = 0.5 * grid.dx / max(float(np.max(speed)), 1e-300)
        if dt > bound:
            raise CFLViolation(
                f"dt = {dt:.3e} exceeds 0.5 dx / max(|v*|+|w|) = {bound:.3e}")

    def _apply_forward_half(self, rs, rw, rt):
        F = self.forward_half
        wpar, u = self._split(rs, rw, rt)
        sig = F[0][0] * rs + F[0][1] * u + F[0][2] * rt
        u_new = F[1][0] * rs + F[1][1] * u + F[1][2] * rt
        th = F[2][0] * rs + F[2][1] * u + F[2][2] * rt
        wpar_new = -1j * u_new
        w = np.empty_like(rw)
        for j in range(self.grid.dim):
            perp = rw[j] - self.grid.xi[j] * self.inv_mag * wpar
            w[j] = perp * self.trans_forward_half \
                + self.grid.xi[j] * self.inv_mag * wpar_new
        return sig, w, th

    def advance(self, bg: SteadyBackground, state: PerturbationState,
                check_cfl: bool = True) -> PerturbationState:
        grid, dt = self.grid, self.dt
        if check_cfl:
            self._check_cfl(bg, state)
        e_sig, e_w, e_var = explicit_rhs(grid, self.params, bg, state)
        if self.scheme == "euler":
            rs = grid.fft(state.sigma + dt * e_sig)
            rw = grid.fft_vec(state.w + dt * e_w)
            rt = grid.fft(state.vartheta + dt * e_var)
            sig, w, th = self._solve(self.Minv, self.trans_factor, rs, rw, rt)
            return PerturbationState(grid.ifft(sig), grid.ifft_vec(w),
                                     grid.ifft(th), state.t + dt)
        # midpoint: implicit-Euler predictor to t + dt/2, explicit terms at the
        # midpoint, trapezoidal linear part for the corrector
        rs = grid.fft(state.sigma + 0.5 * dt * e_sig)
        rw = grid.fft_vec(state.w + 0.5 * dt * e_w)
        rt = grid.fft(state.vartheta + 0.5 * dt * e_var)
        sig_h, w_h, th_h = self._solve(self.Minv_half, self.trans_half, rs, rw, rt)
        half = PerturbationState(grid.ifft(sig_h), grid.ifft_vec(w_h),
                                 grid.ifft(th_h), state.t + 0.5 * dt)
        m_sig, m_w, m_var = explicit_rhs(grid, self.params, bg, half)
        fs, fw, ft = self._apply_forward_half(grid.fft(state.sigma),
                                              grid.fft_vec(state.w),
                                              grid.fft(state.vartheta))
        rs = fs + dt * grid.fft(m_sig)
        rw = fw + dt * grid.fft_vec(m_w)
        rt = ft + dt * grid.fft(m_var)
        sig, w, th = self._solve(self.Minv_half, self.trans_half, rs, rw, rt)
        return PerturbationState(grid.ifft(sig), grid.ifft_vec(w),
                                 grid.ifft(th), state.t + dt)


def imex_step(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
              bg: SteadyBackground, state: PerturbationState, dt: float,
              disable_exchange: bool = False,
              scheme: str = "euler") -> PerturbationState:
    """One-off step helper; reuse an ImexStepper for runs."""
    stepper = ImexStepper(grid, params, eos, dt, disable_exchange, scheme)
    return stepper.advance(bg, state)


# -- energy functional -----------------------------------------------------------


@dataclass
class EnergyCoeffs:
    a: tuple
    b: tuple
    B0: float
    B1: float


def default_energy_coeffs(params: PhysParams, eos: EquationOfState) -> EnergyCoeffs:
    """a_nu = 1, b_nu = min(B0, 1)/8: inside the admissibility region
    (a_nu nonincreasing, b_nu <= a_nu min(B0,1)/4) with slack."""
    B0, B1 = coefficient_extremes(params, eos)
    b = min(B0, 1.0) / 8.0
    return EnergyCoeffs(a=(1.0,) * 4, b=(b,) * 4, B0=B0, B1=B1)


def energy_N(grid: SpectralGrid, params: PhysParams, bg: SteadyBackground,
             state: PerturbationState, coeffs: EnergyCoeffs):
    """Weighted-bracket energy with the true variable coefficients evaluated at
    the current state; returns (total, per-order brackets, per-order crosses).

    The cross terms <grad^nu w, grad^(nu+1) sigma> pair each mixed partial of
    w with the matching partial of grad sigma (multiplicity-weighted)."""
    ec = bg.coeffs
    rho_tot = bg.rho + state.sigma
    th_tot = bg.theta + state.vartheta
    A_hat = ec.A_hat(rho_tot, th_tot)
    A_til = ec.A_tilde(rho_tot, th_tot)
    B_til = ec.B_tilde(rho_tot, th_tot)

    sig_tab = deriv_table(grid, state.sigma, 5)
    var_tab = deriv_table(grid, state.vartheta, 3)
    w_tabs = [deriv_table(grid, state.w[c], 3) for c in range(grid.dim)]

    def wsum(tab, nu, weight_field=None):
        total = np.zeros(grid.shape)
        for alpha, coeff in _alpha_list(grid, nu):
            fld = tab[alpha]
            total += coeff * fld * fld
        if weight_field is None:
            return float(np.sum(total) * grid.dV)
        return float(np.sum(weight_field * total) * grid.dV)

    brackets = []
    crosses = []
    for nu in range(4):
        br = wsum(sig_tab, nu)
        br += wsum(sig_tab, nu + 1, A_hat)
        br += sum(wsum(w_tabs[c], nu, A_til) for c in range(grid.dim))
        br += wsum(var_tab, nu, B_til)
        brackets.append(br)
        cr = 0.0
        for alpha, coeff in _alpha_list(grid, nu):
            for j in range(grid.dim):
                aj = tuple(a + (1 if i == j else 0) for i, a in enumerate(alpha))
                cr += coeff * float(np.sum(w_tabs[j][alpha] * sig_tab[aj]) * grid.dV)
        crosses.append(cr)
    total = sum(a * br for a, br in zip(coeffs.a, brackets))
    total += sum(b * cr for b, cr in zip(coeffs.b, crosses))
    return total, brackets, crosses


def _alpha_list(grid, nu):
    from .norms import multi_indices
    return multi_indices(nu, grid.dim)


# -- stability runs ---------------------------------------------------------------


@dataclass
class EnergyLedger:
    coeffs: EnergyCoeffs
    t: list = field(default_factory=list)
    H433: list = field(default_factory=list)
    Linf: list = field(default_factory=list)
    N_total: list = field(default_factory=list)
    brackets: list = field(default_factory=list)   # rows of 4
    crosses: list = field(default_factory=list)    # rows of 4
    dissipation_integral: list = field(default_factory=list)
    monotone: bool = True
    max_increase: float = 0.0
    fitted_C: float = float("nan")
    blowup: bool = False
    warnings: list = field(default_factory=list)

    def record(self, t, h433, linf, n_total, br, cr, diss):
        self.t.append(float(t))
        self.H433.append(float(h433))
        self.Linf.append(float(linf))
        self.N_total.append(float(n_total))
        self.brackets.append([float(x) for x in br])
        self.crosses.append([float(x) for x in cr])
        self.dissipation_integral.append(float(diss))

    def finalize(self, tol_scale: float):
        n = np.asarray(self.N_total)
        if len(n) > 1:
            inc = np.max(np.diff(n))
            self.max_increase = float(max(inc, 0.0))
            self.monotone = bool(inc <= tol_scale)
        h0 = self.H433[0]
        if h0 > 0:
            vals = [(h**2 + dint) / h0**2
                    for h, dint in zip(self.H433, self.dissipation_integral)]
            self.fitted_C = float(max(vals))

    def rows(self):
        out = []
        for i in range(len(self.t)):
            out.append((self.t[i], self.H433[i], self.Linf[i], self.N_total[i],
                        *self.brackets[i], *self.crosses[i],
                        self.dissipation_integral[i]))
        return out

    CSV_HEADER = ("t,H433,Linf,N_total,N_bracket0,N_bracket1,N_bracket2,"
                  "N_bracket3,N_cross0,N_cross1,N_cross2,N_cross3,"
                  "dissipation_integral")


def triple_h433(grid: SpectralGrid, state: PerturbationState) -> float:
    return (np.sqrt(sum(sobolev_seminorm_sq(grid, state.sigma, l) for l in range(5)))
            + np.sqrt(sum(sobolev_seminorm_sq(grid, state.w, l) for l in range(4)))
            + np.sqrt(sum(sobolev_seminorm_sq(grid, state.vartheta, l) for l in range(4))))


def grad_h433_sq(grid: SpectralGrid, state: PerturbationState) -> float:
    """||grad(sigma, w, theta)||^2 in the (4,3,3) triple convention."""
    gs = np.sqrt(sum(sobolev_seminorm_sq(grid, state.sigma, l) for l in range(1, 6)))
    gw = np.sqrt(sum(sobolev_seminorm_sq(grid, state.w, l) for l in range(1, 5)))
    gt = np.sqrt(sum(sobolev_seminorm_sq(grid, state.vartheta, l) for l in range(1, 5)))
    return (gs + gw + gt) ** 2


def state_linf(grid: SpectralGrid, state: PerturbationState) -> float:
    return max(float(np.max(np.abs(state.sigma))),
               float(np.max(np.abs(state.w))),
               float(np.max(np.abs(state.vartheta))))


def run_stability(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                  bg: SteadyBackground, init: PerturbationState, dt: float,
                  t_end: float, coeffs: EnergyCoeffs | None = None,
                  disable_exchange: bool = False, record_every: int = 1,
                  monotone_tol: float = 1e-8, growth_guard: float = 10.0,
                  scheme: str = "euler", size_threshold: float = 1e-3,
                  snapshot_cb=None):
    """Advance to t_end recording norms, the energy functional and the
    accumulated dissipation.  Raises BlowUpDetected on admissibility failure
    or growth beyond ``growth_guard`` times the initial size.  Initial data
    above ``size_threshold`` in the summed triple norm is outside the
    regime the decay verdicts are calibrated for and is flagged."""
    if coeffs is None:
        coeffs = default_energy_coeffs(params, eos)
    stepper = ImexStepper(grid, params, eos, dt, disable_exchange, scheme)
    ledger = EnergyLedger(coeffs=coeffs)
    state = init.copy()
    h0 = triple_h433(grid, state)
    if h0 > size_threshold * (1.0 + 1e-9):
        ledger.warnings.append(
            f"initial size {h0:.3e} exceeds the threshold {size_threshold:.3e}")
    diss = 0.0

    def record(st):
        n_tot, br, cr = energy_N(grid, params, bg, st, coeffs)
        ledger.record(st.t, triple_h433(grid, st), state_linf(grid, st),
                      n_tot, br, cr, diss)
        if snapshot_cb is not None:
            snapshot_cb(st)

    record(state)
    nsteps = int(round(t_end / dt))
    for n in range(1, nsteps + 1):
        diss += dt * grad_h433_sq(grid, state)
        state = stepper.advance(bg, state)
        try:
            check_admissible(bg.rho + state.sigma, bg.theta + state.vartheta,
                             params, what="evolution state")
        except OutOfAdmissibleRange as exc:
            ledger.blowup = True
            raise BlowUpDetected(str(exc)) from exc
        h = triple_h433(grid, state)
        if h0 > 0 and h > growth_guard * h0:
            ledger.blowup = True
            raise BlowUpDetected(
                f"norm grew to {h:.3e} (> {growth_guard} x initial {h0:.3e})")
        if n % record_every == 0 or n == nsteps:
            record(state)
    n0 = ledger.N_total[0]
    ledger.finalize(monotone_tol * max(n0, 1e-300))
    return state, ledger
