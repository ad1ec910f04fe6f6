"""Physical parameters, equation of state, derived coefficients, stress tensors.

Two perturbation conventions coexist downstream and are kept rigorously
apart: the stationary solver works in (sigma = P - Pbar, v, theta - thetabar)
with density recovered through the inverse EOS map, while the evolution
solver perturbs density directly around a computed background state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OutOfAdmissibleRange
from .spectral import SpectralGrid

# Gauss-Legendre nodes/weights on [0, 1] for the secant (integral-mean) factors.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class PhysParams:
    """Constant transport and reference constants.

    mu: shear viscosity, mu_prime: second viscosity, kappa: capillarity,
    alpha_tilde: heat conduction, c_v: heat capacity at constant volume,
    (rho_bar, theta_bar): reference state.
    """

    mu: float = 1.0
    mu_prime: float = 0.0
    kappa: float = 1.0
    alpha_tilde: float = 1.0
    c_v: float = 1.5
    rho_bar: float = 1.0
    theta_bar: float = 1.0

    def __post_init__(self):
        for name in ("mu", "kappa", "alpha_tilde", "c_v", "rho_bar", "theta_bar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if 2.0 / 3.0 * self.mu + self.mu_prime < 0:
            raise ValueError("need (2/3) mu + mu_prime >= 0")


class EquationOfState:
    """Pressure law P(rho, theta) with P_rho, P_theta > 0 on the admissible box.

    Subclasses provide ``pressure`` and its first and second partials; the
    inverse map rho(P, theta) defaults to a vectorized Newton solve, with
    partials from the implicit-function theorem (rho_P = 1/P_rho,
    rho_theta = -P_theta/P_rho).
    """

    name = "eos"

    def pressure(self, rho, theta):
        raise NotImplementedError

    def P_rho(self, rho, theta):
        raise NotImplementedError

    def P_theta(self, rho, theta):
        raise NotImplementedError

    def P_rho_rho(self, rho, theta):
        raise NotImplementedError

    def P_rho_theta(self, rho, theta):
        raise NotImplementedError

    def P_theta_theta(self, rho, theta):
        raise NotImplementedError

    def rho_of(self, P, theta, guess=None):
        rho = np.full_like(np.asarray(P, dtype=float), np.nan)
        rho[...] = guess if guess is not None else 1.0
        for _ in range(60):
            f = self.pressure(rho, theta) - P
            step = f / self.P_rho(rho, theta)
            rho = rho - step
            if np.max(np.abs(step)) < 1e-14 * max(float(np.max(np.abs(rho))), 1.0):
                break
        return rho

    def rho_P(self, P, theta):
        rho = self.rho_of(P, theta)
        return 1.0 / self.P_rho(rho, theta)

    def rho_theta(self, P, theta):
        rho = self.rho_of(P, theta)
        return -self.P_theta(rho, theta) / self.P_rho(rho, theta)


class IdealGas(EquationOfState):
    """P = R rho theta with configurable gas constant."""

    name = "ideal-gas"

    def __init__(self, R: float = 1.0):
        if R <= 0:
            raise ValueError("gas constant must be positive")
        self.R = R

    def pressure(self, rho, theta):
        return self.R * rho * theta

    def P_rho(self, rho, theta):
        return self.R * theta * np.ones_like(np.asarray(rho, dtype=float))

    def P_theta(self, rho, theta):
        return self.R * rho * np.ones_like(np.asarray(theta, dtype=float))

    def P_rho_rho(self, rho, theta):
        return np.zeros_like(np.asarray(rho, dtype=float))

    def P_rho_theta(self, rho, theta):
        return self.R * np.ones_like(np.asarray(rho, dtype=float))

    def P_theta_theta(self, rho, theta):
        return np.zeros_like(np.asarray(rho, dtype=float))

    def rho_of(self, P, theta, guess=None):
        return P / (self.R * theta)

    def rho_P(self, P, theta):
        return 1.0 / (self.R * theta) * np.ones_like(np.asarray(P, dtype=float))

    def rho_theta(self, P, theta):
        return -P / (self.R * theta**2)


class StiffenedGas(EquationOfState):
    """P = R rho theta + B ((rho/rho_ref)^gamma - 1); inverse map via Newton."""

    name = "stiffened-gas"

    def __init__(self, R: float = 1.0, B: float = 0.2, gamma: float = 3.0,
                 rho_ref: float = 1.0):
        if R <= 0 or B < 0 or gamma <= 1 or rho_ref <= 0:
            raise ValueError("invalid stiffened-gas parameters")
        self.R, self.B, self.gamma, self.rho_ref = R, B, gamma, rho_ref

    def pressure(self, rho, theta):
        return self.R * rho * theta + self.B * ((rho / self.rho_ref) ** self.gamma - 1.0)

    def P_rho(self, rho, theta):
        return self.R * theta + self.B * self.gamma / self.rho_ref * (rho / self.rho_ref) ** (self.gamma - 1)

    def P_theta(self, rho, theta):
        return self.R * rho * np.ones_like(np.asarray(theta, dtype=float))

    def P_rho_rho(self, rho, theta):
        g = self.gamma
        return self.B * g * (g - 1) / self.rho_ref**2 * (rho / self.rho_ref) ** (g - 2)

    def P_rho_theta(self, rho, theta):
        return self.R * np.ones_like(np.asarray(rho, dtype=float))

    def P_theta_theta(self, rho, theta):
        return np.zeros_like(np.asarray(rho, dtype=float))


def make_eos(kind: str, **kwargs) -> EquationOfState:
    if kind == "ideal-gas":
        return IdealGas(**kwargs)
    if kind == "stiffened-gas":
        return StiffenedGas(**kwargs)
    raise ValueError(f"unknown EOS kind {kind!r}")


# -- admissible rectangle ----------------------------------------------------

ADMISSIBLE_MARGIN = 0.1  # fractional widening applied before raising


def check_admissible(rho, theta, params: PhysParams, margin: float = ADMISSIBLE_MARGIN,
                     what: str = "state") -> None:
    """Require (rho, theta) inside the half-to-threehalves rectangle, widened
    by ``margin`` times the reference values."""
    rb, tb = params.rho_bar, params.theta_bar
    lo_r, hi_r = (0.5 - margin) * rb, (1.5 + margin) * rb
    lo_t, hi_t = (0.5 - margin) * tb, (1.5 + margin) * tb
    rmin, rmax = float(np.min(rho)), float(np.max(rho))
    tmin, tmax = float(np.min(theta)), float(np.max(theta))
    if rmin < lo_r or rmax > hi_r or tmin < lo_t or tmax > hi_t:
        raise OutOfAdmissibleRange(
            f"{what}: rho in [{rmin:.4g}, {rmax:.4g}], theta in [{tmin:.4g}, {tmax:.4g}] "
            f"outside [{lo_r:.4g}, {hi_r:.4g}] x [{lo_t:.4g}, {hi_t:.4g}]")


def eos_eval(eos: EquationOfState, P, theta, params: PhysParams):
    """Inverse-map evaluation (P, theta) -> (rho, rho_P, rho_theta)."""
    rho = eos.rho_of(P, theta, guess=params.rho_bar)
    check_admissible(rho, theta, params, what="eos_eval")
    P_rho = eos.P_rho(rho, theta)
    P_theta = eos.P_theta(rho, theta)
    return rho, 1.0 / P_rho, -P_theta / P_rho


# -- stationary-problem coefficients ----------------------------------------


@dataclass(frozen=True)
class StationaryCoeffs:
    """gamma1/gamma2 at the reference state plus the eta coefficient maps."""

    gamma1: float
    gamma2: float
    eta1: Callable
    eta2: Callable
    eta3: Callable
    eta1_bar: float
    eta2_bar: float
    eta3_bar: float
    P_bar: float


def stationary_coeffs(params: PhysParams, eos: EquationOfState) -> StationaryCoeffs:
    rb, tb = params.rho_bar, params.theta_bar
    P_bar = float(eos.pressure(rb, tb))
    rho_P_bar = float(1.0 / eos.P_rho(rb, tb))
    rho_t_bar = float(-eos.P_theta(rb, tb) / eos.P_rho(rb, tb))
    gamma1 = rb * rho_P_bar
    gamma2 = rb * rho_t_bar

    def _parts(rho, theta):
        P_rho = eos.P_rho(rho, theta)
        P_theta = eos.P_theta(rho, theta)
        rho_P = 1.0 / P_rho
        rho_t = -P_theta / P_rho
        return rho_P, rho_t

    def eta1(rho, theta):
        rho_P, rho_t = _parts(rho, theta)
        return rho * params.c_v - theta * rho_t**2 / (rho * rho_P)

    def eta2(rho, theta):
        _, rho_t = _parts(rho, theta)
        return theta * rho_t / rho

    def eta3(rho, theta):
        rho_P, rho_t = _parts(rho, theta)
        return theta * rho_t / (rho * rho_P)

    return StationaryCoeffs(
        gamma1=gamma1, gamma2=gamma2,
        eta1=eta1, eta2=eta2, eta3=eta3,
        eta1_bar=float(eta1(rb, tb)), eta2_bar=float(eta2(rb, tb)),
        eta3_bar=float(eta3(rb, tb)), P_bar=P_bar)


# -- evolution-problem coefficients ------------------------------------------


class EvolutionCoeffs:
    """Coefficient maps A, B, D, E, A_hat, A_tilde, B_tilde of (rho, theta)
    and their exact secant splittings against a base state."""

    def __init__(self, params: PhysParams, eos: EquationOfState):
        self.params = params
        self.eos = eos

    # pointwise values -----------------------------------------------------

    def A(self, rho, theta):
        return self.eos.P_rho(rho, theta) / rho

    def B(self, rho, theta):
        return self.eos.P_theta(rho, theta) / rho

    def D(self, rho, theta=None):
        return 1.0 / (self.params.c_v * rho)

    def E(self, rho, theta):
        return theta * self.eos.P_theta(rho, theta) / (self.params.c_v * rho)

    def A_hat(self, rho, theta):
        return rho / self.eos.P_rho(rho, theta)

    def A_tilde(self, rho, theta):
        return rho**2 / self.eos.P_rho(rho, theta)

    def B_tilde(self, rho, theta):
        return self.params.c_v * rho**2 / (theta * self.eos.P_rho(rho, theta))

    # partial derivatives (for the secant quadrature) ------------------------

    def A_rho(self, rho, theta):
        return self.eos.P_rho_rho(rho, theta) / rho - self.eos.P_rho(rho, theta) / rho**2

    def A_theta(self, rho, theta):
        return self.eos.P_rho_theta(rho, theta) / rho

    def B_rho(self, rho, theta):
        return self.eos.P_rho_theta(rho, theta) / rho - self.eos.P_theta(rho, theta) / rho**2

    def B_theta(self, rho, theta):
        return self.eos.P_theta_theta(rho, theta) / rho

    def D_rho(self, rho, theta=None):
        return -1.0 / (self.params.c_v * rho**2)

    def E_rho(self, rho, theta):
        cv = self.params.c_v
        return theta * (self.eos.P_rho_theta(rho, theta) / (cv * rho)
                        - self.eos.P_theta(rho, theta) / (cv * rho**2))

    def E_theta(self, rho, theta):
        cv = self.params.c_v
        return (self.eos.P_theta(rho, theta) + theta * self.eos.P_theta_theta(rho, theta)) / (cv * rho)

    # secant factors ---------------------------------------------------------

    def _secant(self, d_rho, d_theta, rho0, theta0, sig, var):
        """Integral means so that F(rho0+sig, theta0+var) - F(rho0, theta0)
        equals fac_rho*sig + fac_theta*var exactly."""
        fac_r = np.zeros_like(np.asarray(rho0, dtype=float) + np.zeros_like(sig))
        for s, w in zip(_GL_X, _GL_W):
            fac_r = fac_r + w * d_rho(rho0 + s * sig, theta0 + var)
        fac_t = None
        if d_theta is not None:
            fac_t = np.zeros_like(fac_r)
            for s, w in zip(_GL_X, _GL_W):
                fac_t = fac_t + w * d_theta(rho0, theta0 + s * var)
        return fac_r, fac_t

    def secant_factors(self, rho0, theta0, sig, var):
        """All difference factors against the base (rho0, theta0):
        returns dict with A1, A2, B1, B2, E1, E2, D1."""
        A1, A2 = self._secant(self.A_rho, self.A_theta, rho0, theta0, sig, var)
        B1, B2 = self._secant(self.B_rho, self.B_theta, rho0, theta0, sig, var)
        E1, E2 = self._secant(self.E_rho, self.E_theta, rho0, theta0, sig, var)
        D1, _ = self._secant(self.D_rho, None, rho0, theta0, sig, var)
        return {"A1": A1, "A2": A2, "B1": B1, "B2": B2, "E1": E1, "E2": E2, "D1": D1}


def evolution_coeffs(params: PhysParams, eos: EquationOfState) -> EvolutionCoeffs:
    return EvolutionCoeffs(params, eos)


def coefficient_extremes(params: PhysParams, eos: EquationOfState, samples: int = 32):
    """B0/B1: extremes of {A_hat, A_tilde, B_tilde, 1} over the admissible box."""
    ec = EvolutionCoeffs(params, eos)
    r = np.linspace(0.5 * params.rho_bar, 1.5 * params.rho_bar, samples)
    t = np.linspace(0.5 * params.theta_bar, 1.5 * params.theta_bar, samples)
    R, T = np.meshgrid(r, t, indexing="ij")
    vals = np.stack([ec.A_hat(R, T), ec.A_tilde(R, T), ec.B_tilde(R, T), np.ones_like(R)])
    return float(np.min(vals)), float(np.max(vals))


# -- stress tensors and heating ---------------------------------------------


def strain_tensor(grid: SpectralGrid, v: np.ndarray) -> np.ndarray:
    """d_ij(v) = (d_i v_j + d_j v_i)/2, shape (dim, dim, ...)."""
    gv = grid.gradient_tensor(v)  # gv[i, j] = d_i v_j
    return 0.5 * (gv + np.swapaxes(gv, 0, 1))


def viscous_stress(grid: SpectralGrid, v: np.ndarray, pressure: np.ndarray,
                   params: PhysParams) -> np.ndarray:
    """S_ij = (mu' div v - P) delta_ij + 2 mu d_ij(v)."""
    d = strain_tensor(grid, v)
    S = 2 * params.mu * d
    diag = params.mu_prime * grid.div(v) - pressure
    for i in range(grid.dim):
        S[i, i] += diag
    return S


def korteweg_stress(grid: SpectralGrid, rho: np.ndarray, params: PhysParams) -> np.ndarray:
    """K_ij = (kappa/2)(lap(rho^2) - |grad rho|^2) delta_ij - kappa d_i rho d_j rho."""
    k = params.kappa
    grho = grid.grad(rho)
    lap_rho2 = grid.laplacian(grid.pmul(rho, rho))
    grad2 = grid.dealias(sum(grho[i] * grho[i] for i in range(grid.dim)))
    K = np.empty((grid.dim, grid.dim) + grid.shape)
    diag = 0.5 * k * (lap_rho2 - grad2)
    for i in range(grid.dim):
        for j in range(grid.dim):
            K[i, j] = -k * grid.pmul(grho[i], grho[j])
            if i == j:
                K[i, j] += diag
    return K


def div_tensor(grid: SpectralGrid, T: np.ndarray) -> np.ndarray:
    """(div T)_i = sum_j d_j T_ij."""
    out = np.zeros((grid.dim,) + grid.shape)
    for i in range(grid.dim):
        for j in range(grid.dim):
            out[i] += grid.ifft(1j * grid.xi[j] * grid.fft(T[i, j]))
    return out


def dissipation(grid: SpectralGrid, v: np.ndarray, params: PhysParams) -> np.ndarray:
    """Psi(v) = mu' (div v)^2 + 2 mu Dv : Dv; nonnegative when mu' >= 0."""
    d = strain_tensor(grid, v)
    dv = grid.div(v)
    dd = sum(d[i, j] * d[i, j] for i in range(grid.dim) for j in range(grid.dim))
    return grid.dealias(params.mu_prime * dv * dv + 2 * params.mu * dd)


def capillary_heating(grid: SpectralGrid, rho: np.ndarray, v: np.ndarray,
                      params: PhysParams) -> np.ndarray:
    """Phi(rho, v) = kappa(|grad rho|^2/2 + rho lap rho) div v
    - kappa (grad rho x grad rho) : grad v."""
    k = params.kappa
    grho = grid.grad(rho)
    lap = grid.laplacian(rho)
    dv = grid.div(v)
    gv = grid.gradient_tensor(v)  # gv[i, j] = d_i v_j
    grad2 = sum(grho[i] * grho[i] for i in range(grid.dim))
    contraction = sum(grho[i] * grho[j] * gv[i, j]
                      for i in range(grid.dim) for j in range(grid.dim))
    return grid.dealias(k * (0.5 * grad2 + rho * lap) * dv - k * contraction)
