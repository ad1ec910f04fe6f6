"""Weighted Sobolev and decay norms on the periodic box.

The polynomial weights (1 + |x|) measure distance from the box center and
are clamped at the half-diagonal, a declared compromise between the
whole-space decay weights and periodicity.  Every weighted entry also
reports the fraction of its mass sitting outside the inscribed ball
(`boundary tail`), which is the part the periodic truncation cannot
represent honestly.

Gradient magnitudes |grad^k u| are the multiplicity-weighted sums over all
mixed partials, so that the L2 entries coincide with the Fourier-side
|xi|^(2k) sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DecompositionMismatch, DerivativeBudgetExceeded
from .spectral import SpectralGrid

DERIVATIVE_BUDGET = 6


@lru_cache(maxsize=None)
def multi_indices(order: int, dim: int):
    """All multi-indices |alpha| = order with multinomial coefficients."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            alpha = prefix + (remaining,)
            coeff = math.factorial(order)
            for a in alpha:
                coeff //= math.factorial(a)
            out.append((alpha, coeff))
            return
        for a in range(remaining + 1):
            rec(prefix + (a,), remaining - a, slots - 1)

    rec((), order, dim)
    return tuple(out)


def weight(grid: SpectralGrid) -> np.ndarray:
    """1 + min(|x|, half-diagonal), |x| from the box center."""
    return 1.0 + np.minimum(grid.radius, grid.half_diagonal)


def tail_mask(grid: SpectralGrid) -> np.ndarray:
    return grid.radius > grid.length / 2


def _check_budget(order: int):
    if order > DERIVATIVE_BUDGET:
        raise DerivativeBudgetExceeded(
            f"derivative order {order} exceeds budget {DERIVATIVE_BUDGET}")


def grad_pow_sq(grid: SpectralGrid, u: np.ndarray, order: int) -> np.ndarray:
    """Pointwise |grad^order u|^2 (multiplicity-weighted); u scalar or stacked."""
    _check_budget(order)
    if u.ndim > grid.dim:
        return sum(grad_pow_sq(grid, u[c], order) for c in range(u.shape[0]))
    if order == 0:
        return u * u
    out = np.zeros(grid.shape)
    for alpha, coeff in multi_indices(order, grid.dim):
        d = grid.deriv(u, alpha)
        out += coeff * d * d
    return out


def grad_fields(grid: SpectralGrid, u: np.ndarray, order: int):
    """List of (coeff, d^alpha u) over |alpha| = order for a scalar u."""
    _check_budget(order)
    return [(coeff, grid.deriv(u, alpha)) for alpha, coeff in multi_indices(order, grid.dim)]


def deriv_table(grid: SpectralGrid, u: np.ndarray, max_order: int) -> dict:
    """All mixed partials d^alpha u for |alpha| <= max_order, keyed by alpha.

    Transforms u once; each entry costs one inverse transform."""
    _check_budget(max_order)
    uh = grid.fft(u)
    out = {}
    for order in range(max_order + 1):
        for alpha, _ in multi_indices(order, grid.dim):
            mult = uh
            for j, a in enumerate(alpha):
                if a:
                    mult = mult * (1j * grid.xi[j]) ** a
            out[alpha] = grid.ifft(mult)
    return out


def grad_max(grid: SpectralGrid, u: np.ndarray, order: int,
             weight_field: np.ndarray | None = None) -> float:
    """Grid max over components of |weight * d^alpha u|, |alpha| = order.

    A lower bound of the true sup; the refinement oracle in the tests bounds
    the gap.
    """
    _check_budget(order)
    if u.ndim > grid.dim:
        return max(grad_max(grid, u[c], order, weight_field) for c in range(u.shape[0]))
    w = 1.0 if weight_field is None else weight_field
    if order == 0:
        return float(np.max(np.abs(w * u)))
    best = 0.0
    for alpha, _ in multi_indices(order, grid.dim):
        best = max(best, float(np.max(np.abs(w * grid.deriv(u, alpha)))))
    return best


# -- plain Sobolev ------------------------------------------------------------


def sobolev_seminorm_sq(grid: SpectralGrid, u: np.ndarray, order: int) -> float:
    """||grad^order u||_{L2}^2 evaluated spectrally."""
    _check_budget(order)
    if u.ndim > grid.dim:
        return sum(sobolev_seminorm_sq(grid, u[c], order) for c in range(u.shape[0]))
    uh = grid.fft(u)
    ntot = grid.n**grid.dim
    s = np.sum(grid.mode_weight * grid.xi2**order * np.abs(uh) ** 2)
    return float(s * grid.dV / ntot)


def sobolev_norm(grid: SpectralGrid, u: np.ndarray, k: int) -> float:
    """H^k norm: sqrt(sum_{l<=k} ||grad^l u||^2)."""
    _check_budget(k)
    return math.sqrt(sum(sobolev_seminorm_sq(grid, u, l) for l in range(k + 1)))


def triple_norm(grid: SpectralGrid, sigma, v, vartheta, j: int, k: int, l: int) -> float:
    """||(sigma, v, theta)||_{j,k,l} = ||sigma||_j + ||v||_k + ||theta||_l."""
    return (sobolev_norm(grid, sigma, j) + sobolev_norm(grid, v, k)
            + sobolev_norm(grid, vartheta, l))


def lp_norm(grid: SpectralGrid, u: np.ndarray, p: float) -> float:
    return float((np.sum(np.abs(u) ** p) * grid.dV) ** (1.0 / p))


def weighted_l2(grid: SpectralGrid, fields_sq: np.ndarray, wpow_field: np.ndarray):
    """sqrt(int w^2 * fields_sq); returns (value, boundary-tail fraction)."""
    integrand = wpow_field**2 * fields_sq
    total = float(np.sum(integrand) * grid.dV)
    tail = float(np.sum(integrand[tail_mask(grid)]) * grid.dV)
    frac = tail / total if total > 0 else 0.0
    return math.sqrt(total), frac


# -- decay norms ---------------------------------------------------------------


@dataclass
class NormReport:
    """Named norm entries plus per-entry boundary-tail fractions."""

    entries: dict = field(default_factory=dict)
    tails: dict = field(default_factory=dict)

    def add(self, name: str, value: float, tail: float | None = None):
        self.entries[name] = float(value)
        if tail is not None:
            self.tails[name] = float(tail)

    def to_json(self) -> str:
        doc = dict(self.entries)
        doc["boundary_tails"] = dict(self.tails)
        return json.dumps(doc, indent=2, sort_keys=True)


def norm_I(grid: SpectralGrid, sigma: np.ndarray, k: int,
           report: NormReport | None = None, label: str = "I") -> float:
    """Decay norm for the pressure-type unknown:
    L6 + sum_{nu=1..k} ||w^nu (grad^nu, grad^nu+1, grad^nu+2) sigma||
    + ||w^2 sigma||_inf + ||w^2 grad sigma||_inf."""
    _check_budget(k + 2)
    w = weight(grid)
    total = lp_norm(grid, sigma, 6.0)
    tails = []
    for nu in range(1, k + 1):
        sq = (grad_pow_sq(grid, sigma, nu) + grad_pow_sq(grid, sigma, nu + 1)
              + grad_pow_sq(grid, sigma, nu + 2))
        val, tail = weighted_l2(grid, sq, w**nu)
        total += val
        tails.append(tail)
    total += grad_max(grid, sigma, 0, w**2)
    total += grad_max(grid, sigma, 1, w**2)
    if report is not None:
        report.add(f"{label}{k}", total, max(tails) if tails else 0.0)
    return total


def norm_Jhat(grid: SpectralGrid, u: np.ndarray) -> float:
    """L6 + ||w grad^0 u||_inf + ||w^2 grad u||_inf + ||w^2 grad^2 u||_inf."""
    w = weight(grid)
    return (lp_norm(grid, u, 6.0) + grad_max(grid, u, 0, w)
            + grad_max(grid, u, 1, w**2) + grad_max(grid, u, 2, w**2))


def norm_J(grid: SpectralGrid, v: np.ndarray, k: int,
           report: NormReport | None = None, label: str = "J") -> float:
    """Velocity decay norm: Jhat + sum_{nu=1..k} ||w^(nu-1) grad^nu v||."""
    _check_budget(k)
    w = weight(grid)
    total = norm_Jhat(grid, v)
    tails = []
    for nu in range(1, k + 1):
        val, tail = weighted_l2(grid, grad_pow_sq(grid, v, nu), w ** (nu - 1))
        total += val
        tails.append(tail)
    if report is not None:
        report.add(f"{label}{k}", total, max(tails) if tails else 0.0)
    return total


def norm_N(grid: SpectralGrid, vartheta: np.ndarray, k: int,
           report: NormReport | None = None, label: str = "N") -> float:
    """Temperature decay norm: Jhat + sum_{nu=1..k} ||w^(nu-1)(grad^nu, grad^nu+1)||."""
    _check_budget(k + 1)
    w = weight(grid)
    total = norm_Jhat(grid, vartheta)
    tails = []
    for nu in range(1, k + 1):
        sq = grad_pow_sq(grid, vartheta, nu) + grad_pow_sq(grid, vartheta, nu + 1)
        val, tail = weighted_l2(grid, sq, w ** (nu - 1))
        total += val
        tails.append(tail)
    if report is not None:
        report.add(f"{label}{k}", total, max(tails) if tails else 0.0)
    return total


def norm_Lambda(grid: SpectralGrid, sigma, v, vartheta, j: int, k: int, l: int,
                report: NormReport | None = None) -> float:
    """Sum of the three decay norms I^j(sigma) + J^k(v) + N^l(theta)."""
    total = (norm_I(grid, sigma, j) + norm_J(grid, v, k) + norm_N(grid, vartheta, l))
    if report is not None:
        report.add(f"Lambda_{j}{k}{l}", total)
    return total


def check_dot_Lambda(grid: SpectralGrid, v: np.ndarray, V1: np.ndarray,
                     V2: np.ndarray, eps: float,
                     reassembly_tol: float = 1e-10) -> bool:
    """Verify div v = div V1 + V2 and test the decay budget of the witnesses.

    Returns the membership verdict; raises DecompositionMismatch when the
    witnesses fail to reassemble div v.
    """
    dv = grid.div(v)
    recon = grid.div(V1) + V2
    scale = max(grid.l2(dv), grid.l2(recon), 1e-30)
    gap = grid.l2(dv - recon)
    if gap > reassembly_tol * max(scale, 1.0):
        raise DecompositionMismatch(
            f"div v reassembly residual {gap:.3e} exceeds {reassembly_tol:.1e}")
    w = weight(grid)
    budget = grad_max(grid, V1, 0, w**3) + lp_norm(grid, V2 / w, 1.0)
    return budget <= eps


def dot_lambda_budget(grid: SpectralGrid, V1: np.ndarray, V2: np.ndarray) -> float:
    """||w^3 V1||_inf + ||w^-1 V2||_L1, the witness part of the decay class."""
    w = weight(grid)
    return grad_max(grid, V1, 0, w**3) + lp_norm(grid, V2 / w, 1.0)


def state_norm_report(grid: SpectralGrid, sigma, v, vartheta,
                      density_dev=None) -> NormReport:
    """Full named report for a solution triple: the decay entries, the summed
    Sobolev triple (H_433) and, when the density deviation is supplied, the
    background-state norm (F_555)."""
    rep = NormReport()
    norm_I(grid, sigma, 4, report=rep)
    norm_J(grid, v, 5, report=rep)
    norm_N(grid, vartheta, 5, report=rep)
    norm_Lambda(grid, sigma, v, vartheta, 4, 5, 5, report=rep)
    rep.add("H_433", triple_norm(grid, sigma, v, vartheta, 4, 3, 3))
    if density_dev is not None:
        norm_F555(grid, density_dev, v, vartheta, report=rep)
    return rep


def norm_F555(grid: SpectralGrid, sigma_star, v_star, vartheta_star,
              report: NormReport | None = None) -> float:
    """Background-state norm: N-type entry for the density deviation plus
    J^5 / N^5 for velocity and temperature."""
    w = weight(grid)
    total = 0.0
    for nu in range(1, 6):
        sq = grad_pow_sq(grid, sigma_star, nu) + grad_pow_sq(grid, sigma_star, nu + 1)
        val, _ = weighted_l2(grid, sq, w ** (nu - 1))
        total += val
    total += grad_max(grid, sigma_star, 0, w)
    total += grad_max(grid, sigma_star, 1, w**2)
    total += grad_max(grid, sigma_star, 2, w**2)
    total += norm_J(grid, v_star, 5) + norm_N(grid, vartheta_star, 5)
    if report is not None:
        report.add("F_555", total)
    return total
