"""Construction and measurement of the external data (mass source G, force F,
energy source H) with their divergence-form decompositions, plus the
manufactured-solution oracles.

The decomposition parts (G1, G2), (F1, F2), (H1, H2) are generated first as
smooth envelope-modulated fields decaying algebraically from the box center;
G, F, H are then defined by discrete reassembly, so G = div G1 + G2 etc.
holds exactly by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equations import stationary_residual, stationary_scales, evolution_tendencies
from .errors import BoxTooSmall
from .model import EquationOfState, PhysParams, check_admissible
from .norms import NormReport, grad_max, grad_pow_sq, lp_norm, tail_mask, weight
from .spectral import SpectralGrid, random_band_scalar


@dataclass
class ForcingSpec:
    """Construction recipe for the external data."""

    amplitude: float = 1e-3
    decay: float = 4.0          # algebraic envelope exponent
    width_frac: float = 0.1     # envelope core radius as a fraction of L
    kmin: int = 1
    kmax: int = 2               # modulation band
    active: tuple = ("G", "F", "H")
    boundary_tol: float = 0.01  # envelope-at-face limit before BoxTooSmall


@dataclass
class ForcingData:
    grid: SpectralGrid
    G: np.ndarray
    F: np.ndarray
    H: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    F1: np.ndarray  # (dim, dim) tensor; F = div F1 + F2 row-wise
    F2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray

    @classmethod
    def zero(cls, grid: SpectralGrid):
        s, d = grid.shape, grid.dim
        return cls(grid, np.zeros(s), np.zeros((d,) + s), np.zeros(s),
                   np.zeros((d,) + s), np.zeros(s), np.zeros((d, d) + s),
                   np.zeros((d,) + s), np.zeros((d,) + s), np.zeros(s))

    def scaled(self, c: float) -> "ForcingData":
        return ForcingData(self.grid, c * self.G, c * self.F, c * self.H,
                           c * self.G1, c * self.G2, c * self.F1, c * self.F2,
                           c * self.H1, c * self.H2)

    def reassembly_residual(self) -> float:
        g = self.grid
        errs = [np.max(np.abs(self.G - g.div(self.G1) - self.G2)),
                np.max(np.abs(self.H - g.div(self.H1) - self.H2))]
        for j in range(g.dim):
            errs.append(np.max(np.abs(self.F[j] - g.div(self.F1[j]) - self.F2[j])))
        return float(max(errs))


def _envelope(grid: SpectralGrid, spec: ForcingSpec) -> np.ndarray:
    """Algebraic decay from the box center, wound down to exactly zero at the
    boundary by a C-infinity bump window (keeps spectral derivatives clean)."""
    r = grid.radius
    s = spec.width_frac * grid.length
    core = (1.0 + (r / s) ** 2) ** (-spec.decay / 2.0)
    face = (1.0 + (grid.length / 2 / s) ** 2) ** (-spec.decay / 2.0)
    if face > spec.boundary_tol:
        raise BoxTooSmall(
            f"envelope at the boundary is {face:.3e} of the peak "
            f"(> {spec.boundary_tol}); enlarge the box or sharpen the decay")
    r0, r1 = 0.6 * grid.length / 2, 0.95 * grid.length / 2
    t = np.clip((r - r0) / (r1 - r0), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        win = np.where(t <= 0.0, 1.0,
                       np.where(t >= 1.0, 0.0,
                                np.exp(1.0 - 1.0 / np.maximum(1.0 - t**2, 1e-300))))
    return core * win


def _part(grid, spec, rng, env):
    u = env * random_band_scalar(grid, rng, kmin=spec.kmin, kmax=spec.kmax,
                                 amplitude=spec.amplitude)
    return grid.dealias(u)


def build_forcing(grid: SpectralGrid, spec: ForcingSpec,
                  rng: np.random.Generator) -> ForcingData:
    """Generate decomposition parts first, then define G, F, H by reassembly."""
    d = grid.dim
    env = _envelope(grid, spec)
    fd = ForcingData.zero(grid)
    # The remainder parts are mean-subtracted: on the torus a net mass, momentum
    # or heat input admits no steady balance (the box stands in for decay at
    # infinity), and the solver would otherwise have to project a constant off
    # the data, leaving a spurious uniform residual.
    if "G" in spec.active:
        fd.G1 = np.stack([_part(grid, spec, rng, env) for _ in range(d)])
        g2 = _part(grid, spec, rng, env)
        fd.G2 = g2 - np.mean(g2)
    if "F" in spec.active:
        fd.F1 = np.stack([np.stack([_part(grid, spec, rng, env) for _ in range(d)])
                          for _ in range(d)])
        f2 = np.stack([_part(grid, spec, rng, env) for _ in range(d)])
        fd.F2 = f2 - np.mean(f2, axis=(1, 2, 3), keepdims=True)
    if "H" in spec.active:
        fd.H1 = np.stack([_part(grid, spec, rng, env) for _ in range(d)])
        h2 = _part(grid, spec, rng, env)
        fd.H2 = h2 - np.mean(h2)
    fd.G = grid.div(fd.G1) + fd.G2
    fd.F = np.stack([grid.div(fd.F1[j]) + fd.F2[j] for j in range(d)])
    fd.H = grid.div(fd.H1) + fd.H2
    return fd


# -- decay-norm measurement ---------------------------------------------------


def dump_forcing(fd: ForcingData, directory) -> None:
    """Materialize every component and witness as field snapshots."""
    from pathlib import Path
    from .snapshot import write_field

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = fd.grid
    axes = "xyz"[:g.dim]
    write_field(directory / "G.fld", g, fd.G, "G")
    write_field(directory / "G2.fld", g, fd.G2, "G2")
    write_field(directory / "H.fld", g, fd.H, "H")
    write_field(directory / "H2.fld", g, fd.H2, "H2")
    for j, ax in enumerate(axes):
        write_field(directory / f"F_{ax}.fld", g, fd.F[j], f"F_{ax}")
        write_field(directory / f"F2_{ax}.fld", g, fd.F2[j], f"F2_{ax}")
        write_field(directory / f"G1_{ax}.fld", g, fd.G1[j], f"G1_{ax}")
        write_field(directory / f"H1_{ax}.fld", g, fd.H1[j], f"H1_{ax}")
        for i, ax2 in enumerate(axes):
            write_field(directory / f"F1_{ax2}{ax}.fld", g, fd.F1[j][i],
                        f"F1_{ax2}{ax}")


def load_forcing(grid: SpectralGrid, directory) -> ForcingData:
    """Inverse of dump_forcing."""
    from pathlib import Path
    from .snapshot import read_field

    directory = Path(directory)
    axes = "xyz"[:grid.dim]

    def rd(name):
        return read_field(directory / f"{name}.fld")[0]

    fd = ForcingData.zero(grid)
    fd.G, fd.G2, fd.H, fd.H2 = rd("G"), rd("G2"), rd("H"), rd("H2")
    fd.F = np.stack([rd(f"F_{ax}") for ax in axes])
    fd.F2 = np.stack([rd(f"F2_{ax}") for ax in axes])
    fd.G1 = np.stack([rd(f"G1_{ax}") for ax in axes])
    fd.H1 = np.stack([rd(f"H1_{ax}") for ax in axes])
    fd.F1 = np.stack([np.stack([rd(f"F1_{ax2}{ax}") for ax2 in axes])
                      for ax in axes])
    return fd


def _weighted_deriv_l2(grid, u, order, wpow):
    total = np.sum(wpow**2 * grad_pow_sq(grid, u, order)) * grid.dV
    tail = np.sum((wpow**2 * grad_pow_sq(grid, u, order))[tail_mask(grid)]) * grid.dV
    return float(np.sqrt(total)), (tail / total if total > 0 else 0.0)


def component_norm_L(grid: SpectralGrid, U, U1, U2) -> tuple[float, float]:
    """Decay norm of one source component with its divergence witnesses:
    sum_{nu=1..3} ||w^(nu+1) grad^nu U|| + ||w^3 (U, grad U)||_inf
    + ||w^2 U1||_inf + ||U2||_L1.  Returns (value, boundary tail fraction)."""
    w = weight(grid)
    total, tails = 0.0, [0.0]
    for nu in range(1, 4):
        val, tl = _weighted_deriv_l2(grid, U, nu, w ** (nu + 1))
        total += val
        tails.append(tl)
    total += max(grad_max(grid, U, 0, w**3), grad_max(grid, U, 1, w**3))
    total += grad_max(grid, U1, 0, w**2)
    total += lp_norm(grid, U2, 1.0)
    return total, max(tails)


def forcing_norm_L(grid: SpectralGrid, fd: ForcingData,
                   report: NormReport | None = None) -> float:
    """Sum of the component decay norms of (G, F, H)."""
    gval, gtail = component_norm_L(grid, fd.G, fd.G1, fd.G2)
    fval, ftail = component_norm_L(grid, fd.F, fd.F1, fd.F2)
    hval, htail = component_norm_L(grid, fd.H, fd.H1, fd.H2)
    total = gval + fval + hval
    if report is not None:
        report.add("L_script_G", gval, gtail)
        report.add("L_script_F", fval, ftail)
        report.add("L_script_H", hval, htail)
        report.add("L_script", total, max(gtail, ftail, htail))
    return total


@dataclass
class ForcingSmallness:
    """The smallness quantities the solver budget is checked against."""

    K0: float
    K: float
    K1: float
    K2: float
    K3: float
    G_weighted_L1: float
    norm_L: float
    boundary_tail: float
    budget: float = field(init=False)

    def __post_init__(self):
        self.budget = self.K + self.G_weighted_L1

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("K0", "K", "K1", "K2", "K3", "G_weighted_L1", "norm_L",
                 "boundary_tail", "budget")}


def forcing_smallness(grid: SpectralGrid, fd: ForcingData) -> ForcingSmallness:
    w = weight(grid)
    tails = [0.0]

    def joint_l2(order, wpow):
        sq = (grad_pow_sq(grid, fd.G, order) + grad_pow_sq(grid, fd.F, order)
              + grad_pow_sq(grid, fd.H, order))
        total = np.sum(wpow**2 * sq) * grid.dV
        tails.append(float(np.sum((wpow**2 * sq)[tail_mask(grid)]) * grid.dV
                           / total) if total > 0 else 0.0)
        return float(np.sqrt(total))

    def gh_l2(order, wpow):
        sq = grad_pow_sq(grid, fd.G, order) + grad_pow_sq(grid, fd.H, order)
        return float(np.sqrt(np.sum(wpow**2 * sq) * grid.dV))

    K0 = sum(joint_l2(nu, w ** (nu + 1)) for nu in range(4)) + gh_l2(4, w**4)
    rep = NormReport()
    normL = forcing_norm_L(grid, fd, report=rep)
    K = normL + gh_l2(4, w**4)
    K1 = (max(grad_max(grid, fd.F, 0, w**3), grad_max(grid, fd.G, 0, w**3),
              grad_max(grid, fd.F, 1, w**3), grad_max(grid, fd.G, 1, w**3))
          + grad_max(grid, fd.F1, 0, w**2) + lp_norm(grid, fd.F2, 1.0))
    K2 = (grad_max(grid, fd.G, 0, w**2)
          + max(grad_max(grid, fd.G, 1, w**3), grad_max(grid, fd.G, 2, w**3)))
    K3 = (max(grad_max(grid, fd.G, 0, w**3), grad_max(grid, fd.H, 0, w**3),
              grad_max(grid, fd.G, 1, w**3), grad_max(grid, fd.H, 1, w**3))
          + max(grad_max(grid, fd.G1, 0, w**2), grad_max(grid, fd.H1, 0, w**2))
          + lp_norm(grid, np.stack([fd.G2, fd.H2]), 1.0))
    g_l1 = lp_norm(grid, fd.G / w, 1.0)
    return ForcingSmallness(K0=K0, K=K, K1=K1, K2=K2, K3=K3,
                            G_weighted_L1=g_l1, norm_L=normL,
                            boundary_tail=max(max(tails), max(rep.tails.values())))


# -- manufactured solutions ---------------------------------------------------


def mms_stationary(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                   P_star, v_star, theta_star):
    """Forcing that makes (P*, v*, theta*) an exact steady state, plus the
    back-substitution residual report."""
    from .model import capillary_heating, dissipation  # local to avoid cycle noise

    rho = eos.rho_of(P_star, theta_star, guess=params.rho_bar)
    check_admissible(rho, theta_star, params, what="mms_stationary")
    mu, mup, kap, cv = params.mu, params.mu_prime, params.kappa, params.c_v

    G = grid.div(grid.pmul(rho, v_star))
    adv_v = np.stack([sum(grid.pmul(v_star[i], grid.grad(v_star[j])[i])
                          for i in range(grid.dim)) for j in range(grid.dim)])
    P = eos.pressure(rho, theta_star)
    visc = mu * grid.laplacian(v_star) + (mu + mup) * grid.grad_div(v_star) - grid.grad(P)
    F = (adv_v - np.stack([grid.pmul(1.0 / rho, visc[j]) for j in range(grid.dim)])
         - kap * grid.grad_laplacian(rho)
         + np.stack([grid.pmul(v_star[j] / rho, G) for j in range(grid.dim)]))

    P_theta = eos.P_theta(rho, theta_star)
    adv_t = sum(grid.pmul(v_star[i], grid.grad(theta_star)[i]) for i in range(grid.dim))
    psi = dissipation(grid, v_star, params)
    phi = capillary_heating(grid, rho, v_star, params)
    v2 = grid.dealias(sum(v_star[i] ** 2 for i in range(grid.dim)))
    H = (grid.pmul(rho * cv, adv_t) + grid.pmul(theta_star * P_theta, grid.div(v_star))
         - params.alpha_tilde * grid.laplacian(theta_star) - psi - phi
         - 0.5 * grid.pmul(v2, G) + cv * grid.pmul(G, theta_star))

    fd = ForcingData.zero(grid)
    fd.G, fd.F, fd.H = G, F, H
    fd.G2, fd.F2, fd.H2 = G.copy(), F.copy(), H.copy()

    res = stationary_residual(grid, params, eos, rho, v_star, theta_star, G, F, H)
    scales = stationary_scales(grid, params, eos, rho, v_star, theta_star, G, F, H)
    rel = tuple(grid.l2(r) / max(s, 1e-300) for r, s in zip(res, scales))
    return fd, {"mass": rel[0], "momentum": rel[1], "energy": rel[2]}


def mms_evolution(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                  rho, v, theta, rho_t, v_t, theta_t):
    """Sources (G, F, H) balancing the evolution system for prescribed fields
    and their (analytically supplied) time derivatives."""
    check_admissible(rho, theta, params, what="mms_evolution")
    from .model import capillary_heating, dissipation

    mu, mup, kap, cv = params.mu, params.mu_prime, params.kappa, params.c_v
    G = rho_t + grid.div(grid.pmul(rho, v))
    adv_v = np.stack([sum(grid.pmul(v[i], grid.grad(v[j])[i]) for i in range(grid.dim))
                      for j in range(grid.dim)])
    P = eos.pressure(rho, theta)
    force = (mu * grid.laplacian(v) + (mu + mup) * grid.grad_div(v) - grid.grad(P)
             + kap * np.stack([grid.pmul(rho, grid.grad_laplacian(rho)[j])
                               for j in range(grid.dim)]))
    F = (v_t + adv_v - np.stack([grid.pmul(1.0 / rho, force[j]) for j in range(grid.dim)])
         + np.stack([grid.pmul(v[j] / rho, G) for j in range(grid.dim)]))

    P_theta = eos.P_theta(rho, theta)
    adv_t = sum(grid.pmul(v[i], grid.grad(theta)[i]) for i in range(grid.dim))
    psi = dissipation(grid, v, params)
    phi = capillary_heating(grid, rho, v, params)
    v2 = grid.dealias(sum(v[i] * v[i] for i in range(grid.dim)))
    H = (grid.pmul(rho * cv, theta_t + adv_t) + grid.pmul(theta * P_theta, grid.div(v))
         - params.alpha_tilde * grid.laplacian(theta) - psi - phi
         - 0.5 * grid.pmul(v2, G) + cv * grid.pmul(G, theta))

    tend = evolution_tendencies(grid, params, eos, rho, v, theta, G, F, H)
    res = (grid.l2(tend[0] - rho_t), grid.l2(tend[1] - v_t), grid.l2(tend[2] - theta_t))
    scale = max(grid.l2(rho_t), grid.l2(v_t), grid.l2(theta_t),
                grid.l2(G), grid.l2(F), grid.l2(H), 1e-30)
    return (G, F, H), {"mass": res[0] / scale, "momentum": res[1] / scale,
                       "energy": res[2] / scale}
