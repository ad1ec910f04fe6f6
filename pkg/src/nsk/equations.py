"""Direct evaluators of the governing equations.

These are the single source of truth the solvers are checked against: the
steady balance residuals and the time-derivative right-hand sides of the
compressible Korteweg system in primitive variables (density, velocity,
temperature).  Solvers assemble their own reformulated operators; tests and
reports always come back here.
"""

from __future__ import annotations

import numpy as np

from .model import EquationOfState, PhysParams, capillary_heating, dissipation
from .spectral import SpectralGrid


def stationary_residual(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                        rho, v, theta, G, F, H):
    """Residual fields of the steady system (mass, momentum, energy).

    Momentum and energy equations are taken in their velocity / temperature
    forms, i.e. divided through by density where the system does so.
    """
    mu, mup, kap = params.mu, params.mu_prime, params.kappa
    P = eos.pressure(rho, theta)

    r_mass = grid.div(grid.pmul(rho, v)) - G

    adv_v = np.stack([sum(grid.pmul(v[i], grid.grad(v[j])[i]) for i in range(grid.dim))
                      for j in range(grid.dim)])
    visc = mu * grid.laplacian(v) + (mup + mu) * grid.grad_div(v) - grid.grad(P)
    r_mom = (adv_v - np.stack([grid.pmul(1.0 / rho, visc[j]) for j in range(grid.dim)])
             - kap * grid.grad_laplacian(rho) - F
             + np.stack([grid.pmul(v[j] / rho, G) for j in range(grid.dim)]))

    cv = params.c_v
    P_theta = eos.P_theta(rho, theta)
    adv_t = sum(grid.pmul(v[i], grid.grad(theta)[i]) for i in range(grid.dim))
    psi = dissipation(grid, v, params)
    phi = capillary_heating(grid, rho, v, params)
    v2 = grid.dealias(sum(v[i] * v[i] for i in range(grid.dim)))
    rhs = (params.alpha_tilde * grid.laplacian(theta) + psi + phi + H
           + 0.5 * grid.pmul(v2, G) - cv * grid.pmul(G, theta))
    r_en = (adv_t + grid.pmul(theta * P_theta / (rho * cv), grid.div(v))
            - grid.pmul(1.0 / (rho * cv), rhs))
    return r_mass, r_mom, r_en


def relative_residuals(grid: SpectralGrid, res, scales):
    """L2 of each residual relative to the L2 scale of its equation's terms."""
    return tuple(grid.l2(r) / max(s, 1e-300) for r, s in zip(res, scales))


def stationary_scales(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                      rho, v, theta, G, F, H):
    """Per-equation magnitude references for relative residuals: the largest
    L2 norm among the terms entering each balance."""
    mu, mup, kap = params.mu, params.mu_prime, params.kappa
    P = eos.pressure(rho, theta)
    s1 = max(grid.l2(grid.div(grid.pmul(rho, v))), grid.l2(G))
    s2 = max(grid.l2(grid.grad(P) / np.mean(rho)), grid.l2(F),
             kap * grid.l2(grid.grad_laplacian(rho)),
             mu * grid.l2(grid.laplacian(v)) / np.mean(rho))
    cv = params.c_v
    s3 = max(grid.l2(params.alpha_tilde * grid.laplacian(theta)) / (np.mean(rho) * cv),
             grid.l2(H) / (np.mean(rho) * cv),
             grid.l2(sum(grid.pmul(v[i], grid.grad(theta)[i]) for i in range(grid.dim))),
             grid.l2(grid.div(v)) * np.mean(theta * eos.P_theta(rho, theta)) / (np.mean(rho) * cv))
    return s1, s2, s3


def evolution_tendencies(grid: SpectralGrid, params: PhysParams, eos: EquationOfState,
                         rho, v, theta, G, F, H):
    """(rho_t, v_t, theta_t) of the primitive-variable evolution system."""
    mu, mup, kap = params.mu, params.mu_prime, params.kappa
    cv = params.c_v
    P = eos.pressure(rho, theta)

    rho_t = G - grid.div(grid.pmul(rho, v))

    adv_v = np.stack([sum(grid.pmul(v[i], grid.grad(v[j])[i]) for i in range(grid.dim))
                      for j in range(grid.dim)])
    force = (mu * grid.laplacian(v) + (mu + mup) * grid.grad_div(v) - grid.grad(P)
             + kap * np.stack([grid.pmul(rho, grid.grad_laplacian(rho)[j])
                               for j in range(grid.dim)]))
    v_t = (np.stack([grid.pmul(1.0 / rho, force[j]) for j in range(grid.dim)]) + F
           - np.stack([grid.pmul(v[j] / rho, G) for j in range(grid.dim)]) - adv_v)

    P_theta = eos.P_theta(rho, theta)
    psi = dissipation(grid, v, params)
    phi = capillary_heating(grid, rho, v, params)
    v2 = grid.dealias(sum(v[i] * v[i] for i in range(grid.dim)))
    rhs = (params.alpha_tilde * grid.laplacian(theta) + psi + phi + H
           + 0.5 * grid.pmul(v2, G) - cv * grid.pmul(G, theta))
    adv_t = sum(grid.pmul(v[i], grid.grad(theta)[i]) for i in range(grid.dim))
    theta_t = (grid.pmul(1.0 / (rho * cv), rhs) - adv_t
               - grid.pmul(theta * P_theta / (rho * cv), grid.div(v)))
    return rho_t, v_t, theta_t
