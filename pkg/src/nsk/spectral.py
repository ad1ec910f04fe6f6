"""Periodic pseudospectral grid: FFTs, derivatives, Helmholtz split, Fourier multipliers.

All fields are sampled on a uniform periodic lattice centered at the box
middle, so the coordinate arrays run over [-L/2, L/2).  Scalar fields are
ndarrays of shape ``grid.shape``; vector fields stack components along a
leading axis.  Real fields are kept in sample space; transforms use rfftn.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonZeroMean, ZeroModeSingular

_MEAN_TOL = 1e-11


class SpectralGrid:
    """Uniform periodic grid with cached wavenumbers and dealiasing mask.

    ``n`` points per axis (power of two, >= 8), box edge ``length``.
    ``dim`` is 3 for production; 1 and 2 are supported for debugging only.
    """

    def __init__(self, n: int, length: float, dim: int = 3):
        if n < 8 or (n & (n - 1)) != 0:
            raise ValueError(f"points per axis must be a power of two >= 8, got {n}")
        if dim not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")
        self.n = n
        self.length = float(length)
        self.dim = dim
        self.shape = (n,) * dim
        self.axes = tuple(range(dim))
        self.dx = self.length / n
        self.dV = self.dx**dim
        self.volume = self.length**dim

        x1 = -self.length / 2 + self.dx * np.arange(n)
        self.x = np.meshgrid(*([x1] * dim), indexing="ij")
        self.radius = np.sqrt(sum(xi**2 for xi in self.x))
        self.half_diagonal = np.sqrt(dim) * self.length / 2

        # integer mode numbers; last axis is the rfft (half-spectrum) axis
        k_full = np.fft.fftfreq(n, d=1.0 / n)
        k_half = np.fft.rfftfreq(n, d=1.0 / n)
        kaxes = [k_full] * (dim - 1) + [k_half]
        self.kshape = tuple(len(k) for k in kaxes)
        self.k = np.meshgrid(*kaxes, indexing="ij")
        scale = 2 * np.pi / self.length
        self.xi = [scale * ki for ki in self.k]
        self.xi2 = sum(x**2 for x in self.xi)

        kcut = n // 3
        mask = np.ones(self.kshape, dtype=bool)
        for ki in self.k:
            mask &= np.abs(ki) <= kcut
        self.dealias_mask = mask
        self.kcut = kcut

        # multiplicity of each rfft mode in the full spectrum (for Parseval sums)
        w = np.full(self.kshape, 2.0)
        last = self.k[-1]
        w[last == 0] = 1.0
        if n % 2 == 0:
            w[last == n // 2] = 1.0
        self.mode_weight = w

    # -- transforms -------------------------------------------------------

    def fft(self, u: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(u, axes=self.axes)

    def ifft(self, uh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(uh, s=self.shape, axes=self.axes)

    def fft_vec(self, v: np.ndarray) -> np.ndarray:
        return np.stack([self.fft(v[j]) for j in range(v.shape[0])])

    def ifft_vec(self, vh: np.ndarray) -> np.ndarray:
        return np.stack([self.ifft(vh[j]) for j in range(vh.shape[0])])

    # -- reductions -------------------------------------------------------

    def mean(self, u: np.ndarray) -> float:
        return float(np.mean(u))

    def integral(self, u: np.ndarray) -> float:
        # rectangle rule == trapezoid on a periodic uniform lattice
        return float(np.sum(u)) * self.dV

    def l2(self, u: np.ndarray) -> float:
        """L2 norm over the box; accepts scalar or stacked component arrays."""
        return float(np.sqrt(np.sum(u * u) * self.dV))

    def project_mean(self, u: np.ndarray) -> np.ndarray:
        return u - np.mean(u, axis=self.axes if u.ndim == self.dim else tuple(range(u.ndim - self.dim, u.ndim)), keepdims=True)

    # -- derivatives ------------------------------------------------------

    def grad(self, u: np.ndarray) -> np.ndarray:
        uh = self.fft(u)
        return np.stack([self.ifft(1j * xi * uh) for xi in self.xi])

    def div(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        for j in range(self.dim):
            out += self.ifft(1j * self.xi[j] * self.fft(v[j]))
        return out

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        if u.ndim == self.dim:
            return self.ifft(-self.xi2 * self.fft(u))
        return np.stack([self.laplacian(u[j]) for j in range(u.shape[0])])

    def grad_div(self, v: np.ndarray) -> np.ndarray:
        dh = sum(1j * self.xi[j] * self.fft(v[j]) for j in range(self.dim))
        return np.stack([self.ifft(1j * xi * dh) for xi in self.xi])

    def grad_laplacian(self, u: np.ndarray) -> np.ndarray:
        uh = -self.xi2 * self.fft(u)
        return np.stack([self.ifft(1j * xi * uh) for xi in self.xi])

    def deriv(self, u: np.ndarray, alpha) -> np.ndarray:
        """Mixed partial d^alpha u for a multi-index alpha (len == dim)."""
        uh = self.fft(u)
        for j, a in enumerate(alpha):
            if a:
                uh = uh * (1j * self.xi[j]) ** a
        return self.ifft(uh)

    def gradient_tensor(self, v: np.ndarray) -> np.ndarray:
        """nabla v with components [i, j] = d_i v_j."""
        return np.stack([self.grad(v[j]) for j in range(v.shape[0])], axis=1)

    # -- dealiasing and products -----------------------------------------

    def dealias_hat(self, uh: np.ndarray) -> np.ndarray:
        return uh * self.dealias_mask

    def dealias(self, u: np.ndarray) -> np.ndarray:
        if u.ndim == self.dim:
            return self.ifft(self.dealias_hat(self.fft(u)))
        return np.stack([self.dealias(u[j]) for j in range(u.shape[0])])

    def pmul(self, *factors: np.ndarray) -> np.ndarray:
        """Pointwise product projected back onto the dealiased band (2/3 rule)."""
        out = factors[0]
        for f in factors[1:]:
            out = out * f
        return self.dealias(out)

    # -- Helmholtz split and multiplier application ------------------------

    def helmholtz(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split v = w + grad p with div w = 0 and mean p = 0.

        Raises NonZeroMean unless every component of v is mean-free.
        """
        scale = max(float(np.max(np.abs(v))), 1.0)
        for j in range(v.shape[0]):
            if abs(self.mean(v[j])) > _MEAN_TOL * scale:
                raise NonZeroMean(f"component {j} of v has mean {self.mean(v[j]):.3e}")
        dh = sum(1j * self.xi[j] * self.fft(v[j]) for j in range(self.dim))
        with np.errstate(divide="ignore", invalid="ignore"):
            ph = np.where(self.xi2 > 0, -dh / self.xi2, 0.0)
        p = self.ifft(ph)
        w = v - np.stack([self.ifft(1j * xi * ph) for xi in self.xi])
        return w, p

    def apply_symbol(self, u: np.ndarray, symbol: "KernelSymbol",
                     zero_mode: str = "drop") -> np.ndarray:
        """Multiply the spectrum of u by a scalar symbol.

        ``zero_mode`` controls the xi=0 mode when the symbol is singular
        there: ``drop`` zeroes it, ``keep`` passes the input mean through,
        ``error`` raises ZeroModeSingular if the input mean is nonzero.
        """
        uh = self.fft(u)
        vals = symbol.values(self)
        if symbol.singular:
            m = uh.flat[0]
            scale = max(float(np.max(np.abs(u))), 1.0)
            if zero_mode == "error" and abs(m) / u.size > _MEAN_TOL * scale:
                raise ZeroModeSingular(
                    f"symbol {symbol.name!r} singular at xi=0 but input mean is "
                    f"{m.real / u.size:.3e}")
            vals = vals.copy()
            vals.flat[0] = 1.0 if zero_mode == "keep" else 0.0
        out = uh * vals
        if symbol.singular and zero_mode == "drop":
            out.flat[0] = 0.0
        return self.ifft(out)

    def oseen_solve(self, f: np.ndarray, mu: float, mu_prime: float = 0.0) -> np.ndarray:
        """Solenoidal velocity w with -mu lap w - (mu+mu') grad div w = P_sol f.

        Mode-wise this is the transverse projector over mu |xi|^2; the
        second-viscosity term vanishes on divergence-free fields, so
        ``mu_prime`` does not enter the multiplier.  f must be mean-free.
        """
        del mu_prime
        scale = max(float(np.max(np.abs(f))), 1.0)
        for j in range(f.shape[0]):
            if abs(self.mean(f[j])) > _MEAN_TOL * scale:
                raise NonZeroMean(f"component {j} of f has mean {self.mean(f[j]):.3e}")
        fh = self.fft_vec(f)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(self.xi2 > 0, 1.0 / self.xi2, 0.0)
        fdotxi = sum(self.xi[j] * fh[j] for j in range(self.dim))
        wh = np.empty_like(fh)
        for j in range(self.dim):
            wh[j] = (fh[j] - self.xi[j] * fdotxi * inv) * inv / mu
            wh[j].flat[0] = 0.0
        return self.ifft_vec(wh)


# -- Fourier multipliers ---------------------------------------------------


@dataclass(frozen=True)
class KernelSymbol:
    """Scalar Fourier multiplier xi -> m(xi)."""

    name: str
    func: Callable[[SpectralGrid], np.ndarray]
    singular: bool = False

    def values(self, grid: SpectralGrid) -> np.ndarray:
        return self.func(grid)


def bessel_symbol(kappa_gamma1: float) -> KernelSymbol:
    """Multiplier 1/(1 + kappa*gamma1*|xi|^2) inverting (I - kappa*gamma1*lap)."""
    return KernelSymbol(
        name=f"bessel({kappa_gamma1})",
        func=lambda g: 1.0 / (1.0 + kappa_gamma1 * g.xi2),
        singular=False,
    )


def inverse_laplacian_symbol() -> KernelSymbol:
    """Multiplier -1/|xi|^2, the Newtonian-potential convolution."""

    def vals(g: SpectralGrid) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(g.xi2 > 0, -1.0 / g.xi2, 0.0)

    return KernelSymbol(name="inverse_laplacian", func=vals, singular=True)


newtonian_symbol = inverse_laplacian_symbol


# -- real-space kernels (independent path for cross-checks) ----------------


def _selfcell_offsets(grid: SpectralGrid, sub: int = 16):
    off = ((np.arange(sub) + 0.5) / sub - 0.5) * grid.dx
    return np.meshgrid(off, off, off, indexing="ij")


def newtonian_kernel(grid: SpectralGrid, radius: float) -> np.ndarray:
    """Samples of -1/(4 pi |x|) truncated to |x| <= radius.

    The singular sample at the origin is replaced by the exact mean of the
    kernel over its grid cell (the point value is undefined there).
    """
    r = grid.radius
    with np.errstate(divide="ignore"):
        k = np.where(r > 0, -1.0 / (4 * np.pi * np.maximum(r, 1e-300)), 0.0)
    k = np.where(r <= radius, k, 0.0)
    if grid.dim == 3:
        ox, oy, oz = _selfcell_offsets(grid)
        rr = np.sqrt(ox**2 + oy**2 + oz**2)
        k[tuple(s // 2 for s in grid.shape)] = np.mean(-1.0 / (4 * np.pi * rr))
    return k


def _smoothstep_taper(r: np.ndarray, r1: float, r2: float) -> np.ndarray:
    if r1 >= r2:
        return np.where(r <= r2, 1.0, 0.0)
    t = np.clip((r - r1) / (r2 - r1), 0.0, 1.0)
    s = 1.0 - (10 * t**3 - 15 * t**4 + 6 * t**5)
    return np.where(r <= r1, 1.0, np.where(r >= r2, 0.0, s))


def oseen_kernel(grid: SpectralGrid, mu: float, radius: float,
                 taper_start: float = 1.0) -> np.ndarray:
    """Sampled Stokes fundamental tensor (1/8 pi mu)(delta_ij/|x| + x_i x_j/|x|^3).

    Truncated to |x| <= radius; with ``taper_start`` < 1 the outer part of
    the ball is wound down by a C^2 smoothstep starting at
    ``taper_start * radius`` (a sharp cutoff of this conditionally
    integrable kernel rings at all wavelengths).  The singular origin sample
    carries the exact cell mean.  Shape (3, 3, ...).
    """
    if grid.dim != 3:
        raise ValueError("Oseen kernel is defined for dim == 3")
    r = grid.radius
    safe = np.maximum(r, 1e-300)
    out = np.zeros((3, 3) + grid.shape)
    window = _smoothstep_taper(r, taper_start * radius, radius)
    window = np.where(r > 0, window, 0.0)
    ox, oy, oz = _selfcell_offsets(grid)
    cell = [ox, oy, oz]
    rr = np.sqrt(ox**2 + oy**2 + oz**2)
    ctr = tuple(s // 2 for s in grid.shape)
    with np.errstate(invalid="ignore"):
        for i in range(3):
            for j in range(3):
                e = grid.x[i] * grid.x[j] / safe**3
                if i == j:
                    e = e + 1.0 / safe
                out[i, j] = np.where(r > 0, e / (8 * np.pi * mu), 0.0) * window
                es = cell[i] * cell[j] / rr**3
                if i == j:
                    es = es + 1.0 / rr
                out[i, j][ctr] = np.mean(es) / (8 * np.pi * mu)
    return out


def convolve(grid: SpectralGrid, kernel: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Discrete (circular) convolution sum_y kernel(x-y) f(y) dV.

    Evaluated with FFTs, which reproduces the direct lattice sum to rounding.
    """
    kh = grid.fft(kernel)
    fh = grid.fft(f)
    # samples live on x = -L/2 + dx*i, so the kernel array is the x=0-centred
    # stencil cyclically shifted by n/2 per axis; undo the shift spectrally
    shift = np.ones(grid.kshape, dtype=complex)
    for ki in grid.k:
        shift = shift * np.exp(1j * np.pi * ki)
    return grid.ifft(kh * fh * shift) * grid.dV


def oseen_convolve(grid: SpectralGrid, kernel: np.ndarray, f: np.ndarray) -> np.ndarray:
    """w_j = sum_i E_ij * f_i for a sampled tensor kernel."""
    out = np.zeros_like(f)
    for j in range(3):
        for i in range(3):
            out[j] += convolve(grid, kernel[i, j], f[i])
    return out


# -- field containers -------------------------------------------------------


@dataclass
class ScalarField:
    """Sampled scalar with metadata and a lazily cached spectrum."""

    grid: SpectralGrid
    data: np.ndarray
    name: str = ""
    convention: str = ""
    _hat: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            self._hat = self.grid.fft(self.data)
        return self._hat

    def zero_mean(self, tol: float = _MEAN_TOL) -> bool:
        scale = max(float(np.max(np.abs(self.data))), 1.0)
        return abs(self.grid.mean(self.data)) <= tol * scale


@dataclass
class VectorField:
    """Sampled vector (components stacked on axis 0) with metadata."""

    grid: SpectralGrid
    data: np.ndarray
    name: str = ""
    convention: str = ""
    _hat: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            self._hat = self.grid.fft_vec(self.data)
        return self._hat

    def zero_mean(self, tol: float = _MEAN_TOL) -> bool:
        scale = max(float(np.max(np.abs(self.data))), 1.0)
        return all(abs(self.grid.mean(c)) <= tol * scale for c in self.data)


# -- random band-limited fields --------------------------------------------


def random_band_scalar(grid: SpectralGrid, rng: np.random.Generator,
                       kmin: int = 1, kmax: Optional[int] = None,
                       amplitude: float = 1.0) -> np.ndarray:
    """Mean-free random field with per-axis modes |k_i| <= kmax and Euclidean
    mode magnitude >= kmin, rescaled so max |u| equals ``amplitude``."""
    if kmax is None:
        kmax = grid.kcut
    white = rng.standard_normal(grid.shape)
    wh = grid.fft(white)
    mask = np.ones(grid.kshape, dtype=bool)
    for ki in grid.k:
        mask &= np.abs(ki) <= kmax
    kmag = np.sqrt(sum(np.asarray(ki, float) ** 2 for ki in grid.k))
    mask &= kmag >= kmin
    u = grid.ifft(wh * mask)
    u -= np.mean(u)
    peak = np.max(np.abs(u))
    if peak > 0:
        u *= amplitude / peak
    return u


def random_band_vector(grid: SpectralGrid, rng: np.random.Generator,
                       kmin: int = 1, kmax: Optional[int] = None,
                       amplitude: float = 1.0) -> np.ndarray:
    return np.stack([
        random_band_scalar(grid, rng, kmin=kmin, kmax=kmax, amplitude=amplitude)
        for _ in range(grid.dim)
    ])
