"""Energy functionals of the coupled Hartree system.

The total energy of an m-tuple (phi_1, ..., phi_m) is

    I(phi) = 1/2 sum_j ||grad phi_j||^2
             - 1/(2p) sum_{k,j} int (W * |phi_k|^p) |phi_j|^p dx,

with W * rho the convolution against the attractive kernel.  The pair term

    F_q(f, g) = (1/q) iint W(x - y) |f(x)|^p |g(y)|^p dx dy

carries the bookkeeping prefactor 1/q; with it, the single-component energy is
E(h) = 1/2 ||grad h||^2 - F_{2p}(h, h), an m=2 energy is
E(u1) + E(u2) - F_p(u1, u2), and so on with one F_p cross term per pair.

The kernel is periodised by real-space truncation at radius L/2 with the
singular origin cell replaced by its cell average, and transformed
numerically; interaction terms then cost one convolution per component
density.  Energies and gradients are pure functions of (fields, kernel) and
may be evaluated concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Field,
    Grid,
    MultiField,
    SizeMismatchError,
    fftn_grid,
    ifftn_grid,
    grad_norm_sq,
)


class SingularKernelError(ValueError):
    """Kernel exponent too large for the origin cell to carry a finite average."""


@dataclass(frozen=True, eq=False)
class Kernel:
    """Interaction potential as real-space samples plus its spectral symbol."""

    grid: Grid
    real_samples: np.ndarray
    multiplier: np.ndarray

    @classmethod
    def from_samples(cls, grid: Grid, samples: np.ndarray) -> "Kernel":
        samples = np.asarray(samples, dtype=float)
        if samples.shape != grid.shape:
            raise SizeMismatchError(f"kernel shape {samples.shape} != grid shape {grid.shape}")
        if np.any(samples < 0):
            raise ValueError("kernel samples must be nonnegative")
        for ax in range(grid.space_dim):
            mirrored = np.roll(np.flip(samples, axis=ax), 1, axis=ax)
            if not np.allclose(samples, mirrored, rtol=0, atol=1e-12 * max(samples.max(), 1.0)):
                raise ValueError("kernel samples must be even under x -> -x")
        # The symbol is the transform taken about x = 0: samples are stored in
        # coordinate (axis-major) order, so re-index by displacement first.
        mult = grid.cell_volume * fftn_grid(grid, np.fft.ifftshift(samples).astype(complex))
        scale = max(float(np.abs(mult.real).max()), 1e-300)
        if float(np.abs(mult.imag).max()) > 1e-10 * scale:
            raise ValueError("kernel symbol has a non-negligible imaginary part")
        return cls(grid=grid, real_samples=samples, multiplier=np.ascontiguousarray(mult.real))

    @classmethod
    def zero(cls, grid: Grid) -> "Kernel":
        """Interaction-free kernel, useful as a counterfactual."""
        z = np.zeros(grid.shape)
        return cls(grid=grid, real_samples=z, multiplier=z.copy())


def _origin_cell_average(n_dim: int, alpha: float, spacing: float) -> float:
    """Average of |x|^(-alpha) over one grid cell centred at the origin.

    In 1D the integral is elementary.  In higher dimensions the cell average
    over the unit cube is computed by midpoint subcells, with the singular
    centre subcell handled exactly through the self-similarity
    avg over (1/K)-cube = K^alpha * avg over unit cube.
    """
    if alpha >= n_dim:
        raise SingularKernelError(
            f"|x|^(-alpha) with alpha={alpha} is not integrable at the origin for N={n_dim}"
        )
    if n_dim == 1:
        # (1/h) int_{-h/2}^{h/2} |x|^(-alpha) dx = (h/2)^(-alpha) / (1 - alpha)
        unit_avg = (0.5 ** (-alpha)) / (1 - alpha)
    else:
        K = 129 if n_dim == 2 else 41
        centers = (np.arange(K) + 0.5) / K - 0.5
        mesh = np.meshgrid(*([centers] * n_dim), indexing="ij")
        rsq = np.zeros((K,) * n_dim)
        for c in mesh:
            rsq += c * c
        rad = np.sqrt(rsq)
        mid = (K - 1) // 2
        center_idx = (mid,) * n_dim
        with np.errstate(divide="ignore"):
            vals = rad ** (-alpha)
        vals[center_idx] = 0.0
        unit_avg = float(vals.sum() / K**n_dim / (1.0 - K ** (alpha - n_dim)))
    return float(spacing ** (-alpha) * unit_avg)


def build_kernel(grid: Grid, alpha: float) -> Kernel:
    """Periodised truncated power kernel W(x) = |x|^(-alpha).

    Samples carry |x_per|^(-alpha) for 0 < |x_per| <= L/2, zero beyond (box
    corners in N >= 2), and the cell average of the singularity at the origin.
    Requires alpha < N for the origin cell to be integrable.
    """
    if alpha <= 0:
        raise ValueError(f"kernel exponent must be positive, got {alpha}")
    origin_value = _origin_cell_average(grid.space_dim, alpha, grid.spacing)
    rad = grid.radius
    with np.errstate(divide="ignore"):
        samples = np.where(rad > 0, rad, 1.0) ** (-alpha)
    samples = np.ascontiguousarray(samples)
    samples[rad > 0.5 * grid.box_length] = 0.0
    origin_idx = np.unravel_index(int(np.argmin(rad)), grid.shape)
    samples[origin_idx] = origin_value
    return Kernel.from_samples(grid, samples)


def _convolve_array(kernel: Kernel, rho: np.ndarray) -> np.ndarray:
    """W * rho for a real density array; quadrature weight is folded into the symbol."""
    return ifftn_grid(kernel.grid, kernel.multiplier * fftn_grid(kernel.grid, rho)).real


def convolve_density(kernel: Kernel, density: Field) -> Field:
    """Spectral evaluation of (W * rho)(x) ~ int W(x - y) rho(y) dy."""
    if density.grid != kernel.grid:
        raise SizeMismatchError("density grid does not match kernel grid")
    return Field(kernel.grid, _convolve_array(kernel, density.data.real).astype(complex))


def abs_power(data: np.ndarray, p: float) -> np.ndarray:
    """|z|^p, exact for p = 2 and with |0|^p = 0 for non-integer p > 0."""
    if p == 2:
        return data.real**2 + data.imag**2
    return np.abs(data) ** p


def _nonlinear_factor(data: np.ndarray, p: float) -> np.ndarray:
    """|z|^(p-2) z, the derivative direction of |z|^p / p; equals z for p = 2."""
    if p == 2:
        return data
    return np.abs(data) ** (p - 2) * data


def pair_interaction(q: float, f: Field, g: Field, kernel: Kernel, p: float) -> float:
    """F_q(f, g) = (1/q) iint W(x-y) |f(x)|^p |g(y)|^p dx dy."""
    if q <= 0:
        raise ValueError(f"pair interaction index must be positive, got {q}")
    if f.grid != g.grid or f.grid != kernel.grid:
        raise SizeMismatchError("fields and kernel must share one grid")
    rho_f = abs_power(f.data, p)
    rho_g = abs_power(g.data, p)
    return float(kernel.grid.cell_volume * np.sum(rho_f * _convolve_array(kernel, rho_g)) / q)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    interaction: float
    total: float

    @classmethod
    def make(cls, kinetic: float, interaction: float) -> "EnergyBreakdown":
        return cls(kinetic=kinetic, interaction=interaction, total=kinetic - interaction)


def total_energy(mf: MultiField, kernel: Kernel, p: float) -> EnergyBreakdown:
    """Full m-component energy; for m = 1 it coincides with single_energy."""
    if mf.grid != kernel.grid:
        raise SizeMismatchError("fields and kernel must share one grid")
    g = mf.grid
    kinetic = 0.5 * sum(grad_norm_sq(c) for c in mf.components)
    rho_tot = abs_power(mf.data, p).sum(axis=0)
    interaction = g.cell_volume * np.sum(rho_tot * _convolve_array(kernel, rho_tot)) / (2 * p)
    return EnergyBreakdown.make(float(kinetic), float(interaction))


def single_energy(h: Field, kernel: Kernel, p: float) -> float:
    """E(h) = 1/2 ||grad h||^2 - F_{2p}(h, h)."""
    return 0.5 * grad_norm_sq(h) - pair_interaction(2 * p, h, h, kernel, p)


def energy_gradient(mf: MultiField, kernel: Kernel, p: float) -> MultiField:
    """L^2 gradient, grad_j = -lap(phi_j) - (sum_k W * |phi_k|^p) |phi_j|^(p-2) phi_j.

    Satisfies the directional-derivative identity
    d/de I(mf + e v) = Re<grad, v> for every direction v.
    """
    if mf.grid != kernel.grid:
        raise SizeMismatchError("fields and kernel must share one grid")
    g = mf.grid
    rho_tot = abs_power(mf.data, p).sum(axis=0)
    potential = _convolve_array(kernel, rho_tot)
    minus_lap = ifftn_grid(g, g.k_squared * fftn_grid(g, mf.data))
    return MultiField(g, minus_lap - potential * _nonlinear_factor(mf.data, p))


def el_residual(mf: MultiField, lambdas, kernel: Kernel, p: float) -> np.ndarray:
    """Per-component L^2 norms of -lap(phi_j) + lambda_j phi_j - (nonlinearity)_j.

    Equals ||grad_j + lambda_j phi_j|| and is minimised over lambda_j at
    lambda_j = -Re<grad_j, phi_j> / mass_j.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.shape != (mf.m,):
        raise ValueError(f"expected {mf.m} multipliers, got shape {lambdas.shape}")
    if not np.all(np.isfinite(lambdas)):
        raise ValueError("multipliers must be finite")
    grad = energy_gradient(mf, kernel, p)
    res = grad.data + lambdas.reshape((-1,) + (1,) * mf.grid.space_dim) * mf.data
    axes = tuple(range(1, res.ndim))
    return np.sqrt(mf.grid.cell_volume * np.sum(res.real**2 + res.imag**2, axis=axes))
