"""Mass-constrained minimisation of the coupled Hartree energy.

The constrained infimum over tuples with prescribed L^2 masses is computed by
projected gradient descent: each step moves against the L^2 gradient and then
rescales every component back onto its mass sphere,

    x  <-  project_masses(x - tau * grad),

with tau chosen by backtracking (halve until the energy strictly decreases,
reset to tau0 = 1/(max|k|^2 + 1) each iteration).  The energy is
non-increasing across accepted steps by construction.  Convergence is declared
when max_j ||grad_j + lambda_j phi_j|| / ||phi_j||_{H^1} <= tol with the
multipliers re-estimated at every check.

Converged minimisers come out with strictly positive Lagrange multipliers and
each component equal to a positive profile times a constant phase; both facts
are verified by the experiment harness rather than assumed here.

One run mutates only its own state; independent runs may execute concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .grid import Field, Grid, MultiField
from .hartree import Kernel, EnergyBreakdown, abs_power, _nonlinear_factor
from .params import SystemParams

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 300_000
_BACKTRACK_LIMIT = 60


class ZeroMassError(ValueError):
    """A component with zero mass cannot be projected onto a mass sphere."""


class EnergyNanError(RuntimeError):
    """The flow produced a non-finite energy."""


@dataclass(frozen=True, eq=False)
class GroundState:
    """Converged (or flagged) minimiser with its diagnostics."""

    fields: MultiField
    multipliers: np.ndarray
    energy: EnergyBreakdown
    residuals: np.ndarray
    iterations: int
    converged: bool
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class PhaseFactorization:
    """Constant phase, aligned real part, and the relative deviation from
    a purely phase-times-positive structure."""

    theta: float
    positive_part: Field
    deviation: float


def project_masses(mf: MultiField, masses) -> MultiField:
    """Rescale each component onto its mass sphere, phi_j <- sqrt(M_j/mass_j) phi_j."""
    masses = np.asarray(masses, dtype=float)
    if masses.shape != (mf.m,):
        raise ValueError(f"expected {mf.m} masses, got shape {masses.shape}")
    current = gridmod.multifield_masses(mf)
    if np.any(current <= 0):
        raise ZeroMassError(f"cannot project components with zero mass (masses={current})")
    factors = np.sqrt(masses / current)
    return MultiField(mf.grid, mf.data * factors.reshape((-1,) + (1,) * mf.grid.space_dim))


def gaussian_init(
    grid: Grid,
    masses,
    seed: int | None = None,
    complex_ramp_cycles: int = 0,
) -> MultiField:
    """Default initial guess: offset Gaussians of width L/10 on each component.

    A seed adds per-component jitter to the centres (so distinct seeds explore
    distinct basins); complex_ramp_cycles > 0 multiplies component j by a
    periodic phase ramp exp(i 2 pi cycles x_1 / L) and a distinct constant
    phase, producing a genuinely complex-valued start.
    """
    masses = np.asarray(masses, dtype=float)
    m = masses.size
    sigma = grid.box_length / 10.0
    rng = np.random.default_rng(seed) if seed is not None else None
    comps = []
    for j in range(m):
        center = np.zeros(grid.space_dim)
        center[0] = (j - (m - 1) / 2.0) * grid.box_length / 40.0
        if rng is not None:
            center += rng.uniform(-grid.box_length / 40.0, grid.box_length / 40.0, size=grid.space_dim)
        rsq = np.zeros(grid.shape)
        for ax, coords in enumerate(grid.coordinate_arrays):
            rsq += (coords - center[ax]) ** 2
        g = np.exp(-rsq / (2 * sigma**2)).astype(complex)
        if complex_ramp_cycles:
            x1 = grid.coordinate_arrays[0]
            ramp = 2 * np.pi * complex_ramp_cycles * (x1 + grid.box_length / 2) / grid.box_length
            g = g * np.exp(1j * (ramp + 0.3 * (j + 1)))
        comps.append(g)
    return project_masses(MultiField(grid, np.stack(comps)), masses)


def extract_multipliers(mf: MultiField, kernel: Kernel, p: float) -> np.ndarray:
    """Least-squares multipliers of the stationarity system.

    lambda_j = (Re<(sum_k W*|phi_k|^p)|phi_j|^(p-2) phi_j, phi_j> - ||grad phi_j||^2) / M_j,
    equivalently -Re<grad_j, phi_j>/M_j, which minimises ||grad_j + lambda phi_j||.
    """
    masses = gridmod.multifield_masses(mf)
    if np.any(masses <= 0):
        raise ZeroMassError("multipliers are undefined for zero-mass components")
    from .hartree import energy_gradient

    grad = energy_gradient(mf, kernel, p)
    axes = tuple(range(1, mf.data.ndim))
    overlap = mf.grid.cell_volume * np.sum((np.conj(grad.data) * mf.data).real, axis=axes)
    return -overlap / masses


def phase_factorize(f: Field):
    """Split f into a constant phase times an (almost) positive profile.

    theta = arg <|f|, f>, positive_part = Re(e^{-i theta} f), and
    deviation = ||f - e^{i theta} |f| ||_{L^2} / ||f||_{L^2} in [0, 2].
    """
    amp = np.abs(f.data)
    total = np.sum(amp * f.data)
    norm_sq = gridmod.mass(f)
    if norm_sq == 0:
        raise ZeroMassError("cannot phase-factorize the zero field")
    theta = float(np.angle(total))
    aligned = np.exp(-1j * theta) * f.data
    deviation = float(
        np.sqrt(f.grid.cell_volume * np.sum(np.abs(f.data - np.exp(1j * theta) * amp) ** 2) / norm_sq)
    )
    return PhaseFactorization(theta=theta, positive_part=Field(f.grid, aligned.real.astype(complex)), deviation=deviation)


class _FlowState:
    """Energy pieces of one iterate, sharing transforms between the pieces.

    One evaluation costs three batched FFT calls (fields, summed density,
    potential); the gradient reuses the cached spectra for one more.
    """

    __slots__ = ("x", "xhat", "rho_tot", "potential", "kinetic", "interaction", "total", "masses")

    def __init__(self, ws: "_Workspace", x: np.ndarray):
        self.x = x
        self.xhat = np.fft.fftn(x, axes=ws.axes)
        power = self.xhat.real**2 + self.xhat.imag**2
        self.kinetic = 0.5 * ws.w_spec * np.sum(ws.k2 * power, axis=ws.axes)
        self.rho_tot = abs_power(x, ws.p).sum(axis=0)
        self.potential = np.fft.ifftn(ws.mult * np.fft.fftn(self.rho_tot), axes=ws.axes0).real
        self.interaction = float(ws.cell * np.sum(self.rho_tot * self.potential) / (2 * ws.p))
        self.total = float(self.kinetic.sum()) - self.interaction
        self.masses = ws.cell * np.sum(x.real**2 + x.imag**2, axis=ws.axes)

    def gradient(self, ws: "_Workspace") -> np.ndarray:
        minus_lap = np.fft.ifftn(ws.k2 * self.xhat, axes=ws.axes)
        return minus_lap - self.potential * _nonlinear_factor(self.x, ws.p)


class _Workspace:
    __slots__ = ("grid", "p", "k2", "mult", "cell", "w_spec", "axes", "axes0", "masses", "tau0")

    def __init__(self, grid: Grid, kernel: Kernel, p: float, masses: np.ndarray):
        self.grid = grid
        self.p = p
        self.k2 = grid.k_squared
        self.mult = kernel.multiplier
        self.cell = grid.cell_volume
        self.w_spec = grid.spectral_weight
        self.axes = tuple(range(1, 1 + grid.space_dim))
        self.axes0 = tuple(range(grid.space_dim))
        self.masses = masses
        self.tau0 = 1.0 / (grid.max_k_squared + 1.0)

    def project(self, x: np.ndarray) -> np.ndarray:
        current = self.cell * np.sum(x.real**2 + x.imag**2, axis=self.axes)
        factors = np.sqrt(self.masses / current)
        return x * factors.reshape((-1,) + (1,) * self.grid.space_dim)


def _center_peak(mf: MultiField) -> MultiField:
    """Deterministic translation gauge: roll the total density peak to x = 0."""
    g = mf.grid
    density = np.sum(mf.data.real**2 + mf.data.imag**2, axis=0)
    peak = np.unravel_index(int(np.argmax(density)), g.shape)
    shifts = tuple(g.points_per_dim // 2 - idx for idx in peak)
    return MultiField(g, np.roll(mf.data, shifts, axis=tuple(range(1, 1 + g.space_dim))))


def ground_state(
    params: SystemParams,
    kernel: Kernel,
    init: MultiField | None = None,
    *,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | None = None,
    complex_ramp_cycles: int = 0,
    center: bool = True,
) -> GroundState:
    """Minimise the energy over the product of mass spheres.

    Exhausting max_iters returns an unconverged result (flagged, never an
    exception); a non-finite energy aborts with EnergyNanError.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = gridmod.grid_for(params)
    if kernel.grid != g:
        raise ValueError("kernel grid does not match params grid")
    masses = np.asarray(params.masses, dtype=float)
    if init is None:
        init = gaussian_init(g, masses, seed=seed, complex_ramp_cycles=complex_ramp_cycles)
    elif init.m != params.component_count or init.grid != g:
        raise ValueError("init does not match params (component count or grid)")

    ws = _Workspace(g, kernel, params.power, masses)
    x = ws.project(init.data.astype(np.complex128, copy=True))
    state = _FlowState(ws, x)

    converged = False
    iterations = 0
    lambdas = np.zeros(init.m)
    residuals = np.full(init.m, np.inf)

    for iterations in range(max_iters + 1):
        if not np.isfinite(state.total):
            raise EnergyNanError(f"non-finite energy at iteration {iterations}")
        grad = state.gradient(ws)
        overlap = ws.cell * np.sum((np.conj(grad) * state.x).real, axis=ws.axes)
        lambdas = -overlap / state.masses
        shifted = grad + lambdas.reshape((-1,) + (1,) * g.space_dim) * state.x
        residuals = np.sqrt(ws.cell * np.sum(shifted.real**2 + shifted.imag**2, axis=ws.axes))
        h1 = np.sqrt(state.masses + 2.0 * state.kinetic)
        if np.max(residuals / h1) <= tol:
            converged = True
            break
        if iterations == max_iters:
            break

        tau = ws.tau0
        accepted = None
        for _ in range(_BACKTRACK_LIMIT):
            trial = _FlowState(ws, ws.project(state.x - tau * grad))
            if np.isfinite(trial.total) and trial.total < state.total:
                accepted = trial
                break
            tau *= 0.5
        if accepted is None:
            # No decrease at any step length: the flow has stalled at the
            # resolution of floating point; report the current residuals.
            break
        state = accepted

    mf = MultiField(g, state.x)
    if center:
        mf = _center_peak(mf)
    energy = EnergyBreakdown.make(float(state.kinetic.sum()), state.interaction)
    return GroundState(
        fields=mf,
        multipliers=np.asarray(lambdas, dtype=float),
        energy=energy,
        residuals=np.asarray(residuals, dtype=float),
        iterations=iterations,
        converged=converged,
        seed=seed,
    )


def single_component_ground(
    mass_value: float,
    params: SystemParams,
    kernel: Kernel,
    *,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | None = None,
    complex_ramp_cycles: int = 0,
) -> GroundState:
    """Single-component minimiser at the given mass (remaining params reused)."""
    from dataclasses import replace

    single = replace(params, component_count=1, masses=(float(mass_value),))
    return ground_state(
        single,
        kernel,
        tol=tol,
        max_iters=max_iters,
        seed=seed,
        complex_ramp_cycles=complex_ramp_cycles,
    )


def save_ground_state(prefix, gs: GroundState, params: SystemParams) -> tuple[str, str]:
    """Persist a minimiser as a field snapshot plus a JSON sidecar."""
    snap_path = f"{prefix}.chfld"
    meta_path = f"{prefix}.json"
    gridmod.write_snapshot(snap_path, gs.fields)
    sidecar = {
        "masses": [float(v) for v in gridmod.multifield_masses(gs.fields)],
        "lambda": [float(v) for v in gs.multipliers],
        "energy": {
            "kinetic": gs.energy.kinetic,
            "interaction": gs.energy.interaction,
            "total": gs.energy.total,
        },
        "residuals": [float(v) for v in gs.residuals],
        "iterations": gs.iterations,
        "converged": gs.converged,
        "seed": gs.seed,
        "params": {
            "space_dim": params.space_dim,
            "component_count": params.component_count,
            "power": params.power,
            "kernel_exponent": params.kernel_exponent,
            "masses": list(params.masses),
            "box_length": params.box_length,
            "points_per_dim": params.points_per_dim,
        },
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return snap_path, meta_path
