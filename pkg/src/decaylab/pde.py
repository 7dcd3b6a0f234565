"""Explicit finite-difference lab for the diffusion-decay equation.

Solves du/dt = D lap(u) - kappa u + S on a regular 1D or 2D grid with
forward Euler time stepping and the centered second-difference
Laplacian. Zero-flux boundaries mirror the edge cells; absorbing
boundaries pin the edge cells to zero. Point sources deposit
strength / h^dim into their containing cell while active, so total
injected mass per unit time equals the nominal strength.

The explicit scheme is stable only for dt <= h^2 / (2 dim D); a larger
timestep is refused up front with the bound in the message.

Companions: the closed-form steady-state point-source profiles
(exponential in 1D, Bessel K0 in 2D), log-mass decay fitting after a
source shutdown, and recovery of the effective spatial decay rate
sqrt(kappa / D) from a field's radial profile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidConfig, UnstableTimestep, WindowTooSmall
from .special import bessel_k0

__all__ = [
    "BoundaryCondition",
    "PointSource",
    "PdeParams",
    "FieldGrid",
    "SimulationConfig",
    "SimulationResult",
    "ClosureResult",
    "max_stable_dt",
    "steady_state_green",
    "solve_transient",
    "closure_decay",
    "recover_kappa_eff",
]


class BoundaryCondition(str, enum.Enum):
    ZERO_FLUX = "zero_flux"
    ABSORBING = "absorbing"


@dataclass(frozen=True)
class PointSource:
    """A point source at a position (km), active on [start, end)."""

    position: tuple[float, ...]
    strength: float = 1.0
    start: float = 0.0
    end: float = math.inf

    def __post_init__(self) -> None:
        pos = self.position if isinstance(self.position, tuple) else (float(self.position),)
        object.__setattr__(self, "position", tuple(float(p) for p in pos))
        if self.strength < 0:
            raise InvalidConfig(f"source strength must be nonnegative, got {self.strength}")
        if not self.start <= self.end:
            raise InvalidConfig("source active interval must have start <= end")

    def active_at(self, t: float) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class PdeParams:
    """Diffusivity (km^2 per unit time), decay rate, and sources."""

    diffusion_d: float
    decay_kappa: float
    sources: tuple[PointSource, ...] = ()

    def __post_init__(self) -> None:
        if not self.diffusion_d > 0:
            raise InvalidConfig(f"diffusivity must be positive, got {self.diffusion_d}")
        if self.decay_kappa < 0:
            raise InvalidConfig(f"decay rate must be nonnegative, got {self.decay_kappa}")
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def kappa_eff(self) -> float:
        """Spatial decay rate sqrt(kappa / D) of the steady profile."""
        return math.sqrt(self.decay_kappa / self.diffusion_d)


@dataclass
class FieldGrid:
    """A scalar field on a regular grid of cell centers.

    Cell i (or i, j) is centered at (i + 1/2) h from the domain origin.
    """

    dim: int
    spacing_km: float
    values: np.ndarray
    time_years: float = 0.0

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise InvalidConfig(f"only 1D and 2D grids are supported, got dim={self.dim}")
        if not self.spacing_km > 0:
            raise InvalidConfig(f"grid spacing must be positive, got {self.spacing_km}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.dim:
            raise InvalidConfig(
                f"values array has {self.values.ndim} dimensions, expected {self.dim}"
            )

    @classmethod
    def zeros(cls, dim: int, cells, spacing_km: float) -> "FieldGrid":
        shape = (int(cells),) if dim == 1 else tuple(int(c) for c in cells)
        return cls(dim=dim, spacing_km=float(spacing_km), values=np.zeros(shape))

    def axis_centers(self, axis: int = 0) -> np.ndarray:
        n = self.values.shape[axis]
        return (np.arange(n) + 0.5) * self.spacing_km

    def cell_of(self, position: tuple[float, ...]) -> tuple[int, ...]:
        idx = tuple(int(math.floor(p / self.spacing_km)) for p in position)
        for ax, i in enumerate(idx):
            if not 0 <= i < self.values.shape[ax]:
                raise InvalidConfig(f"position {position} outside the grid on axis {ax}")
        return idx

    def radii_from(self, position: tuple[float, ...]) -> np.ndarray:
        if self.dim == 1:
            return np.abs(self.axis_centers(0) - position[0])
        dx = self.axis_centers(0) - position[0]
        dy = self.axis_centers(1) - position[1]
        return np.hypot(dx[:, None], dy[None, :])

    @property
    def cell_volume(self) -> float:
        return self.spacing_km**self.dim

    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell_volume)


@dataclass(frozen=True)
class SimulationConfig:
    """Timestep, horizon, boundary handling, and snapshot stride."""

    dt_years: float
    t_end_years: float
    boundary: BoundaryCondition = BoundaryCondition.ZERO_FLUX
    record_every: int = 0

    def __post_init__(self) -> None:
        if not self.dt_years > 0:
            raise InvalidConfig(f"dt must be positive, got {self.dt_years}")
        if not self.t_end_years > 0:
            raise InvalidConfig(f"t_end must be positive, got {self.t_end_years}")
        object.__setattr__(self, "boundary", BoundaryCondition(self.boundary))


@dataclass
class SimulationResult:
    final: FieldGrid
    times: np.ndarray
    mass: np.ndarray
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)


@dataclass
class ClosureResult:
    """Log-linear fit of total mass decay after source shutdown."""

    slope: float
    intercept: float
    times: np.ndarray
    mass: np.ndarray
    final: FieldGrid


def max_stable_dt(grid: FieldGrid, params: PdeParams) -> float:
    """Largest stable forward-Euler timestep h^2 / (2 dim D)."""
    return grid.spacing_km**2 / (2.0 * grid.dim * params.diffusion_d)


def steady_state_green(params: PdeParams, r, dim: int):
    """Closed-form steady-state profile of a single point source.

    1D: T0 / (2 sqrt(D kappa)) * exp(-sqrt(kappa / D) r), r >= 0.
    2D: T0 / (2 pi D) * K0(sqrt(kappa / D) r), r > 0.
    """
    if dim not in (1, 2):
        raise InvalidConfig(f"green function defined for dim 1 or 2, got {dim}")
    if len(params.sources) != 1:
        raise InvalidConfig("steady-state profile requires exactly one source")
    if not params.decay_kappa > 0:
        raise DomainError("steady-state profile requires a positive decay rate")
    strength = params.sources[0].strength
    arr = np.asarray(r, dtype=float)
    keff = params.kappa_eff
    if dim == 1:
        if np.any(arr < 0):
            raise DomainError("radius must be nonnegative")
        out = strength / (2.0 * math.sqrt(params.diffusion_d * params.decay_kappa)) * np.exp(
            -keff * arr
        )
    else:
        if np.any(arr <= 0):
            raise DomainError("2D profile diverges at r = 0; radius must be positive")
        out = strength / (2.0 * math.pi * params.diffusion_d) * bessel_k0(keff * arr)
    return float(out) if arr.ndim == 0 else out


def _laplacian(u: np.ndarray, h: float, dim: int) -> np.ndarray:
    padded = np.pad(u, 1, mode="edge")
    if dim == 1:
        lap = padded[:-2] - 2.0 * u + padded[2:]
    else:
        lap = (
            padded[:-2, 1:-1]
            + padded[2:, 1:-1]
            + padded[1:-1, :-2]
            + padded[1:-1, 2:]
            - 4.0 * u
        )
    return lap / (h * h)


def solve_transient(grid: FieldGrid, params: PdeParams, config: SimulationConfig) -> SimulationResult:
    """March the field forward in time with explicit Euler steps.

    Returns the final field, the per-step total-mass series, and
    optional snapshots every ``record_every`` steps. The input grid is
    not modified.
    """
    dt = config.dt_years
    bound = max_stable_dt(grid, params)
    if dt > bound * (1.0 + 1e-12):
        raise UnstableTimestep(
            f"dt={dt:g} exceeds the stability bound h^2/(2*dim*D)={bound:g}"
        )
    n_steps = int(math.floor(config.t_end_years / dt + 1e-9))
    u = grid.values.copy()
    h = grid.spacing_km
    dim = grid.dim
    kappa = params.decay_kappa
    diff = params.diffusion_d
    cell_volume = grid.cell_volume
    source_cells = [
        (grid.cell_of(s.position), s.strength / cell_volume, s.start, s.end)
        for s in params.sources
        if s.strength > 0
    ]
    always_on = all(s.start == 0.0 and s.end == math.inf for s in params.sources)
    pinned = config.boundary is BoundaryCondition.ABSORBING
    if pinned:
        _pin_edges(u)
    times = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    times[0] = grid.time_years
    mass[0] = u.sum() * cell_volume
    snapshots: list[tuple[float, np.ndarray]] = []
    t = grid.time_years
    for step in range(1, n_steps + 1):
        lap = _laplacian(u, h, dim)
        u += dt * (diff * lap - kappa * u)
        for cell, rate, start, end in source_cells:
            if always_on or (start <= t < end):
                u[cell] += dt * rate
        if pinned:
            _pin_edges(u)
        t = grid.time_years + step * dt
        times[step] = t
        mass[step] = u.sum() * cell_volume
        if config.record_every and step % config.record_every == 0:
            snapshots.append((t, u.copy()))
    final = FieldGrid(dim=dim, spacing_km=h, values=u, time_years=t)
    return SimulationResult(final=final, times=times, mass=mass, snapshots=snapshots)


def _pin_edges(u: np.ndarray) -> None:
    if u.ndim == 1:
        u[0] = 0.0
        u[-1] = 0.0
    else:
        u[0, :] = 0.0
        u[-1, :] = 0.0
        u[:, 0] = 0.0
        u[:, -1] = 0.0


def closure_decay(grid: FieldGrid, params: PdeParams, config: SimulationConfig) -> ClosureResult:
    """Fit the post-shutdown decay rate of total mass.

    Starting from a field (typically a converged steady state) with all
    sources removed, the total mass under zero-flux boundaries decays
    as exp(-kappa t); the OLS slope of ln(mass) on time recovers
    -kappa. Under absorbing boundaries edge losses steepen the slope.
    """
    if params.sources:
        raise InvalidConfig("closure runs must have no active sources")
    result = solve_transient(grid, params, config)
    positive = result.mass > 0.0
    if positive.sum() < 2:
        raise WindowTooSmall("not enough positive mass readings to fit a decay slope")
    t = result.times[positive]
    logm = np.log(result.mass[positive])
    x = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(x, logm, rcond=None)
    return ClosureResult(
        slope=float(coef[1]),
        intercept=float(coef[0]),
        times=result.times,
        mass=result.mass,
        final=result.final,
    )


def recover_kappa_eff(
    grid: FieldGrid,
    source_position: tuple[float, ...],
    window_km: tuple[float, float] | None = None,
    min_cells: int = 10,
) -> float:
    """Effective spatial decay rate from a field's radial profile.

    Regresses ln(u) on radial distance from the source over a window
    that skips the three cells nearest the source (near-field) and
    stops at half the source-to-boundary distance (far-field boundary
    contamination), then returns the negated slope. For a steady
    point-source field this recovers sqrt(kappa / D).
    """
    position = source_position if isinstance(source_position, tuple) else (float(source_position),)
    radii = grid.radii_from(position).ravel()
    values = grid.values.ravel()
    if window_km is None:
        edge = _distance_to_nearest_edge(grid, position)
        window_km = (3.0 * grid.spacing_km, 0.5 * edge)
    lo, hi = window_km
    if not lo < hi:
        raise WindowTooSmall(f"empty radial window [{lo:g}, {hi:g}]")
    mask = (radii >= lo) & (radii <= hi) & (values > 0.0)
    if int(mask.sum()) < min_cells:
        raise WindowTooSmall(
            f"only {int(mask.sum())} usable cells in window [{lo:g}, {hi:g}] "
            f"(need {min_cells})"
        )
    r = radii[mask]
    logu = np.log(values[mask])
    x = np.column_stack([np.ones_like(r), r])
    coef, *_ = np.linalg.lstsq(x, logu, rcond=None)
    return float(-coef[1])


def _distance_to_nearest_edge(grid: FieldGrid, position: tuple[float, ...]) -> float:
    dists = []
    for ax in range(grid.dim):
        centers = grid.axis_centers(ax)
        dists.append(position[ax] - centers[0])
        dists.append(centers[-1] - position[ax])
    return float(min(dists))
