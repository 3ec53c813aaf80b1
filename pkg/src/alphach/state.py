"""Domain types for Eulerian and Lagrangian states plus their invariant checkers.

Eulerian data is ``(u, rho, mu, nu)`` sampled on a spatial grid, where the two
energy measures are stored as an absolutely continuous density on a grid plus a
finite list of atoms. Lagrangian data is the nodewise tuple
``(y, U, q, w, hbar, h, r)`` on a grid of labels ``xi`` together with the
cumulative dissipated energy per label (``loss``) and a per-node breaking count.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np


class AlphaCHError(Exception):
    """Base class for all package errors."""


class StructuralError(AlphaCHError, ValueError):
    """Malformed input: mismatched lengths, non-monotone grids, NaNs."""


class DomainError(AlphaCHError, ValueError):
    """Input is well-formed but outside the admissible set."""


class DegenerateGridError(DomainError):
    pass


class ConfigError(AlphaCHError, ValueError):
    pass


class IntegrationError(AlphaCHError, RuntimeError):
    """Raised when the time stepper detects invariant drift.

    ``report`` holds the failing :class:`InvariantReport` and ``trajectory``
    the snapshots accepted before the failure (possibly ``None``).
    """

    def __init__(self, message, report=None, trajectory=None):
        super().__init__(message)
        self.report = report
        self.trajectory = trajectory


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    """Nodal weights of the composite trapezoidal rule on a (possibly nonuniform) grid."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    dx = np.diff(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def split_weights(x: np.ndarray, split: np.ndarray) -> np.ndarray:
    """Node weights when cell ``[x_i, x_i+1]`` gives the fraction ``split_i`` of its length to ``x_i``."""
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    d = np.diff(x)
    w[:-1] += split * d
    w[1:] += (1.0 - split) * d
    return w


def _as_float_array(a, name):
    arr = np.array(a, dtype=float, copy=True).ravel()
    return arr


@dataclass
class Measure:
    """Positive finite measure = density on ``grid`` + finitely many atoms."""

    grid: np.ndarray
    ac_density: np.ndarray
    atom_locations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_masses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # optional exact mass of each grid cell; when present it overrides the
    # trapezoidal rule for masses and integrals (push-forwards carry it)
    cell_mass: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = _as_float_array(self.grid, "grid")
        self.ac_density = _as_float_array(self.ac_density, "ac_density")
        self.atom_locations = _as_float_array(self.atom_locations, "atom_locations")
        self.atom_masses = _as_float_array(self.atom_masses, "atom_masses")
        if self.cell_mass is not None:
            self.cell_mass = _as_float_array(self.cell_mass, "cell_mass")
            if self.cell_mass.size != max(self.grid.size - 1, 0):
                raise StructuralError("cell_mass must have one entry per grid cell")
        if self.grid.shape != self.ac_density.shape:
            raise StructuralError("measure grid and density have different lengths")
        if self.atom_locations.shape != self.atom_masses.shape:
            raise StructuralError("atom locations and masses have different lengths")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise StructuralError("measure grid must be strictly increasing")

    @classmethod
    def zero(cls, grid) -> "Measure":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.zeros_like(grid))

    @classmethod
    def from_atoms(cls, grid, locations, masses) -> "Measure":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.zeros_like(grid), locations, masses)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_locations.tolist(), self.atom_masses.tolist()))

    def ac_mass(self) -> float:
        if self.cell_mass is not None:
            return float(self.cell_mass.sum())
        return float(np.trapezoid(self.ac_density, self.grid)) if self.grid.size > 1 else 0.0

    def cell_masses(self) -> np.ndarray:
        """Mass of each grid cell (trapezoidal unless given explicitly)."""
        if self.cell_mass is not None:
            return self.cell_mass
        return 0.5 * (self.ac_density[1:] + self.ac_density[:-1]) * np.diff(self.grid)

    def singular_mass(self) -> float:
        return float(np.sum(self.atom_masses))

    def total_mass(self) -> float:
        return self.ac_mass() + self.singular_mass()

    def density_at(self, x) -> np.ndarray:
        """Piecewise-linear density, zero outside the grid."""
        return np.interp(x, self.grid, self.ac_density, left=0.0, right=0.0)

    def integrate(self, phi_grid: np.ndarray, phi_atoms: np.ndarray) -> float:
        """Integral of a test function given by its values on the grid and at the atoms."""
        phi_grid = np.asarray(phi_grid, dtype=float)
        if self.grid.size < 2:
            ac = 0.0
        elif self.cell_mass is not None:
            ac = float(np.sum(self.cell_mass * 0.5 * (phi_grid[1:] + phi_grid[:-1])))
        else:
            ac = float(np.trapezoid(phi_grid * self.ac_density, self.grid))
        return ac + float(np.sum(np.asarray(phi_atoms) * self.atom_masses))

    def problems(self, tol: float = 0.0) -> dict[str, float]:
        out = {
            "ac_nonneg": float(max(0.0, -self.ac_density.min(initial=0.0))),
            "atoms_nonneg": float(max(0.0, -self.atom_masses.min(initial=0.0))),
            "atoms_ordered": 0.0,
            "cells_nonneg": float(max(0.0, -self.cell_mass.min(initial=0.0))) if self.cell_mass is not None else 0.0,
            "finite": 0.0 if np.isfinite(self.total_mass()) else np.inf,
        }
        if self.atom_locations.size > 1:
            gaps = np.diff(self.atom_locations)
            out["atoms_ordered"] = float(max(0.0, -gaps.min()))
            if np.any(gaps <= 0):
                out["atoms_ordered"] = max(out["atoms_ordered"], np.finfo(float).tiny)
        return out


@dataclass
class EulerianState:
    """Element of the Eulerian set: velocity, density and the two energy measures.

    ``ux`` optionally carries exact derivative samples of ``u``; when absent the
    derivative is recovered by finite differences.
    """

    grid: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    mu: Measure
    nu: Measure
    ux: Optional[np.ndarray] = None
    t: float = 0.0

    def __post_init__(self):
        self.grid = _as_float_array(self.grid, "grid")
        self.u = _as_float_array(self.u, "u")
        self.rho = _as_float_array(self.rho, "rho")
        if self.ux is not None:
            self.ux = _as_float_array(self.ux, "ux")
        n = self.grid.size
        for name in ("u", "rho") + (("ux",) if self.ux is not None else ()):
            if getattr(self, name).size != n:
                raise StructuralError(f"{name} has length {getattr(self, name).size}, grid has {n}")
        if n > 1 and np.any(np.diff(self.grid) <= 0):
            raise StructuralError("Eulerian grid must be strictly increasing")

    @classmethod
    def zero(cls, grid) -> "EulerianState":
        grid = np.asarray(grid, dtype=float)
        z = np.zeros_like(grid)
        return cls(grid, z, z.copy(), Measure.zero(grid), Measure.zero(grid), ux=z.copy())

    @classmethod
    def from_samples(cls, grid, u, rho=None, ux=None, t=0.0) -> "EulerianState":
        """State with ``mu = nu = (u_x^2 + rho^2) dx``."""
        grid = np.asarray(grid, dtype=float)
        u = np.asarray(u, dtype=float)
        rho = np.zeros_like(u) if rho is None else np.asarray(rho, dtype=float)
        if ux is None:
            ux = finite_difference(u, grid)
        dens = np.asarray(ux) ** 2 + rho**2
        return cls(grid, u, rho, Measure(grid, dens), Measure(grid, dens.copy()), ux=ux, t=t)

    def u_x(self) -> np.ndarray:
        if self.ux is not None:
            return self.ux
        return finite_difference(self.u, self.grid)

    def copy(self) -> "EulerianState":
        return copy.deepcopy(self)


def finite_difference(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Centered differences inside, second-order one-sided stencils at the ends."""
    if u.size < 3:
        return np.gradient(u, x) if u.size > 1 else np.zeros_like(u)
    return np.gradient(u, x, edge_order=2)


_LAG_FIELDS = ("y", "U", "q", "w", "hbar", "h", "r", "loss")


@dataclass
class LagrangianState:
    """Nodewise Lagrangian state on the label grid ``xi``.

    ``q`` and ``w`` stand for the label derivatives of ``y`` and ``U``; they
    are evolved as independent unknowns.
    """

    xi: np.ndarray
    y: np.ndarray
    U: np.ndarray
    q: np.ndarray
    w: np.ndarray
    hbar: np.ndarray
    h: np.ndarray
    r: np.ndarray
    loss: Optional[np.ndarray] = None
    breaks: Optional[np.ndarray] = None
    t: float = 0.0
    # fraction of each label cell assigned to its left node; None means trapezoidal
    split: Optional[np.ndarray] = None

    def __post_init__(self):
        self.xi = _as_float_array(self.xi, "xi")
        n = self.xi.size
        if self.loss is None:
            self.loss = np.asarray(self.h, dtype=float) - np.asarray(self.hbar, dtype=float)
        if self.breaks is None:
            self.breaks = np.zeros(n, dtype=np.int64)
        for name in _LAG_FIELDS:
            arr = _as_float_array(getattr(self, name), name)
            if arr.size != n:
                raise StructuralError(f"field {name} has length {arr.size}, expected {n}")
            setattr(self, name, arr)
        self.breaks = np.array(self.breaks, dtype=np.int64).ravel()
        if self.breaks.size != n:
            raise StructuralError("breaks has the wrong length")
        if n > 1 and np.any(np.diff(self.xi) <= 0):
            raise StructuralError("label grid must be strictly increasing")
        if self.split is not None:
            self.split = np.asarray(self.split, dtype=float).ravel()
            if self.split.size != max(n - 1, 0):
                raise StructuralError("split must have one entry per label cell")
            if np.any(~(self.split >= 0) | ~(self.split <= 1)):
                raise StructuralError("split fractions must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.xi.size

    @classmethod
    def identity(cls, xi) -> "LagrangianState":
        xi = np.asarray(xi, dtype=float)
        z = np.zeros_like(xi)
        return cls(xi, xi.copy(), z.copy(), np.ones_like(xi), z.copy(), z.copy(), z.copy(), z.copy())

    def weights(self) -> np.ndarray:
        """Quadrature weights of the nodes (trapezoidal unless ``split`` is set)."""
        if self.split is None:
            return trapezoid_weights(self.xi)
        return split_weights(self.xi, self.split)

    def copy(self) -> "LagrangianState":
        return copy.deepcopy(self)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ("xi",) + _LAG_FIELDS}


@dataclass(frozen=True)
class BreakingEvent:
    """One wave-breaking jump at a single node.

    ``loss_mass`` is the drop of ``hbar`` at the node (energy density, not
    weighted by the quadrature). The detection-time values of ``q``, ``w`` and
    ``r`` are kept so spurious grazing detections can be audited.
    """

    node: int
    tau: float
    loss_mass: float
    hbar_before: float = 0.0
    q: float = 0.0
    w: float = 0.0
    r: float = 0.0


_INTEGRATORS = ("rk4", "heun")
_QUADRATURES = ("trapezoid", "kink")


@dataclass
class SolverConfig:
    n_nodes: int = 1024
    dt: float = 1e-3
    alpha: float = 0.0
    xi_min: Optional[float] = None
    xi_max: Optional[float] = None
    # None selects 1e-6 * median(q + h) of the initial state
    eps_collision: Optional[float] = None
    eps_invariant: float = 1e-8
    floor: float = 1e-8
    quadrature: str = "trapezoid"
    integrator: str = "rk4"
    eta: float = 1.0
    check_truncation: bool = True

    def validate(self) -> "SolverConfig":
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.eps_collision is not None and not self.eps_collision > 0:
            raise ConfigError("eps_collision must be positive")
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be at least 2")
        if self.xi_min is not None and self.xi_max is not None and not self.xi_min < self.xi_max:
            raise ConfigError("xi_min must be smaller than xi_max")
        if self.quadrature not in _QUADRATURES:
            raise ConfigError(f"quadrature must be one of {_QUADRATURES}")
        if self.integrator not in _INTEGRATORS:
            raise ConfigError(f"integrator must be one of {_INTEGRATORS}")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def default_eps_collision(theta: LagrangianState) -> float:
    return 1e-6 * float(np.median(theta.q + theta.h))


# ----------------------------------------------------------------------------
# invariant checks


@dataclass
class InvariantReport:
    violations: dict[str, float]
    tol: float
    messages: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.violations.items() if not v <= self.tol}

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        lines = []
        for k, v in self.violations.items():
            status = "ok  " if v <= self.tol else "FAIL"
            msg = self.messages.get(k, "")
            lines.append(f"{status} {k:<20s} {v:.3e} {msg}".rstrip())
        return "\n".join(lines)


def check_lagrangian(theta: LagrangianState, tol: float = 1e-8, floor: float = 1e-8) -> InvariantReport:
    """Evaluate every nodewise invariant of the admissible Lagrangian set.

    Returns the worst violation per invariant; the state is not modified.
    """
    n = theta.n
    for name in _LAG_FIELDS:
        if getattr(theta, name).size != n:
            raise StructuralError(f"field {name} has the wrong length")
    y, q, w, hb, h, r = theta.y, theta.q, theta.w, theta.hbar, theta.h, theta.r

    def worst(a):
        return float(np.max(a, initial=0.0))

    v = {
        "q_nonneg": worst(-q),
        "h_nonneg": worst(-h),
        "hbar_nonneg": worst(-hb),
        "hbar_le_h": worst(hb - h),
        "energy_identity": worst(np.abs(q * hb - w**2 - r**2)),
        "loss_ledger": worst(np.abs(hb - (h - theta.loss))),
        "q_plus_h_floor": worst(floor - (q + h)),
        "y_monotone": worst(-np.diff(y)) if n > 1 else 0.0,
        "finite": 0.0,
        "degenerate_nodes": 0.0,
    }
    if not all(np.all(np.isfinite(getattr(theta, k))) for k in _LAG_FIELDS):
        v["finite"] = np.inf
    flat = q <= 0.0
    if np.any(flat):
        v["degenerate_nodes"] = worst(np.abs(w[flat]) + np.abs(r[flat]))
    return InvariantReport(v, tol)


def check_eulerian(e: EulerianState, tol: float = 1e-8) -> InvariantReport:
    """Check an Eulerian state: measure positivity, mu_ac = u_x^2 + rho^2, mu <= nu."""
    if e.grid.size > 1 and np.any(np.diff(e.grid) <= 0):
        raise StructuralError("non-monotone grid")
    ux = e.u_x()
    mu_ac = e.mu.density_at(e.grid)
    e.nu.density_at(e.grid)
    v = {
        "finite": 0.0,
        "mu_ac_consistency": float(np.max(np.abs(mu_ac - (ux**2 + e.rho**2)), initial=0.0)),
        "mu_le_nu_ac": 0.0,
        "mu_le_nu_atoms": 0.0,
    }
    msgs = {}
    for key, m in (("mu", e.mu), ("nu", e.nu)):
        for k, val in m.problems().items():
            if k == "finite":
                v["finite"] = max(v["finite"], val)
            else:
                v[f"{key}_{k}"] = val
    for arr in (e.u, e.rho, ux):
        if not np.all(np.isfinite(arr)):
            v["finite"] = np.inf
    # compare on the union of both density grids so no node is skipped
    xs = np.union1d(e.mu.grid, e.nu.grid)
    v["mu_le_nu_ac"] = float(np.max(e.mu.density_at(xs) - e.nu.density_at(xs), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(e.grid), initial=1.0)))
    for loc, m in zip(e.mu.atom_locations, e.mu.atom_masses):
        near = np.abs(e.nu.atom_locations - loc) <= 1e-9 * scale
        m_nu = float(e.nu.atom_masses[near].sum()) if np.any(near) else 0.0
        v["mu_le_nu_atoms"] = max(v["mu_le_nu_atoms"], m - m_nu)
    if v["mu_le_nu_atoms"] > tol or v["mu_le_nu_ac"] > tol:
        msgs["mu_le_nu_atoms"] = "mu <= nu violated"
        msgs["mu_le_nu_ac"] = "mu <= nu violated"
    return InvariantReport(v, tol, msgs)
