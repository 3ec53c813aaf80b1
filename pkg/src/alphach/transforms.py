"""Maps between Eulerian and Lagrangian data, relabeling and normalization.

``to_lagrangian`` builds the characteristic from the cumulative energy,
``y(xi) = sup{x : nu((-inf, x)) + x < xi}``, so each atom of ``nu`` becomes a
plateau of ``y`` whose label length equals the atom mass. ``to_eulerian``
pushes ``hbar d xi`` and ``h d xi`` forward by ``y``; runs of collapsed nodes
(``q`` below a threshold) turn back into atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import (
    DegenerateGridError,
    DomainError,
    EulerianState,
    LagrangianState,
    Measure,
    StructuralError,
    default_eps_collision,
)

_BISECT_ITERS = 200


# ----------------------------------------------------------------------------
# Eulerian -> Lagrangian


def _cumulative_linear(grid, dens):
    """Node values of the exact integral of the piecewise-linear density."""
    c = np.zeros_like(grid)
    if grid.size > 1:
        c[1:] = np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))
    return c


def _ac_cdf(m: Measure, x, kinks=None):
    """``m_ac((-inf, x))``, zero density outside the grid.

    With explicit cell masses the density is constant on each cell, except in
    cells with a kink offset in ``kinks``, where the cell mass is shared out
    in proportion to the node densities on either side of the kink.
    Without cell masses the density is the piecewise-linear interpolant of
    the node samples.
    """
    x = np.asarray(x, dtype=float)
    g, d = m.grid, m.ac_density
    if g.size < 2:
        return np.zeros_like(x)
    j = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
    s = np.clip(x, g[0], g[-1]) - g[j]
    if m.cell_mass is not None:
        c = np.concatenate([[0.0], np.cumsum(m.cell_mass)])
        D = g[j + 1] - g[j]
        out = c[j] + m.cell_mass[j] * s / D
        if kinks is not None:
            a = kinks[j]
            k = np.isfinite(a)
            if np.any(k):
                a, dl, dr, cm, sk, Dk = a[k], d[j[k]], d[j[k] + 1], m.cell_mass[j[k]], s[k], D[k]
                tot = dl * a + dr * (Dk - a)
                part = np.where(sk <= a, dl * sk, dl * a + dr * (sk - a))
                with np.errstate(invalid="ignore", divide="ignore"):
                    frac = np.where(tot > 0, part / np.where(tot > 0, tot, 1.0), sk / Dk)
                out[k] = c[j[k]] + cm * frac
        return out
    c = _cumulative_linear(g, d)
    slope = (d[j + 1] - d[j]) / (g[j + 1] - g[j])
    return c[j] + d[j] * s + 0.5 * slope * s**2


def _matching_mass(locs, masses, a, tol):
    near = np.abs(locs - a) <= tol
    return float(masses[near].sum()) if np.any(near) else 0.0


def _same_grid(a, b) -> bool:
    return a.shape == b.shape and bool(np.array_equal(a, b))


def _density_at(m: Measure, x, kinks=None):
    if kinks is None or m.grid.size < 2:
        return m.density_at(x)
    inside = (x >= m.grid[0]) & (x <= m.grid[-1])
    return np.where(inside, _interp_density(x, m.grid, m.ac_density, kinks), 0.0)


def to_lagrangian(e: EulerianState, n_nodes: int) -> LagrangianState:
    """Lagrangian image of ``e`` on a uniform label grid with ``n_nodes`` nodes.

    The output satisfies ``q + h = 1`` at every node. Off the atom plateaus the
    characteristic is found by bisection on ``G(x) = nu_ac((-inf, x)) + x``.
    """
    if n_nodes < 2:
        raise StructuralError("n_nodes must be at least 2")
    nu, mu = e.nu, e.mu
    if not np.isfinite(nu.total_mass()) or not np.isfinite(mu.total_mass()):
        raise DomainError("nu must be a finite measure")
    if np.any(nu.ac_density < 0) or np.any(nu.atom_masses < 0):
        raise DomainError("nu must be nonnegative")
    x0, xK = float(e.grid[0]), float(e.grid[-1])
    if np.any((nu.atom_locations < x0) | (nu.atom_locations > xK)):
        raise DomainError("atoms of nu must lie inside the grid")

    order = np.argsort(nu.atom_locations)
    a_loc = nu.atom_locations[order]
    a_mass = nu.atom_masses[order]
    keep = a_mass > 0
    a_loc, a_mass = a_loc[keep], a_mass[keep]

    # peaks between grid points: locate them from the tangents of u
    kinks = None
    if e.grid.size >= 3 and e.ux is not None:
        ux_g = e.u_x()
        kinks = _kink_position(e.grid, e.u, ux_g, _kink_cells(ux_g))
        if not np.any(np.isfinite(kinks)):
            kinks = None
    nu_k = kinks if _same_grid(nu.grid, e.grid) else None
    mu_k = kinks if _same_grid(mu.grid, e.grid) else None

    def G(x):
        return np.asarray(x) + _ac_cdf(nu, x, nu_k)

    # plateau k occupies labels [lo_k, hi_k]
    mass_before = np.concatenate([[0.0], np.cumsum(a_mass)[:-1]]) if a_mass.size else np.zeros(0)
    lo = G(a_loc) + mass_before
    hi = lo + a_mass

    xi0 = float(G(x0))
    xiN = float(G(xK)) + float(a_mass.sum())
    xi = np.linspace(xi0, xiN, n_nodes)

    plateau = np.full(n_nodes, -1, dtype=np.int64)
    for k in range(a_loc.size):
        plateau[(xi >= lo[k]) & (xi <= hi[k])] = k
    on = plateau >= 0

    # subtract the atom mass lying to the left, then invert G by bisection
    shift = np.zeros(n_nodes)
    for k in range(a_loc.size):
        shift[xi > hi[k]] += a_mass[k]
    target = xi - shift
    left = np.full(n_nodes, x0)
    right = np.full(n_nodes, xK)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (left + right)
        below = G(mid) < target
        left = np.where(below, mid, left)
        right = np.where(below, right, mid)
        if np.all(right - left <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
            break
    y = 0.5 * (left + right)
    y[on] = a_loc[plateau[on]]
    y = np.clip(y, x0, xK)

    nu_ac = _density_at(nu, y, nu_k)
    mu_ac = np.minimum(_density_at(mu, y, mu_k), nu_ac)
    q = 1.0 / (1.0 + nu_ac)
    if kinks is None:
        rho = np.interp(y, e.grid, e.rho)
        ux = np.interp(y, e.grid, e.u_x())
        U = np.interp(y, e.grid, e.u)
    else:
        rho = _interp_density(y, e.grid, e.rho, kinks)
        ux = _interp_density(y, e.grid, e.u_x(), kinks)
        U = _interp_kinked(y, e.grid, e.u, e.u_x(), kinks)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(nu_ac > 0, mu_ac / np.where(nu_ac > 0, nu_ac, 1.0), 1.0)
    # hbar = f h = mu_ac q, and w is recovered from mu_ac so that q hbar = w^2 + r^2 holds exactly
    rho_c = np.sign(rho) * np.minimum(np.abs(rho), np.sqrt(mu_ac))
    r = rho_c * q
    w = np.where(ux < 0, -1.0, 1.0) * np.sqrt(np.maximum(mu_ac - rho_c**2, 0.0)) * q

    q[on] = 0.0
    w[on] = 0.0
    r[on] = 0.0
    tol = 1e-12 * max(1.0, abs(x0), abs(xK))
    for k in range(a_loc.size):
        sel = plateau == k
        f[sel] = min(1.0, _matching_mass(mu.atom_locations, mu.atom_masses, a_loc[k], tol) / a_mass[k])
    h = 1.0 - q
    hbar = f * h
    return LagrangianState(xi, y, U, q, w, hbar, h, r, loss=h - hbar, t=e.t)


# ----------------------------------------------------------------------------
# Lagrangian -> Eulerian


def _group_nodes(y: np.ndarray, flat: np.ndarray, ytol: float, tiny: float) -> np.ndarray:
    """Group id per node: each run of collapsed nodes at one position forms a
    group, every other node is its own group unless it sits on its predecessor."""
    yy = np.maximum.accumulate(y)
    dy = np.diff(yy)
    same = (flat[1:] & flat[:-1] & (dy <= ytol)) | (dy <= tiny)
    return np.concatenate([[0], np.cumsum(~same)])


def _group_mean(gid, v, ng, mask=None):
    wt = np.ones_like(v) if mask is None else mask.astype(float)
    cnt = np.bincount(gid, weights=wt, minlength=ng)
    tot = np.bincount(gid, weights=v * wt, minlength=ng)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt > 0, tot / np.where(cnt > 0, cnt, 1.0), np.nan), cnt > 0


def _fill_nan(x, v):
    ok = np.isfinite(v)
    if not np.any(ok):
        return np.zeros_like(v)
    return np.where(ok, v, np.interp(x, x[ok], v[ok]))


def _push_forward(xi_w, dens, flat, gid, ng, split=None):
    """Cell masses and atom masses of ``y_# (dens d xi)``.

    Every node carries its quadrature weight; the half-cells of collapsed
    nodes go to the atom of their group, the half-cells of regular nodes to
    the adjacent grid cell. Total mass equals the label quadrature.
    """
    dxi = np.diff(xi_w)
    frac = 0.5 if split is None else split
    left = frac * dens[:-1] * dxi
    right = (1.0 - frac) * dens[1:] * dxi
    atoms = np.zeros(ng)
    cells = np.zeros(max(ng - 1, 0))
    ga, gb = gid[:-1], gid[1:]
    for half, node_flat, g_own in ((left, flat[:-1], ga), (right, flat[1:], gb)):
        np.add.at(atoms, g_own[node_flat], half[node_flat])
        reg = ~node_flat
        cross = reg & (ga != gb)
        np.add.at(cells, ga[cross], half[cross])
        # a regular half-cell whose ends share a group: attach to a neighbouring cell
        stuck = reg & (ga == gb)
        if np.any(stuck) and cells.size:
            np.add.at(cells, np.minimum(ga[stuck], cells.size - 1), half[stuck])
        elif np.any(stuck):
            np.add.at(atoms, ga[stuck], half[stuck])
    return cells, atoms


def to_eulerian(
    theta: LagrangianState,
    x_grid=None,
    eps: float | None = None,
) -> EulerianState:
    """Push the Lagrangian state forward to ``(u, rho, mu, nu)``.

    Parameters
    ----------
    x_grid : array, optional
        If given, ``u``, ``rho`` and ``u_x`` are interpolated onto it. The
        measures always live on the native grid of characteristic positions,
        with each cell carrying the exact push-forward of its label cell.
    eps : float, optional
        Nodes with ``q <= eps`` count as collapsed. Defaults to
        ``1e-6 * median(q + h)``.

    Raises
    ------
    DomainError
        If the state has negative energy densities or ``q``.
    """
    if eps is None:
        eps = default_eps_collision(theta)
    if np.any(theta.q < -1e-10) or np.any(theta.hbar < -1e-10) or np.any(theta.h < -1e-10):
        raise DomainError("Lagrangian state is not admissible (negative q or energy)")
    xi, y, U, q = theta.xi, theta.y, theta.U, theta.q
    n = xi.size
    dxi = float(np.max(np.diff(xi))) if n > 1 else 1.0
    span = float(y[-1] - y[0]) if n > 1 else 1.0
    ytol = max(10.0 * eps * dxi, 1e-13 * max(1.0, span))
    tiny = 1e-13 * max(1.0, span)

    flat = q <= eps
    reg = ~flat
    gid = _group_nodes(y, flat, ytol, tiny)
    ng = int(gid[-1]) + 1

    hw = theta.weights() * theta.h
    has_atom = np.bincount(gid, weights=flat.astype(float), minlength=ng) > 0
    # position: h-weighted over collapsed nodes for atom groups, plain mean otherwise
    pos, _ = _group_mean(gid, np.maximum.accumulate(y), ng)
    if np.any(has_atom):
        num = np.bincount(gid, weights=hw * y * flat, minlength=ng)
        den = np.bincount(gid, weights=hw * flat, minlength=ng)
        cnt = np.bincount(gid, weights=flat.astype(float), minlength=ng)
        ysum = np.bincount(gid, weights=y * flat, minlength=ng)
        with np.errstate(invalid="ignore", divide="ignore"):
            apos = np.where(den > 0, num / np.where(den > 0, den, 1.0), ysum / np.maximum(cnt, 1.0))
        pos = np.where(has_atom, apos, pos)
    pos = np.maximum.accumulate(pos)
    if ng > 1 and np.any(np.diff(pos) <= 0):
        # numerical ties after averaging; nudge by rounding-level offsets
        pos = pos + np.arange(ng) * np.spacing(np.maximum(1.0, np.abs(pos)))

    with np.errstate(divide="ignore", invalid="ignore"):
        qs = np.where(reg, q, 1.0)
        d_mu = theta.hbar / qs
        d_nu = theta.h / qs
        rho = theta.r / qs
        ux = theta.w / qs

    dmu_g, _ = _group_mean(gid, d_mu, ng, reg)
    dnu_g, _ = _group_mean(gid, d_nu, ng, reg)
    rho_g, _ = _group_mean(gid, rho, ng, reg)
    ux_g, _ = _group_mean(gid, ux, ng, reg)
    dmu_g, dnu_g, rho_g, ux_g = (_fill_nan(pos, v) for v in (dmu_g, dnu_g, rho_g, ux_g))
    u_g, _ = _group_mean(gid, U, ng)

    cm_mu, at_mu = _push_forward(xi, theta.hbar, flat, gid, ng, theta.split)
    cm_nu, at_nu = _push_forward(xi, theta.h, flat, gid, ng, theta.split)
    a_idx = np.flatnonzero(has_atom)

    if ng < 2:
        pos = np.array([pos[0], pos[0] + 1.0])
        dmu_g, dnu_g, rho_g, ux_g, u_g = (np.repeat(v[:1], 2) for v in (dmu_g, dnu_g, rho_g, ux_g, u_g))
        cm_mu = np.zeros(1)
        cm_nu = np.zeros(1)
    mu = Measure(pos, dmu_g, pos[a_idx], at_mu[a_idx], cell_mass=cm_mu)
    nu = Measure(pos.copy(), dnu_g, pos[a_idx].copy(), at_nu[a_idx], cell_mass=cm_nu)

    xg, u_n, rho_n, ux_n = pos, u_g, rho_g, ux_g
    if x_grid is not None:
        x_grid = np.asarray(x_grid, dtype=float)
        u_n = np.interp(x_grid, xg, u_n)
        rho_n = np.interp(x_grid, xg, rho_n, left=0.0, right=0.0)
        ux_n = np.interp(x_grid, xg, ux_n, left=0.0, right=0.0)
        xg = x_grid
    return EulerianState(xg, u_n, rho_n, mu, nu, ux=ux_n, t=theta.t)


# ----------------------------------------------------------------------------
# relabeling


@dataclass
class RelabelingFunction:
    """Samples of a monotone label map ``f`` and its derivative on ``xi``.

    Outside the sampled range ``f - id`` is extended by constancy.
    """

    xi: np.ndarray
    f: np.ndarray
    f_xi: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.f_xi = np.asarray(self.f_xi, dtype=float)
        if not (self.xi.shape == self.f.shape == self.f_xi.shape):
            raise StructuralError("relabeling arrays must have equal lengths")

    @classmethod
    def identity(cls, xi) -> "RelabelingFunction":
        xi = np.asarray(xi, dtype=float)
        return cls(xi, xi.copy(), np.ones_like(xi))

    def __call__(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Values and derivatives of ``f`` at arbitrary labels ``s``."""
        s = np.asarray(s, dtype=float)
        val = s + np.interp(s, self.xi, self.f - self.xi)
        inside = (s >= self.xi[0]) & (s <= self.xi[-1])
        der = np.where(inside, np.interp(s, self.xi, self.f_xi), 1.0)
        return val, der


def compose(f: RelabelingFunction, g: RelabelingFunction) -> RelabelingFunction:
    """``f o g`` sampled on the grid of ``g``."""
    fv, fd = f(g.f)
    return RelabelingFunction(g.xi.copy(), fv, fd * g.f_xi)



def _reproject(q, w, r, hbar, loss, eps):
    """Restore ``q hbar = w^2 + r^2`` on regular nodes and ``w = r = 0`` on collapsed ones."""
    reg = q > eps
    hbar = np.where(reg, (w**2 + r**2) / np.where(reg, q, 1.0), hbar)
    w = np.where(reg, w, 0.0)
    r = np.where(reg, r, 0.0)
    return hbar, w, r, hbar + loss


def _kink_cells(slope: np.ndarray, ratio: float = 4.0) -> np.ndarray:
    """Cells whose slope jump exceeds ``ratio`` times the jump in either neighbouring cell."""
    d = np.abs(np.diff(slope))
    if d.size == 0:
        return np.zeros(0, dtype=bool)
    left = np.concatenate([[0.0], d[:-1]])
    right = np.concatenate([d[1:], [0.0]])
    return d > ratio * np.maximum(left, right) + 1e-14 * np.max(np.abs(slope))


def _kink_position(x, v, slope, cells):
    """Offset from the left node where the two end tangents of each cell meet.

    NaN where the cell is not a kink cell or the tangents meet outside it.
    """
    D = np.diff(x)
    den = slope[:-1] - slope[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (v[1:] - v[:-1] - slope[1:] * D) / den
    ok = cells & np.isfinite(a) & (a > 0) & (a < D)
    return np.where(ok, a, np.nan)


def _interp_kinked(s, x, v, slope, a):
    """Piecewise-linear interpolation that follows the end tangents in cells with a kink."""
    i = np.clip(np.searchsorted(x, s, side="right") - 1, 0, x.size - 2)
    t = np.clip(s, x[0], x[-1]) - x[i]
    D = x[i + 1] - x[i]
    lin = v[i] + (v[i + 1] - v[i]) * t / D
    ai = a[i]
    kinked = np.where(t <= ai, v[i] + slope[i] * t, v[i + 1] - slope[i + 1] * (D - t))
    return np.where(np.isfinite(ai), kinked, lin)


def _interp_density(s, x, dens, a):
    """Linear interpolation, except that in kink cells the density is taken from the side of the kink."""
    i = np.clip(np.searchsorted(x, s, side="right") - 1, 0, x.size - 2)
    t = np.clip(s, x[0], x[-1]) - x[i]
    ai = a[i]
    side = np.where(t <= ai, dens[i], dens[i + 1])
    return np.where(np.isfinite(ai), side, np.interp(s, x, dens))


def kink_split(theta: LagrangianState) -> np.ndarray:
    """Per-cell left fractions for the kink-aware label quadrature.

    In a cell where ``q`` or ``w`` jumps, the integrand jumps at the point
    where the end tangents of ``y`` (slope ``q``) or ``U`` (slope ``w``)
    meet; the part of the cell left of that point is given to the left node.
    All other cells are split evenly, as in the trapezoidal rule. A jump
    inside a cell costs the trapezoidal rule O(spacing) unless it sits at the
    midpoint; with the split the error is O(spacing^2) wherever it sits.
    """
    xi = theta.xi
    if xi.size < 3:
        return np.full(max(xi.size - 1, 0), 0.5)
    ay = _kink_position(xi, theta.y, theta.q, _kink_cells(theta.q))
    au = _kink_position(xi, theta.U, theta.w, _kink_cells(theta.w))
    a = np.where(np.isfinite(ay), ay, au)
    return np.where(np.isfinite(a), a / np.diff(xi), 0.5)


def relabel(theta: LagrangianState, f: RelabelingFunction, eps: float | None = None) -> LagrangianState:
    """``theta o f`` on the grid of ``f``.

    Positions and velocities are composed, densities are composed and
    multiplied by ``f_xi``. Interpolation is piecewise linear; in cells where
    ``q`` or ``w`` jumps (a peak, or the edge of a collapsed run) the
    breakpoint is placed where the end tangents ``y_xi = q`` and ``U_xi = w``
    meet, which keeps the composition second order across the jump. Linear
    interpolation does not preserve ``q hbar = w^2 + r^2``, so ``hbar`` is
    re-projected afterwards.
    """
    fv = f.f
    if np.any(np.diff(fv) <= 0) or np.any(f.f_xi <= 0):
        raise DomainError("relabeling function must be strictly increasing")
    xi = theta.xi
    if xi.size < 3:
        ay = au = np.full(max(xi.size - 1, 0), np.nan)
    else:
        ay = _kink_position(xi, theta.y, theta.q, _kink_cells(theta.q))
        au = _kink_position(xi, theta.U, theta.w, _kink_cells(theta.w))
    if xi.size < 2:
        raise StructuralError("need at least two labels to relabel")
    inside = (fv >= xi[0]) & (fv <= xi[-1])
    y = np.where(inside, _interp_kinked(fv, xi, theta.y, theta.q, ay), fv + np.interp(fv, xi, theta.y - xi))
    U = _interp_kinked(fv, xi, theta.U, theta.w, au)
    # densities follow the kink of y; cells flagged only through w use that of U
    a = np.where(np.isfinite(ay), ay, au)
    dens = {k: _interp_density(fv, xi, getattr(theta, k), a) * f.f_xi for k in ("q", "w", "hbar", "r", "loss")}
    nearest = np.clip(np.searchsorted(xi, fv), 0, xi.size - 1)
    if eps is None:
        eps = default_eps_collision(theta)
    hbar, w, r, h = _reproject(dens["q"], dens["w"], dens["r"], dens["hbar"], dens["loss"], eps)
    return LagrangianState(
        f.xi.copy(), y, U, dens["q"], w, hbar, h, r, loss=dens["loss"], breaks=theta.breaks[nearest], t=theta.t
    )


def is_relabeling(f: RelabelingFunction, edge_tol: float = 1e-2, edge_frac: float = 0.02) -> tuple[bool, float]:
    """Whether ``f`` is an admissible relabeling, and the smallest ``kappa`` with
    ``1/(1+kappa) <= f_xi <= 1+kappa`` on the grid.

    ``f - id`` cannot be tested for boundedness on a finite grid; instead
    ``f_xi`` must be within ``edge_tol`` of 1 on the outer ``edge_frac`` of the
    nodes at each end, which rules out linear growth.
    """
    d = f.f_xi
    if d.size == 0 or not np.all(np.isfinite(d)) or not np.all(np.isfinite(f.f)):
        return False, float("inf")
    if np.any(d <= 0) or np.any(np.diff(f.f) <= 0):
        return False, float("inf")
    kappa = float(max(d.max() - 1.0, 1.0 / d.min() - 1.0, 0.0))
    k = max(1, int(edge_frac * d.size))
    edges = np.concatenate([d[:k], d[-k:]])
    if np.max(np.abs(edges - 1.0)) > edge_tol:
        return False, kappa
    return True, kappa


def normalize(theta: LagrangianState, tol: float = 1e-12) -> LagrangianState:
    """Canonical representative with ``q + h = 1`` at every node.

    The nodes are kept and renamed by ``eta = y + H``, where ``y + H`` is
    accumulated cell by cell with the quadrature of the state (trapezoidal or
    split): a cell whose left part ``s`` carries the node value ``(q + h)_i``
    becomes an ``eta``-cell of length ``s (q + h)_i + (1 - s) (q + h)_{i+1}``
    times the label spacing, with left fraction ``s (q + h)_i`` over that
    length. Densities are divided by ``q + h``. Positions, velocities and every
    cell mass of the push-forward are unchanged, so the Eulerian image is too.

    Raises
    ------
    DegenerateGridError
        If ``y + H`` is not strictly increasing on the grid.
    """
    s = theta.q + theta.h
    if np.max(np.abs(s - 1.0), initial=0.0) <= tol:
        return theta.copy()
    if np.any(s <= 0):
        raise DegenerateGridError("q + h vanishes at a node; cannot normalize")
    d = np.diff(theta.xi)
    frac = np.full(d.size, 0.5) if theta.split is None else theta.split
    left = frac * d * s[:-1]
    right = (1.0 - frac) * d * s[1:]
    cell = left + right
    if np.any(cell <= 0):
        raise DegenerateGridError("y + H is not strictly increasing; cannot normalize")
    eta = theta.y[0] + np.concatenate([[0.0], np.cumsum(cell)])
    if np.any(np.diff(eta) <= 0):
        raise DegenerateGridError("y + H is not strictly increasing; cannot normalize")
    split = left / cell
    if theta.split is None and np.all(np.abs(split - 0.5) <= 1e-14):
        split = None
    return LagrangianState(
        eta,
        theta.y.copy(),
        theta.U.copy(),
        theta.q / s,
        theta.w / s,
        theta.hbar / s,
        theta.h / s,
        theta.r / s,
        loss=theta.loss / s,
        breaks=theta.breaks.copy(),
        t=theta.t,
        split=split,
    )


def normalize_eta(u, rho, eta: float):
    """Reduce the coupling ``eta`` to 1 by ``rho -> sqrt(eta) rho``."""
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    return np.asarray(u, dtype=float), np.sqrt(eta) * np.asarray(rho, dtype=float)


def sample_velocity(e: EulerianState, x) -> np.ndarray:
    """``u`` at arbitrary points, following the end tangents ``u_x`` across peaks.

    Plain linear interpolation of a peaked profile is off by O(spacing) next
    to the peak; where ``u_x`` jumps the interpolant is broken where the two
    tangents meet instead. Constant extension outside the grid.
    """
    x = np.asarray(x, dtype=float)
    g, u = e.grid, e.u
    if g.size < 3:
        return np.interp(x, g, u)
    ux = e.u_x()
    a = _kink_position(g, u, ux, _kink_cells(ux))
    return np.where((x < g[0]) | (x > g[-1]), np.interp(x, g, u), _interp_kinked(x, g, u, ux, a))
