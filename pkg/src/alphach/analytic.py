"""Closed-form peakon-antipeakon solution, before and after the collision at ``t0``.

The pair collides at ``t0``; a fraction ``alpha`` of the energy ``E**2`` is
dissipated and the solution restarts as a peakon-antipeakon pair with energy
scale ``E_tilde = sqrt(1 - alpha) * E``. The Lagrangian representation uses the
labels in which the initial characteristic is the identity, ``y(0, xi) = xi``.

Every inner-region expression is arranged so no ``0/0`` appears near ``t0``:
``B(t) * k(t)`` and ``B(t)**2 * k(t)`` are written through ``tanh(a/2)`` and
``cosh(a/2)`` with ``a = E_s (t - t0) / 2`` instead of forming ``B`` alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import DomainError, EulerianState, LagrangianState, Measure


@dataclass(frozen=True)
class PeakonParams:
    E: float = 2.0
    t0: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if not self.E > 0:
            raise DomainError("E must be positive")
        if not self.t0 > 0:
            raise DomainError("t0 must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError("alpha must lie in [0, 1]")

    @property
    def E_tilde(self) -> float:
        return float(np.sqrt(1.0 - self.alpha) * self.E)

    @property
    def gamma0(self) -> float:
        """Label half-width of the region that collapses at ``t0``."""
        return float(np.log(np.cosh(0.5 * self.E * self.t0)))

    @property
    def T0(self) -> float:
        return float(np.tanh(0.25 * self.E * self.t0) ** 2)

    def scale(self, t: float, side: str = "after") -> float:
        """Energy scale in force at ``t`` (``E`` before the collision, ``E_tilde`` after)."""
        if t < self.t0 or (t == self.t0 and side == "before"):
            return self.E
        return self.E_tilde


def _check_side(side):
    if side not in ("before", "after"):
        raise ValueError("side must be 'before' or 'after'")


def peak_position(p: PeakonParams, t: float) -> float:
    """gamma(t), the position of the right peak."""
    return float(np.log(np.cosh(0.5 * p.scale(t) * (t - p.t0))))


def pa_eulerian(p: PeakonParams, t: float, x) -> tuple[np.ndarray, np.ndarray]:
    """Velocity ``u(t, x)`` and its derivative ``u_x(t, x)``."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    Es = p.scale(t)
    a = 0.5 * Es * (t - p.t0)
    if a == 0.0:
        return np.zeros_like(x), np.zeros_like(x)
    A = 0.5 * Es * np.sinh(a)
    B = Es / np.sinh(a)
    gam = np.log(np.cosh(a))
    ax = np.abs(x)
    inner = ax <= gam
    ex = np.exp(-ax)
    u = np.where(inner, B * np.sinh(x), np.sign(x) * A * ex)
    ux = np.where(inner, B * np.cosh(x), -A * ex)
    return u, ux


def pa_lagrangian(p: PeakonParams, t: float, xi, side: str = "after") -> dict[str, np.ndarray]:
    """Closed-form Lagrangian node record ``(y, U, q, w, hbar, h, r, loss)`` at time ``t``.

    Parameters
    ----------
    side : {"after", "before"}
        Only used at ``t == t0``: ``"before"`` returns the left limit, where
        ``hbar == h``; ``"after"`` returns the post-collision value
        ``hbar = (1 - alpha) h``.
    """
    _check_side(side)
    if t < 0:
        raise DomainError("t must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    E, t0, g0, T0 = p.E, p.t0, p.gamma0, p.T0
    Es = p.scale(t, side)
    post = t > t0 or (t == t0 and side == "after")
    a = 0.5 * Es * (t - t0)
    A = 0.5 * Es * np.sinh(a)
    c = np.cosh(a) - np.cosh(0.5 * E * t0)

    axi = np.abs(xi)
    sgn = np.sign(xi)
    inner = axi < g0

    # outer region, |xi| >= gamma(0)
    e = np.exp(-axi)
    D = 1.0 + c * e
    y_o = xi + sgn * np.log(D)
    U_o = sgn * A * e / D
    q_o = 1.0 / D
    w_o = -A * e / D**2
    hb_o = A**2 * e**2 / D**3

    # inner region, |xi| < gamma(0)
    th = np.tanh(0.5 * xi)
    sech2 = 1.0 / np.cosh(0.5 * xi) ** 2
    ha = 0.5 * a
    k = np.tanh(ha) ** 2 / T0
    Bk = Es * np.tanh(ha) / (2.0 * np.cosh(ha) ** 2 * T0)
    B2k = Es**2 / (4.0 * np.cosh(ha) ** 4 * T0)
    s = th * k
    one_m = 1.0 - s**2
    y_i = 2.0 * np.arctanh(s)
    U_i = 2.0 * th * Bk / one_m
    q_i = k * sech2 / one_m
    w_i = Bk * (1.0 + s**2) * sech2 / one_m**2
    hb_i = B2k * (1.0 + s**2) ** 2 * sech2 / one_m**3

    loss = np.zeros_like(xi)
    if post:
        loss = np.where(inner, p.alpha * 0.25 * E**2 * sech2 / T0, 0.0)

    out = {
        "y": np.where(inner, y_i, y_o),
        "U": np.where(inner, U_i, U_o),
        "q": np.where(inner, q_i, q_o),
        "w": np.where(inner, w_i, w_o),
        "hbar": np.where(inner, hb_i, hb_o),
    }
    out["h"] = out["hbar"] + loss
    out["r"] = np.zeros_like(xi)
    out["loss"] = loss
    return out


def pa_lagrangian_state(p: PeakonParams, t: float, xi, side: str = "after") -> LagrangianState:
    rec = pa_lagrangian(p, t, xi, side)
    xi = np.asarray(xi, dtype=float)
    post = t > p.t0 or (t == p.t0 and side == "after")
    broke = (np.abs(xi) < p.gamma0) & post
    return LagrangianState(
        xi, rec["y"], rec["U"], rec["q"], rec["w"], rec["hbar"], rec["h"], rec["r"],
        loss=rec["loss"], breaks=broke.astype(np.int64), t=t,
    )


def pa_breaking_time(p: PeakonParams, xi):
    """Breaking time per label: ``t0`` strictly inside ``|xi| < gamma(0)``, infinity elsewhere."""
    xi = np.asarray(xi, dtype=float)
    out = np.where(np.abs(xi) < p.gamma0, p.t0, np.inf)
    return float(out) if out.ndim == 0 else out


def extra_nu_density(p: PeakonParams, t: float, x) -> np.ndarray:
    """Density of ``nu - mu`` for ``t > t0`` (the energy already dissipated)."""
    x = np.asarray(x, dtype=float)
    if t <= p.t0 or p.alpha == 0.0:
        return np.zeros_like(x)
    b = 0.25 * p.E_tilde * (t - p.t0)
    gam = peak_position(p, t)
    dens = p.alpha * 0.25 * p.E**2 / np.tanh(b) ** 2 * (1.0 - np.tanh(0.5 * x) ** 2)
    return np.where(np.abs(x) <= gam, dens, 0.0)


def pa_measures(p: PeakonParams, t: float, grid) -> tuple[Measure, Measure]:
    """Energy measures ``(mu, nu)`` at time ``t`` sampled on ``grid``.

    At ``t0`` both are point masses at the origin. For ``alpha = 1`` and
    ``t > t0`` the dissipated energy stays as a point mass ``E**2`` in ``nu``.
    """
    grid = np.asarray(grid, dtype=float)
    E2 = p.E**2
    if t == p.t0:
        mu = Measure.from_atoms(grid, [0.0], [(1.0 - p.alpha) * E2]) if p.alpha < 1 else Measure.zero(grid)
        nu = Measure.from_atoms(grid, [0.0], [E2])
        return mu, nu
    _, ux = pa_eulerian(p, t, grid)
    mu = Measure(grid, ux**2)
    if t < p.t0 or p.alpha == 0.0:
        return mu, Measure(grid, ux**2)
    if p.alpha == 1.0:
        return mu, Measure.from_atoms(grid, [0.0], [E2])
    return mu, Measure(grid, ux**2 + extra_nu_density(p, t, grid))


def pa_eulerian_state(p: PeakonParams, t: float, grid) -> EulerianState:
    """Eulerian state carrying the exact derivative samples."""
    grid = np.asarray(grid, dtype=float)
    u, ux = pa_eulerian(p, t, grid)
    mu, nu = pa_measures(p, t, grid)
    return EulerianState(grid, u, np.zeros_like(grid), mu, nu, ux=ux, t=t)


def pa_initial_relabeling(p: PeakonParams, z) -> tuple[np.ndarray, np.ndarray]:
    """``f(z) = int_{-inf}^z u_x(0, x)^2 dx + z`` and its derivative.

    Composing the direct Lagrangian image of the initial data with ``f`` gives
    the identity characteristic.
    """
    z = np.asarray(z, dtype=float)
    a = -0.5 * p.E * p.t0
    A = 0.5 * p.E * np.sinh(a)
    B = p.E / np.sinh(a)
    g = np.log(np.cosh(a))

    def inner_prim(x):
        return B**2 * (0.5 * x + 0.25 * np.sinh(2.0 * x))

    left_mass = 0.5 * A**2 * np.exp(-2.0 * g)
    mid_mass = inner_prim(g) - inner_prim(-g)
    F = np.where(
        z < -g,
        0.5 * A**2 * np.exp(2.0 * np.minimum(z, 0.0)),
        np.where(
            z <= g,
            left_mass + inner_prim(np.clip(z, -g, g)) - inner_prim(-g),
            left_mass + mid_mass + 0.5 * A**2 * (np.exp(-2.0 * g) - np.exp(-2.0 * np.maximum(z, g))),
        ),
    )
    _, ux = pa_eulerian(p, 0.0, z)
    return F + z, ux**2 + 1.0


def pa_restart_relabeling(p: PeakonParams, xi) -> tuple[np.ndarray, np.ndarray]:
    """``g(xi) = y(t0, xi) + Hbar(t0, xi)`` and its derivative.

    Maps the collision-time labels to labels in which the restarted
    characteristic has a plateau of length ``E_tilde**2``.
    """
    xi = np.asarray(xi, dtype=float)
    g0, T0 = p.gamma0, p.T0
    c = 1.0 - np.cosh(0.5 * p.E * p.t0)
    Et2 = p.E_tilde**2
    left = xi <= -g0
    right = xi >= g0
    with np.errstate(over="ignore", invalid="ignore"):
        gl = xi - np.log(1.0 + c * np.exp(np.minimum(xi, 0.0)))
        gr = xi + Et2 + np.log(1.0 + c * np.exp(-np.maximum(xi, 0.0)))
        gm = 0.5 * Et2 * (np.tanh(0.5 * xi) / T0 + 1.0)
        dl = 1.0 / (1.0 + c * np.exp(np.minimum(xi, 0.0)))
        dr = 1.0 / (1.0 + c * np.exp(-np.maximum(xi, 0.0)))
        dm = 0.25 * Et2 / T0 / np.cosh(0.5 * xi) ** 2
    g = np.where(left, gl, np.where(right, gr, gm))
    dg = np.where(left, dl, np.where(right, dr, dm))
    return g, dg


def aligned_labels(p: PeakonParams, n: int, half_width: float) -> np.ndarray:
    """``n`` identity labels (``n`` even) spanning about ``[-half_width, half_width]``
    with the peak labels ``+-gamma(0)`` at cell midpoints.

    ``q`` and ``hbar`` jump across the peak label, so a jump at a random place
    inside a cell costs the trapezoidal rule an O(spacing) error, while a jump
    at a cell midpoint costs O(spacing^2).
    """
    if n < 4 or n % 2:
        raise DomainError("n must be an even integer >= 4")
    d0 = 2.0 * half_width / n
    m = max(1, int(round(p.gamma0 / d0)))
    d = p.gamma0 / m
    return (np.arange(n) - n // 2 + 0.5) * d


def aligned_eulerian_grid(p: PeakonParams, n_nodes: int, half_width: float, n_fine: int = 20001) -> np.ndarray:
    """Eulerian grid for ``t = 0`` whose Lagrangian image with ``n_nodes`` labels
    has the peaks at cell midpoints.

    The grid is symmetric, has the peaks ``+-gamma(0)`` at cell midpoints
    (``u_x`` jumps there, so a grid point on the peak would sample only one
    side) and ends at ``+-X``, where ``X`` is chosen so that the label interval
    produced by the Eulerian-to-Lagrangian map is an exact multiple of the
    peak label distance.
    """
    from scipy.optimize import brentq

    if n_nodes < 4 or n_nodes % 2:
        raise DomainError("n_nodes must be an even integer >= 4")
    g = peak_position(p, 0.0)
    f = lambda z: float(pa_initial_relabeling(p, z)[0])  # noqa: E731
    a = 0.5 * (f(g) - f(-g))
    b0 = 0.5 * (f(half_width) - f(-half_width))
    k = max(1, int(round(a * (n_nodes - 1) / (2.0 * b0))))
    # with n_nodes even the label centre is a cell midpoint; put the peaks at the k-th midpoint out
    b = a * (n_nodes - 1) / (2.0 * k)
    X = brentq(lambda x: 0.5 * (f(x) - f(-x)) - b, g + 1e-9, b + 1.0)
    hx = 2.0 * X / (n_fine - 1)
    n_in = max(2, int(round((2.0 * g - hx) / hx)) + 1)
    n_out = max(2, int(round((X - g - 0.5 * hx) / hx)) + 1)
    inner = np.linspace(-g + 0.5 * hx, g - 0.5 * hx, n_in)
    right = np.linspace(g + 0.5 * hx, X, n_out)
    return np.concatenate([-right[::-1], inner, right])
