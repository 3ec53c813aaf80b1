"""Energy functionals, dissipation accounting and breaking-risk sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .state import DomainError, EulerianState, LagrangianState


def sigma(theta: LagrangianState) -> float:
    """``int (U^2 q + h) d xi``; conserved by the flow, including across breaking."""
    return float(np.sum(theta.weights() * (theta.U**2 * theta.q + theta.h)))


def total_energy(e: EulerianState) -> float:
    """``int u^2 dx + mu(R)``."""
    return float(np.trapezoid(e.u**2, e.grid)) + e.mu.total_mass()


def dissipated(e_t: EulerianState, e_0: EulerianState) -> float:
    """``(nu_t - mu_t)(R) - (nu_0 - mu_0)(R)``, the energy lost since ``e_0``."""
    return (e_t.nu.total_mass() - e_t.mu.total_mass()) - (e_0.nu.total_mass() - e_0.mu.total_mass())


def lagrangian_energy(theta: LagrangianState) -> float:
    """``int (U^2 q + hbar) d xi``, which equals :func:`total_energy` of the Eulerian image."""
    return float(np.sum(theta.weights() * (theta.U**2 * theta.q + theta.hbar)))


def g_value(q, w, hbar, r, alpha: float, tol: float = 1e-12):
    """Breaking classifier ``g`` and membership in ``Omega_1``.

    ``Omega_1`` holds the nodes with ``|w| + 2q <= q + hbar``, ``w <= 0`` and
    ``r = 0`` (up to ``tol``). There ``g = alpha g1 + (1 - alpha) g2`` with
    ``g1 = |w| + 2q`` and ``g2 = q + hbar``; elsewhere ``g = g2``.
    Scalars in, scalars out.
    """
    q, w, hbar, r = (np.asarray(a, dtype=float) for a in (q, w, hbar, r))
    g1 = np.abs(w) + 2.0 * q
    g2 = q + hbar
    omega = (g1 <= g2 + tol) & (w <= tol) & (np.abs(r) <= tol)
    g = np.where(omega, alpha * g1 + (1.0 - alpha) * g2, g2)
    if g.ndim == 0:
        return float(g), bool(omega)
    return g, omega


@dataclass
class KappaSet:
    nodes: np.ndarray
    measure: float


def kappa_set(theta: LagrangianState, gamma: float, eps_invariant: float = 1e-8) -> KappaSet:
    """Nodes with ``hbar / (q + hbar) >= 1 - gamma``, ``w <= 0`` and ``r = 0``.

    ``r = 0`` is tested as ``|r| <= eps_invariant (q + h)``. The measure is the
    sum of trapezoidal label weights over the selected nodes.
    """
    if not 0.0 <= gamma <= 0.5:
        raise DomainError(f"gamma must lie in [0, 1/2], got {gamma}")
    den = theta.q + theta.hbar
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0, theta.hbar / np.where(den > 0, den, 1.0), 0.0)
    if gamma == 0.0:
        sel = theta.q <= 0
    else:
        sel = ratio >= 1.0 - gamma
    sel &= (theta.w <= 0) & (np.abs(theta.r) <= eps_invariant * (theta.q + theta.h)) & (den > 0)
    nodes = np.flatnonzero(sel)
    wts = theta.weights()
    return KappaSet(nodes, float(wts[nodes].sum()))


def bound_ratios(theta: LagrangianState) -> tuple[float, float]:
    """Largest ``|w| / (q + hbar)`` and ``|r| / (q + hbar)``; both are at most ``1/sqrt(2)``."""
    den = theta.q + theta.hbar
    ok = den > 0
    if not np.any(ok):
        return 0.0, 0.0
    return float(np.max(np.abs(theta.w[ok]) / den[ok])), float(np.max(np.abs(theta.r[ok]) / den[ok]))


def mu_jump(groups, alpha: Optional[float] = None) -> dict[str, float]:
    """Singular energy just before and just after a cluster of breaking groups.

    Parameters
    ----------
    groups : sequence of EventGroup
        The groups of one collision (states before and after each group).

    Returns
    -------
    dict
        ``before``: hbar-mass that collapses at the first group, taken from the
        state just before it. ``after``: the hbar-mass sitting at collapsed
        nodes just after the last group. ``ratio = after / before``.
    """
    if not groups:
        raise ValueError("no breaking groups")
    broken = np.unique(np.concatenate([g.nodes for g in groups]))
    first, last = groups[0].before, groups[-1].after
    wts = first.weights()
    # the mass that concentrates is hbar carried by the nodes of the cluster,
    # each taken just before its own jump
    pre = np.zeros(first.n)
    for g in groups:
        pre[g.nodes] = g.before.hbar[g.nodes]
    before = float(np.sum(wts[broken] * pre[broken]))
    after = float(np.sum(wts[broken] * last.hbar[broken]))
    out = {"before": before, "after": after, "ratio": after / before if before > 0 else np.nan}
    if alpha is not None:
        out["expected"] = (1.0 - alpha) * before
    return out


def cluster_groups(groups, gap: float):
    """Split event groups into clusters whose consecutive times differ by at most ``gap``."""
    clusters = []
    for g in groups:
        if clusters and g.tau - clusters[-1][-1].tau <= gap:
            clusters[-1].append(g)
        else:
            clusters.append([g])
    return clusters
