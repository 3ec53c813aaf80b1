"""Nonlocal pressure terms P and Q.

In Lagrangian variables

    P(xi) =  1/4 int exp(-|y(xi) - y(eta)|) (2 U^2 q + hbar)(eta) d eta
    Q(xi) = -1/4 int sgn(xi - eta) exp(-|y(xi) - y(eta)|) (2 U^2 q + hbar)(eta) d eta

Both are discretized with the trapezoidal rule on the truncated label grid.
Because ``y`` is nondecreasing, the kernel factorizes along the grid and the
sums split into a left and a right running sum, each updated with the
attenuation ``exp(-(y[i+1] - y[i]))``. The diagonal term is shared equally by
the two scans, which reproduces the O(N^2) sum up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .state import DomainError, EulerianState, LagrangianState, trapezoid_weights


@dataclass
class PQField:
    xi: np.ndarray
    P: np.ndarray
    Q: np.ndarray


def integrand(theta: LagrangianState) -> np.ndarray:
    return 2.0 * theta.U**2 * theta.q + theta.hbar


@numba.njit(cache=True)
def _scan(y, m):
    """Left and right exponentially attenuated sums of the weighted masses ``m``.

    ``L[i] = sum_{j<i} m[j] exp(-(y[i]-y[j]))`` and
    ``R[i] = sum_{j>i} m[j] exp(-(y[j]-y[i]))``.
    """
    n = y.size
    L = np.zeros(n)
    R = np.zeros(n)
    for i in range(n - 1):
        L[i + 1] = np.exp(-(y[i + 1] - y[i])) * (L[i] + m[i])
    for i in range(n - 1, 0, -1):
        R[i - 1] = np.exp(-(y[i] - y[i - 1])) * (R[i] + m[i])
    return L, R


def _pq_from_scan(y, m, skew=None):
    """P and Q from node masses ``m``.

    ``skew`` is the left minus the right half-cell mass of each node. The
    trapezoidal rule on a uniform grid has ``skew = 0``; with a split
    quadrature the node's own cells enter ``Q`` with their signs.
    """
    L, R = _scan(np.ascontiguousarray(y, dtype=np.float64), np.ascontiguousarray(m, dtype=np.float64))
    Q = -0.25 * (L - R)
    if skew is not None:
        Q -= 0.25 * skew
    return 0.25 * (L + R + m), Q


def node_masses(theta: LagrangianState, g=None) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Quadrature masses of ``g`` (default: the pressure integrand) and their skew.

    The skew is ``None`` for the trapezoidal rule.
    """
    g = integrand(theta) if g is None else g
    m = theta.weights() * g
    if theta.split is None:
        return m, None
    d = np.diff(theta.xi)
    left = np.zeros_like(m)
    right = np.zeros_like(m)
    left[1:] = (1.0 - theta.split) * d
    right[:-1] = theta.split * d
    return m, (left - right) * g


def compute_pq_scan(theta: LagrangianState) -> PQField:
    """O(N) evaluation of P and Q by two attenuated running sums."""
    m, skew = node_masses(theta)
    P, Q = _pq_from_scan(theta.y, m, skew)
    return PQField(theta.xi.copy(), P, Q)


def compute_pq_naive(theta: LagrangianState, block: int = 512) -> PQField:
    """Direct O(N^2) quadrature; the reference for :func:`compute_pq_scan`."""
    m, skew = node_masses(theta)
    y = theta.y
    n = y.size
    idx = np.arange(n)
    P = np.empty(n)
    Q = np.empty(n)
    for s in range(0, n, block):
        rows = slice(s, min(s + block, n))
        K = np.exp(-np.abs(y[rows, None] - y[None, :])) * m[None, :]
        sgn = np.sign(idx[rows, None] - idx[None, :])
        P[rows] = 0.25 * K.sum(axis=1)
        Q[rows] = -0.25 * (sgn * K).sum(axis=1)
    if skew is not None:
        Q -= 0.25 * skew
    return PQField(theta.xi.copy(), P, Q)


def check_truncation(theta: LagrangianState, tol: float = 1e-6, frac: float = 0.1) -> float:
    """Fraction of integrand mass lying within ``frac`` of either end of the label grid.

    Raises :class:`DomainError` when it exceeds ``tol``; the truncated integrals
    would then miss a non-negligible part of the pressure.
    """
    m = theta.weights() * integrand(theta)
    total = float(m.sum())
    if total <= 0.0:
        return 0.0
    span = theta.xi[-1] - theta.xi[0]
    edge = (theta.xi < theta.xi[0] + frac * span) | (theta.xi > theta.xi[-1] - frac * span)
    ratio = float(m[edge].sum()) / total
    if ratio > tol:
        raise DomainError(
            f"{ratio:.2e} of the pressure integrand lies near the truncation boundary; enlarge the domain"
        )
    return ratio


def eulerian_p(e: EulerianState) -> tuple[np.ndarray, np.ndarray]:
    """P and P_x on ``e.grid`` from ``P = 1/2 int exp(-|x-z|) u^2 dz + 1/4 int exp(-|x-z|) d mu(z)``.

    All sources are reduced to point masses at distinct positions: the
    trapezoidal weights of ``u^2`` on ``e.grid``, half of each ``mu`` cell at
    either cell end, and the atoms. One scan over the merged points then gives
    both terms.
    """
    x = e.grid
    mu = e.mu
    pos = [x, mu.grid, mu.atom_locations]
    mass = [0.5 * trapezoid_weights(x) * e.u**2, np.zeros(mu.grid.size), 0.25 * mu.atom_masses]
    if mu.grid.size > 1:
        cm = mu.cell_masses()
        mass[1][:-1] += 0.125 * cm
        mass[1][1:] += 0.125 * cm
    pos_all = np.concatenate(pos)
    mass_all = np.concatenate(mass)
    upos, inv = np.unique(pos_all, return_inverse=True)
    m = np.bincount(inv, weights=mass_all, minlength=upos.size)
    L, R = _scan(np.ascontiguousarray(upos), np.ascontiguousarray(m))
    k = np.searchsorted(upos, x)
    return (L + R + m)[k], -(L - R)[k]
