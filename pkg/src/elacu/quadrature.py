"""Gauss-Legendre-Lobatto rules and tensor-product nodal Lagrange bases.

The degree-p rule has p+1 nodes that include both endpoints of [-1, 1] and
integrates polynomials up to degree 2p-1 exactly.  Collocating the nodal
basis with the quadrature points is what makes spectral-element mass
matrices diagonal.

Tensor-product (3-D) basis functions are indexed with the x index running
fastest: flat index = (iz*(p+1) + iy)*(p+1) + ix.  Every module in this
package uses the same convention for element-local node ordering.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 12

_NEWTON_TOL = 1e-15
_NEWTON_MAXIT = 100


@dataclass(frozen=True)
class GllRule:
    """Nodes (ascending, endpoints exactly +-1) and positive weights."""

    p: int
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def gll_rule(p: int) -> GllRule:
    """Gauss-Legendre-Lobatto rule of degree ``p`` (``p+1`` points).

    Interior nodes are the roots of P_p'(x), found by Newton iteration on
    the Legendre recurrence starting from Chebyshev-Lobatto guesses.

    Raises
    ------
    ValueError
        If ``p`` is outside ``1..MAX_DEGREE``.
    """
    if not isinstance(p, (int, np.integer)) or not 1 <= p <= MAX_DEGREE:
        raise ValueError(f"polynomial degree must be in 1..{MAX_DEGREE}, got {p!r}")
    n = p + 1
    if p == 1:
        return GllRule(1, np.array([-1.0, 1.0]), np.array([1.0, 1.0]))

    # Chebyshev-Gauss-Lobatto initial guess, ascending.
    x = -np.cos(np.pi * np.arange(n) / p)
    vand = np.zeros((n, n))
    for _ in range(_NEWTON_MAXIT):
        vand[:, 0] = 1.0
        vand[:, 1] = x
        for k in range(1, p):
            vand[:, k + 1] = ((2 * k + 1) * x * vand[:, k] - k * vand[:, k - 1]) / (k + 1)
        # Newton update for the roots of (1 - x^2) P_p'(x).
        dx = (x * vand[:, p] - vand[:, p - 1]) / (n * vand[:, p])
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    vand[:, 0] = 1.0
    vand[:, 1] = x
    for k in range(1, p):
        vand[:, k + 1] = ((2 * k + 1) * x * vand[:, k] - k * vand[:, k - 1]) / (k + 1)
    w = 2.0 / (p * n * vand[:, p] ** 2)

    # Enforce exact symmetry and exact endpoints.
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return GllRule(p, x, w)


def lagrange_basis(rule: GllRule, x) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate all nodal Lagrange polynomials of ``rule`` at points ``x``.

    Returns ``(values, derivatives)`` with shape ``x.shape + (p+1,)``.
    Derivatives use the analytic product-rule formula, which is exact and
    well conditioned for the moderate degrees used here.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    nodes = rule.nodes
    n = nodes.size
    # denom[i] = prod_{j != i} (x_i - x_j)
    diff_nodes = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff_nodes, 1.0)
    denom = np.prod(diff_nodes, axis=1)

    d = xs[..., None] - nodes  # (..., n)
    values = np.empty(xs.shape + (n,))
    derivs = np.empty(xs.shape + (n,))
    for i in range(n):
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        values[..., i] = np.prod(d[..., mask], axis=-1) / denom[i]
        acc = np.zeros_like(xs)
        idx = np.flatnonzero(mask)
        for k in idx:
            m2 = mask.copy()
            m2[k] = False
            acc = acc + np.prod(d[..., m2], axis=-1)
        derivs[..., i] = acc / denom[i]
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return values[0], derivs[0]
    return values, derivs


def lagrange_eval(rule: GllRule, i: int, x: float) -> tuple[float, float]:
    """Value and derivative of the i-th nodal polynomial at a point."""
    values, derivs = lagrange_basis(rule, float(x))
    return float(values[i]), float(derivs[i])


@lru_cache(maxsize=None)
def diff_matrix(p: int) -> np.ndarray:
    """Differentiation matrix D[q, j] = phi_j'(x_q) at the GLL nodes."""
    rule = gll_rule(p)
    _, derivs = lagrange_basis(rule, rule.nodes)
    derivs.setflags(write=False)
    return derivs


def tensor_node_multi_index(p: int) -> np.ndarray:
    """(m, 3) array of (ix, iy, iz) per flat tensor index, x fastest."""
    n = p + 1
    iz, iy, ix = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    return np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])


def tensor_shape_eval(p: int, ref_point) -> tuple[np.ndarray, np.ndarray]:
    """All 3-D tensor basis values and reference gradients at one point.

    Returns ``(values, gradients)`` of shapes ``((p+1)^3,)`` and
    ``((p+1)^3, 3)``.
    """
    rule = gll_rule(p)
    ref = np.asarray(ref_point, dtype=float)
    vx, dx = lagrange_basis(rule, ref[0])
    vy, dy = lagrange_basis(rule, ref[1])
    vz, dz = lagrange_basis(rule, ref[2])
    values = (vz[:, None, None] * vy[None, :, None] * vx[None, None, :]).ravel()
    gx = (vz[:, None, None] * vy[None, :, None] * dx[None, None, :]).ravel()
    gy = (vz[:, None, None] * dy[None, :, None] * vx[None, None, :]).ravel()
    gz = (dz[:, None, None] * vy[None, :, None] * vx[None, None, :]).ravel()
    return values, np.column_stack([gx, gy, gz])


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Plain Gauss-Legendre rule on [-1, 1] (interior points only)."""
    return np.polynomial.legendre.leggauss(n)
