"""Gauss-Legendre quadrature with dyadic refinement and error estimates.

Charts are Lipschitz graphs over intervals (m = 1) or convex polygons
(m = 2); integrands are smooth except possibly across multiplicity jumps,
which the dyadic refinement resolves.  Estimates carry the difference of
the last two refinement levels as the reported error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadPlan", "QuadratureError", "integrate_interval", "integrate_polygon"]


class QuadratureError(RuntimeError):
    """Refinement failed to push the error estimate below tolerance."""


@dataclass(frozen=True)
class QuadPlan:
    tol: float = 1e-9
    order: int = 8
    max_levels: int = 14


def _gl_nodes(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w  # mapped to [0, 1]


def integrate_interval(f, a: float, b: float, plan: QuadPlan = QuadPlan()):
    """integral of f over [a, b]; f maps an array of points to an array.

    Returns (value, error_estimate).
    """
    if b <= a:
        return 0.0, 0.0
    nodes, weights = _gl_nodes(plan.order)
    prev = None
    for level in range(plan.max_levels + 1):
        k = 2**level
        edges = np.linspace(a, b, k + 1)
        lefts = edges[:-1]
        width = (b - a) / k
        pts = (lefts[:, None] + width * nodes[None, :]).ravel()
        vals = np.asarray(f(pts), dtype=float)
        total = float(np.sum(vals.reshape(k, -1) @ weights) * width)
        if prev is not None:
            err = abs(total - prev)
            if err <= plan.tol * max(1.0, abs(total)):
                return total, err
        prev = total
    raise QuadratureError(
        f"interval quadrature did not reach tol={plan.tol} in {plan.max_levels} levels"
    )


def _triangle_rule(order):
    """Tensor Gauss-Legendre on the unit triangle via the Duffy transform."""
    nodes, weights = _gl_nodes(order)
    u, v = np.meshgrid(nodes, nodes, indexing="ij")
    wu, wv = np.meshgrid(weights, weights, indexing="ij")
    x = u.ravel()
    y = (v * (1 - u)).ravel()
    w = (wu * wv * (1 - u)).ravel()  # Jacobian of the collapse
    return np.column_stack([x, y]), w


def _split4(tri):
    a, b, c = tri
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    return [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]


def integrate_polygon(f, vertices, plan: QuadPlan = QuadPlan()):
    """integral of f over a convex polygon; f maps (k, 2) points to (k,).

    Fan-triangulates, then refines all triangles uniformly (4-way) until
    the total stabilizes.  Returns (value, error_estimate).
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.shape[0] < 3:
        return 0.0, 0.0
    tris = [
        (verts[0], verts[i], verts[i + 1]) for i in range(1, verts.shape[0] - 1)
    ]
    ref_pts, ref_w = _triangle_rule(plan.order)
    prev = None
    for level in range(plan.max_levels + 1):
        batch_pts = []
        batch_jac = []
        for a, b, c in tris:
            # affine map from the unit triangle
            u, v = b - a, c - a
            jac = abs(float(u[0] * v[1] - u[1] * v[0]))
            pts = a[None, :] + ref_pts[:, :1] * (b - a)[None, :] + ref_pts[:, 1:2] * (c - a)[None, :]
            batch_pts.append(pts)
            batch_jac.append(jac)
        total = 0.0
        for pts, jac in zip(batch_pts, batch_jac):
            vals = np.asarray(f(pts), dtype=float)
            total += float(vals @ ref_w) * jac
        if prev is not None:
            err = abs(total - prev)
            if err <= plan.tol * max(1.0, abs(total)):
                return total, err
        prev = total
        tris = [small for tri in tris for small in _split4(tri)]
        if len(tris) > 65536:
            break
    raise QuadratureError(
        f"polygon quadrature did not reach tol={plan.tol} in {plan.max_levels} levels"
    )
