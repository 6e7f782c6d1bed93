"""Flat norms: exact transport LP for 0-chains, certified upper bounds for
m >= 1 on nested dyadic simplicial grid complexes.

Exactness scope is deliberate: only the 0-chain value is the flat norm
itself.  For m >= 1 every result is an upper bound obtained from an
explicit feasible filling (a grid LP optimum plus a conservative snapping
charge), sound by the definition of the flat norm as an infimum.  The dual
characterization as a supremum over forms is documented but not
implemented; it would provide lower bounds and is a separate project.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lp
from .chains import PolyhedralChain, ZeroChain, add, mass, scale

__all__ = [
    "FlatBound",
    "GridComplex",
    "EmbeddingError",
    "flat_zero",
    "localized_flat_zero",
    "build_grid_complex",
    "simplicial_flat_upper",
    "flat_distance_upper",
    "term_mass_bound",
]

SNAP_RTOL = 1e-9


class EmbeddingError(ValueError):
    """Chain cannot be placed on the grid skeleton after snapping."""


@dataclass(frozen=True)
class FlatBound:
    """An upper bound of a flat norm, with its provenance."""

    value: float
    certificate: dict

    def __float__(self):
        return self.value


# ---------------------------------------------------------------------------
# 0-chains: exact flat norm via a partial-matching transport LP
# ---------------------------------------------------------------------------

def flat_zero(t: ZeroChain) -> float:
    """Exact flat norm of a 0-chain.

    Optimal fillings for 0-chains are sums of oriented segments pairing
    positive with negative atoms at cost |x - y| per unit, while unmatched
    mass pays cost 1 per unit; the minimum over transport plans is solved
    as an LP and equals the flat norm.
    """
    pos = [(np.array(p), w) for p, w in t.atoms if w > 0]
    neg = [(np.array(p), -w) for p, w in t.atoms if w < 0]
    p_mass = np.array([w for _, w in pos])
    q_mass = np.array([w for _, w in neg])
    if not pos or not neg:
        return float(p_mass.sum() + q_mass.sum())

    P, Q = len(pos), len(neg)
    cost_match = np.array(
        [[float(np.linalg.norm(x - y)) for y, _ in neg] for x, _ in pos]
    )
    # variables: f_ij (P*Q), u_i (P, unmatched +), v_j (Q, unmatched -)
    nvar = P * Q + P + Q
    c = np.concatenate([cost_match.ravel(), np.ones(P + Q)])
    A = np.zeros((P + Q, nvar))
    b = np.concatenate([p_mass, q_mass])
    for i in range(P):
        A[i, i * Q : (i + 1) * Q] = 1.0
        A[i, P * Q + i] = 1.0
    for j in range(Q):
        A[P + j, j : P * Q : Q] = 1.0
        A[P + j, P * Q + P + j] = 1.0
    sol = lp.solve(lp.LPProblem(c, A, b, ("=",) * (P + Q)))
    if sol.status != "optimal":  # pragma: no cover - always feasible
        raise lp.LPNumericalError(f"transport LP returned {sol.status}")
    return sol.objective_value


def localized_flat_zero(t: ZeroChain, balls):
    """flat_zero of the restrictions to disjoint balls, plus their sum.

    Reported by the lower-semicontinuity harness: for well-separated
    clusters the sum reproduces the global value.
    """
    per_ball = [flat_zero(t.restrict_ball(c, r)) for c, r in balls]
    return per_ball, math.fsum(per_ball)


# ---------------------------------------------------------------------------
# nested dyadic grid complexes (Freudenthal/Kuhn triangulation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridComplex:
    """Simplicial complex on a dyadic grid over a cube.

    Vertices are integer lattice tuples ``idx`` mapping to the point
    ``lo + h * idx``; cells carry the Kuhn triangulation (all vertex
    chains with 0/1 increments), whose faces refine consistently under
    dyadic subdivision.
    """

    lo: tuple[float, ...]
    h: float
    cells_per_axis: int
    n: int
    m: int
    faces_m: tuple  # sorted integer-vertex tuples
    faces_m1: tuple
    boundary_matrix: np.ndarray  # (#faces_m, #faces_m1) signed incidence
    vol_m: np.ndarray
    vol_m1: np.ndarray

    @property
    def index_m(self):
        return {f: i for i, f in enumerate(self.faces_m)}

    def point(self, idx):
        return np.asarray(self.lo) + self.h * np.asarray(idx, dtype=float)


def _kuhn_faces(n, k, *, dims):
    """All dims-dimensional faces of the Kuhn triangulation of a k^n grid."""
    faces = set()
    base_cells = itertools.product(range(k), repeat=n)
    perms = list(itertools.permutations(range(n)))
    for cell in base_cells:
        for perm in perms:
            chain = [tuple(cell)]
            for ax in perm:
                prev = list(chain[-1])
                prev[ax] += 1
                chain.append(tuple(prev))
            for sub in itertools.combinations(chain, dims + 1):
                faces.add(tuple(sorted(sub)))
    return tuple(sorted(faces))


def _face_volume(face, h):
    verts = np.asarray(face, dtype=float) * h
    m = len(face) - 1
    edges = verts[1:] - verts[0]
    gram = edges @ edges.T
    return math.sqrt(max(float(np.linalg.det(gram)), 0.0)) / math.factorial(m)


@lru_cache(maxsize=32)
def _grid_complex_cached(lo, h, cells_per_axis, n, m):
    faces_m = _kuhn_faces(n, cells_per_axis, dims=m)
    faces_m1 = _kuhn_faces(n, cells_per_axis, dims=m + 1)
    idx_m = {f: i for i, f in enumerate(faces_m)}
    B = np.zeros((len(faces_m), len(faces_m1)))
    for j, F in enumerate(faces_m1):
        for i_omit in range(len(F)):
            sub = F[:i_omit] + F[i_omit + 1 :]  # stays sorted
            B[idx_m[sub], j] = -1.0 if i_omit % 2 else 1.0
    vol_m = np.array([_face_volume(f, h) for f in faces_m])
    vol_m1 = np.array([_face_volume(f, h) for f in faces_m1])
    return GridComplex(lo, h, cells_per_axis, n, m, faces_m, faces_m1, B, vol_m, vol_m1)


def build_grid_complex(lo, h: float, cells_per_axis: int, m: int) -> GridComplex:
    lo = tuple(float(x) for x in lo)
    n = len(lo)
    if not (1 <= m < n):
        raise ValueError(f"grid complex needs 1 <= m < n, got m={m}, n={n}")
    if cells_per_axis < 1:
        raise ValueError("cells_per_axis must be >= 1")
    return _grid_complex_cached(lo, float(h), int(cells_per_axis), n, m)


def _snap_vertex(gc: GridComplex, v):
    v = np.asarray(v, dtype=float)
    idx = np.round((v - np.asarray(gc.lo)) / gc.h).astype(int)
    if np.any(idx < 0) or np.any(idx > gc.cells_per_axis):
        raise EmbeddingError(f"vertex {tuple(v)} falls outside the grid box")
    disp = float(np.linalg.norm(v - gc.point(idx)))
    return tuple(int(i) for i in idx), disp


def embed_chain(gc: GridComplex, chain: PolyhedralChain):
    """Coefficient vector of the chain on the grid m-faces, plus snap cost.

    Vertices snap to the nearest grid vertex.  Each snapped m-simplex must
    decompose into grid faces: for m = 1 its direction must be a lattice
    edge direction (a 0/1 vector); for m >= 2 it must coincide with a
    single grid face.  The snap cost charges multiplicity x displacement x
    a perimeter factor per term, a conservative homotopy-style bound on
    the flat distance between the chain and its snapped copy.
    """
    coeff = np.zeros(len(gc.faces_m))
    idx_m = gc.index_m
    snap_cost = 0.0
    for term in chain.terms:
        simplex = term.simplex
        snapped = []
        max_disp = 0.0
        for v in simplex.vertices:
            idx, disp = _snap_vertex(gc, v)
            snapped.append(idx)
            max_disp = max(max_disp, disp)
        vol = simplex.volume
        perim = _simplex_perimeter(simplex)
        snap_cost += term.multiplicity * max_disp * (vol + perim + 2.0)

        if gc.m == 1:
            a, b = (np.array(s) for s in snapped)
            d = b - a
            if np.all(d == 0):
                raise EmbeddingError(f"segment collapsed by snapping: {simplex.vertices}")
            k = int(np.max(np.abs(d)))
            step, sign = (d // k, 1.0) if np.all(d >= 0) else (-d // k, -1.0)
            if not (np.all((step == 0) | (step == 1)) and np.array_equal(step * k, np.abs(d))):
                raise EmbeddingError(
                    f"direction {tuple(d)} is not a lattice edge direction"
                )
            start = a if sign > 0 else b
            for s in range(k):
                u = tuple(int(x) for x in (start + s * step))
                w = tuple(int(x) for x in (start + (s + 1) * step))
                key = (u, w)
                if key not in idx_m:
                    raise EmbeddingError(f"edge {key} missing from the grid skeleton")
                coeff[idx_m[key]] += sign * term.multiplicity
        else:
            key = tuple(sorted(snapped))
            if key not in idx_m:
                raise EmbeddingError(
                    f"simplex does not coincide with a grid {gc.m}-face after snapping"
                )
            parity = _tuple_parity(snapped)
            coeff[idx_m[key]] += parity * term.multiplicity
    return coeff, snap_cost


def _tuple_parity(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        j = min(range(i, len(seq)), key=lambda k: seq[k])
        if j != i:
            seq[i], seq[j] = seq[j], seq[i]
            sign = -sign
    return sign


def _simplex_perimeter(simplex):
    verts = simplex.as_array()
    m = simplex.dim
    if m == 1:
        return 2.0
    total = 0.0
    for omit in range(m + 1):
        face = np.delete(verts, omit, axis=0)
        edges = face[1:] - face[0]
        gram = edges @ edges.T
        total += math.sqrt(max(float(np.linalg.det(gram)), 0.0)) / math.factorial(m - 1)
    return total


# ---------------------------------------------------------------------------
# simplicial flat-norm upper bounds
# ---------------------------------------------------------------------------

def _grid_for_chain(chain: PolyhedralChain, level: int, box=None):
    if box is None:
        lo, hi = chain.bounding_box()
        extent = float(np.max(hi - lo))
        if extent <= 0:
            extent = 1.0
    else:
        lo, extent = np.asarray(box[0], dtype=float), float(box[1])
    cells = 2**level
    h = extent / cells
    return build_grid_complex(tuple(lo), h, cells, chain.dim)


def simplicial_flat_upper(chain: PolyhedralChain, level: int, box=None) -> FlatBound:
    """Certified upper bound of F(chain) on the level-``level`` grid.

    Solves min |s| . vol_{m+1} + |chain - boundary(s)| . vol_m over grid
    coefficients by sign splitting; any feasible point (in particular
    s = 0) certifies the bound, so the optimum never exceeds the mass.
    Nested refinement can only lower the value: every level-k face is a
    union of level-(k+1) faces with consistent orientation.
    """
    if chain.is_empty:
        return FlatBound(0.0, {"lp_status": "trivial", "snap_cost": 0.0, "level": level})
    if not (1 <= chain.dim < chain.ambient_dim):
        raise ValueError("grid bounds need 1 <= m < n")
    gc = _grid_for_chain(chain, level, box)
    p, snap_cost = embed_chain(gc, chain)

    B = gc.boundary_matrix
    E, F = B.shape
    # variables: s+ (F), s- (F), r+ (E), r- (E)
    c = np.concatenate([gc.vol_m1, gc.vol_m1, gc.vol_m, gc.vol_m])
    A = np.hstack([B, -B, np.eye(E), -np.eye(E)])
    sol = lp.solve(lp.LPProblem(c, A, p, ("=",) * E))
    if sol.status != "optimal":  # pragma: no cover - s = 0 is feasible
        raise lp.LPNumericalError(f"flat-norm LP returned {sol.status}")
    value = sol.objective_value + snap_cost
    return FlatBound(
        value,
        {
            "lp_status": sol.status,
            "lp_value": sol.objective_value,
            "snap_cost": snap_cost,
            "level": level,
            "grid_h": gc.h,
        },
    )


def term_mass_bound(chain: PolyhedralChain) -> float:
    """Sum of multiplicity x volume over terms: an upper bound of the mass
    valid for any representation (mass is subadditive on formal sums)."""
    return math.fsum(t.multiplicity * t.simplex.volume for t in chain.terms)


def flat_distance_upper(a, b, level: int, box=None) -> FlatBound:
    """Upper bound of F(a - b); exact for 0-chains.

    Tries the grid LP on the difference and falls back to the mass bound
    (the filling S = 0) when the difference cannot be embedded; returns
    the smaller certified value.
    """
    if isinstance(a, ZeroChain) or isinstance(b, ZeroChain):
        if not (isinstance(a, ZeroChain) and isinstance(b, ZeroChain)):
            raise ValueError("flat distance needs chains of equal dimension")
        value = flat_zero(a - b)
        return FlatBound(value, {"lp_status": "exact-0-chain", "snap_cost": 0.0})
    diff = add(a, scale(b, -1.0))
    if diff.is_empty:
        return FlatBound(0.0, {"lp_status": "identical", "snap_cost": 0.0})
    mass_bound = term_mass_bound(diff)
    try:
        lp_bound = simplicial_flat_upper(diff, level, box)
    except EmbeddingError as exc:
        return FlatBound(mass_bound, {"lp_status": f"mass-fallback ({exc})", "snap_cost": 0.0})
    if mass_bound < lp_bound.value:
        cert = dict(lp_bound.certificate)
        cert["lp_status"] = "mass-bound-tighter"
        return FlatBound(mass_bound, cert)
    return lp_bound
