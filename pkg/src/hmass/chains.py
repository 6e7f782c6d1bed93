"""Polyhedral m-chains in R^n: simplexes, orientation, boundary, mass.

A chain is a finite formal sum of positively weighted oriented simplexes.
Orientation is carried by vertex order; flipping two vertices negates the
term.  Combinatorial identities (face cancellation in the boundary
operator) are keyed on exact vertex tuples, never on derived floating
quantities, so that ``boundary(boundary(P))`` vanishes exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

__all__ = [
    "ChainError",
    "DimensionMismatchError",
    "DegenerateSimplexError",
    "OverlapUnverifiedError",
    "Simplex",
    "WeightedSimplex",
    "PolyhedralChain",
    "ZeroChain",
    "simplex_volume",
    "boundary",
    "mass",
    "add",
    "scale",
    "overlap_check",
    "chain_to_json",
    "chain_from_json",
]

# Simplexes thinner than this (relative to max edge length) are rejected:
# their Gram determinants are too ill-conditioned to trust.
DEGENERACY_RTOL = 1e-12

# Relative tolerance for geometric predicates (collinearity, affine hulls).
GEOM_RTOL = 1e-9


class ChainError(ValueError):
    """Base class for chain construction and algebra errors."""


class DimensionMismatchError(ChainError):
    pass


class DegenerateSimplexError(ChainError):
    pass


class OverlapUnverifiedError(ChainError):
    """Raised by mass-like evaluations on possibly-overlapping sums."""


def _as_point(coords) -> tuple[float, ...]:
    pt = tuple(float(c) for c in coords)
    if len(pt) < 1:
        raise ChainError("points need at least one coordinate")
    if not all(math.isfinite(c) for c in pt):
        raise ChainError(f"non-finite point coordinates: {pt}")
    return pt


def _perm_parity(seq) -> int:
    """Sign of the permutation sorting ``seq`` (entries must be distinct)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        j = min(range(i, len(seq)), key=lambda k: seq[k])
        if j != i:
            seq[i], seq[j] = seq[j], seq[i]
            sign = -sign
    return sign


def simplex_volume(vertices) -> float:
    """m-dimensional Hausdorff volume of the simplex spanned by ``vertices``.

    Computed from the Gram determinant of the edge vectors:
    sqrt(det(E E^T)) / m!.
    """
    verts = np.asarray(vertices, dtype=float)
    m = verts.shape[0] - 1
    if m == 0:
        return 1.0
    edges = verts[1:] - verts[0]
    gram = edges @ edges.T
    det = float(np.linalg.det(gram))
    return math.sqrt(max(det, 0.0)) / math.factorial(m)


@dataclass(frozen=True)
class Simplex:
    """Oriented m-simplex: m+1 affinely independent points; order = orientation."""

    vertices: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        verts = tuple(_as_point(v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        n = len(verts[0])
        if any(len(v) != n for v in verts):
            raise DimensionMismatchError("inconsistent vertex dimensions")
        m = len(verts) - 1
        if m > n:
            raise ChainError(f"simplex dim {m} exceeds ambient dim {n}")
        if len(set(verts)) != len(verts):
            raise DegenerateSimplexError(f"repeated vertices: {verts}")
        if m >= 1:
            arr = np.asarray(verts)
            max_edge = max(
                float(np.linalg.norm(arr[i] - arr[j]))
                for i, j in combinations(range(m + 1), 2)
            )
            if simplex_volume(verts) < DEGENERACY_RTOL * max_edge**m:
                raise DegenerateSimplexError(
                    f"degenerate simplex (volume below tolerance): {verts}"
                )

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1

    @property
    def ambient_dim(self) -> int:
        return len(self.vertices[0])

    @property
    def volume(self) -> float:
        return simplex_volume(self.vertices)

    def sort_key(self):
        return tuple(sorted(self.vertices))

    def orientation_vs_sorted(self) -> int:
        """+1 if the stored vertex order is an even permutation of sorted order."""
        return _perm_parity(self.vertices)

    def flipped(self) -> "Simplex":
        v = self.vertices
        return Simplex((v[1], v[0]) + v[2:])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


@dataclass(frozen=True)
class WeightedSimplex:
    """A simplex with a positive real multiplicity (sign lives in orientation)."""

    simplex: Simplex
    multiplicity: float

    def __post_init__(self):
        theta = float(self.multiplicity)
        if not (math.isfinite(theta) and theta > 0):
            raise ChainError(f"multiplicity must be positive and finite: {theta}")
        object.__setattr__(self, "multiplicity", theta)

    def signed_against_sorted(self) -> tuple[tuple, float]:
        """(sorted-vertex key, signed multiplicity wrt sorted orientation)."""
        s = self.simplex
        return s.sort_key(), s.orientation_vs_sorted() * self.multiplicity


@dataclass(frozen=True)
class PolyhedralChain:
    """Formal sum of weighted simplexes sharing ambient and chain dimension.

    ``overlap_status`` is one of ``"verified-disjoint"``, ``"unverified"``,
    ``"canonicalized"``.  Disjointness is enforced lazily: intermediate
    formal sums are legitimate, only mass-like evaluations require it.
    """

    ambient_dim: int
    dim: int
    terms: tuple[WeightedSimplex, ...] = ()
    overlap_status: str = "unverified"

    def __post_init__(self):
        if self.dim < 1:
            raise ChainError("PolyhedralChain has dim >= 1; use ZeroChain for m = 0")
        if self.dim > self.ambient_dim:
            raise ChainError("chain dim exceeds ambient dim")
        for t in self.terms:
            if t.simplex.ambient_dim != self.ambient_dim:
                raise DimensionMismatchError("term has wrong ambient dimension")
            if t.simplex.dim != self.dim:
                raise DimensionMismatchError("term has wrong chain dimension")
        if self.overlap_status not in ("verified-disjoint", "unverified", "canonicalized"):
            raise ChainError(f"unknown overlap_status {self.overlap_status!r}")
        if not self.terms:
            object.__setattr__(self, "overlap_status", "verified-disjoint")

    @classmethod
    def from_simplex_data(cls, ambient_dim, dim, data, status="unverified"):
        """Build from [(vertices, multiplicity), ...] pairs."""
        terms = tuple(
            WeightedSimplex(Simplex(tuple(map(tuple, v))), th) for v, th in data
        )
        return cls(ambient_dim, dim, terms, status)

    @property
    def is_empty(self) -> bool:
        return not self.terms

    def canonicalize(self) -> "PolyhedralChain":
        return _canonicalize(self)

    def __add__(self, other):
        return add(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __rmul__(self, lam):
        return scale(self, lam)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.array(
            [v for t in self.terms for v in t.simplex.vertices], dtype=float
        )
        if pts.size == 0:
            z = np.zeros(self.ambient_dim)
            return z, z
        return pts.min(axis=0), pts.max(axis=0)


@dataclass(frozen=True)
class ZeroChain:
    """Signed atomic measure: finitely many points with nonzero multiplicities.

    Atoms are canonicalized on construction: equal points merge with exact
    (fsum) accumulation, zero-sum atoms vanish, atoms sort by coordinates.
    """

    ambient_dim: int
    atoms: tuple[tuple[tuple[float, ...], float], ...] = ()

    def __post_init__(self):
        buckets: dict[tuple, list[float]] = {}
        for pt, w in self.atoms:
            pt = _as_point(pt)
            if len(pt) != self.ambient_dim:
                raise DimensionMismatchError("atom has wrong ambient dimension")
            w = float(w)
            if not math.isfinite(w):
                raise ChainError("atom multiplicity must be finite")
            buckets.setdefault(pt, []).append(w)
        merged = []
        for pt in sorted(buckets):
            w = math.fsum(buckets[pt])
            if w != 0.0:
                merged.append((pt, w))
        object.__setattr__(self, "atoms", tuple(merged))

    @property
    def is_empty(self) -> bool:
        return not self.atoms

    def total_multiplicity(self) -> float:
        return math.fsum(w for _, w in self.atoms)

    def mass(self) -> float:
        return math.fsum(abs(w) for _, w in self.atoms)

    def scale(self, lam: float) -> "ZeroChain":
        lam = float(lam)
        if not math.isfinite(lam):
            raise ChainError("scale factor must be finite")
        if lam == 0.0:
            return ZeroChain(self.ambient_dim)
        return ZeroChain(self.ambient_dim, tuple((p, lam * w) for p, w in self.atoms))

    def restrict_ball(self, center, radius: float) -> "ZeroChain":
        c = np.asarray(center, dtype=float)
        kept = [
            (p, w)
            for p, w in self.atoms
            if np.linalg.norm(np.asarray(p) - c) <= radius
        ]
        return ZeroChain(self.ambient_dim, tuple(kept))

    def __add__(self, other: "ZeroChain") -> "ZeroChain":
        if other.ambient_dim != self.ambient_dim:
            raise DimensionMismatchError("ambient dimension mismatch")
        return ZeroChain(self.ambient_dim, self.atoms + other.atoms)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + other.scale(-1.0)


# ---------------------------------------------------------------------------
# boundary operator
# ---------------------------------------------------------------------------

def _oriented_faces(term: WeightedSimplex):
    """Yield (sorted face key, multiplicity signed against sorted orientation)."""
    verts = term.simplex.vertices
    theta = term.multiplicity
    for i in range(len(verts)):
        face = verts[:i] + verts[i + 1 :]
        sign = (-1 if i % 2 else 1) * _perm_parity(face)
        yield tuple(sorted(face)), sign * theta


def _cancel_exact_pairs(values):
    """Remove exact (+x, -x) pairs from a list of signed multiplicities.

    Faces inducing opposite orientations with exactly equal multiplicity
    annihilate combinatorially.  Survivors are intentionally not merged by
    floating addition: keeping the original multiplicities is what makes
    the second boundary cancel exactly.
    """
    counts: dict[float, int] = {}
    for w in values:
        counts[w] = counts.get(w, 0) + 1
    out = []
    for w in sorted(counts):
        survivors = counts[w] - min(counts[w], counts.get(-w, 0))
        out.extend([w] * survivors)
    return out


def boundary(chain: PolyhedralChain):
    """Oriented boundary.  Returns a ZeroChain for m = 1, else an (m-1)-chain.

    Shared faces with opposite induced orientation and equal multiplicity
    cancel exactly (keyed on sorted vertex tuples).  Same-orientation
    duplicates are kept as separate terms so that ``boundary`` applied
    twice vanishes identically; use :meth:`PolyhedralChain.canonicalize`
    to merge them when a disjoint representation is needed.
    """
    if isinstance(chain, ZeroChain):
        raise ChainError("boundary of 0-chain undefined here")
    if chain.dim == 1:
        atoms = []
        for t in chain.terms:
            a, b = t.simplex.vertices
            atoms.append((b, t.multiplicity))
            atoms.append((a, -t.multiplicity))
        return ZeroChain(chain.ambient_dim, tuple(atoms))

    per_key: dict[tuple, list] = {}
    for t in chain.terms:
        for key, w in _oriented_faces(t):
            per_key.setdefault(key, []).append(w)

    out_terms = []
    for key in sorted(per_key):
        for w in _cancel_exact_pairs(per_key[key]):
            simplex = Simplex(key)
            if w < 0:
                simplex = simplex.flipped()
            out_terms.append(WeightedSimplex(simplex, abs(w)))
    return PolyhedralChain(chain.ambient_dim, chain.dim - 1, tuple(out_terms))


# ---------------------------------------------------------------------------
# mass
# ---------------------------------------------------------------------------

def mass(chain) -> float:
    """Total mass: sum of multiplicity times m-volume over the terms.

    Requires ``overlap_status`` in {verified-disjoint, canonicalized}:
    the mass of an overlapping formal sum depends on the representation.
    """
    if isinstance(chain, ZeroChain):
        return chain.mass()
    if chain.overlap_status == "unverified":
        raise OverlapUnverifiedError(
            "mass of a possibly-overlapping sum is representation-dependent; "
            "run overlap_check or canonicalize first"
        )
    return math.fsum(t.multiplicity * t.simplex.volume for t in chain.terms)


# ---------------------------------------------------------------------------
# linear structure
# ---------------------------------------------------------------------------

def scale(chain, lam: float):
    """Multiply by a real scalar: |lam| scales multiplicities, sign flips orientation."""
    lam = float(lam)
    if not math.isfinite(lam):
        raise ChainError("scale factor must be finite")
    if isinstance(chain, ZeroChain):
        return chain.scale(lam)
    if lam == 0.0:
        return PolyhedralChain(chain.ambient_dim, chain.dim)
    terms = []
    for t in chain.terms:
        simplex = t.simplex if lam > 0 else t.simplex.flipped()
        terms.append(WeightedSimplex(simplex, abs(lam) * t.multiplicity))
    return PolyhedralChain(chain.ambient_dim, chain.dim, tuple(terms), chain.overlap_status)


def add(a, b):
    """Formal sum followed by canonicalization.

    m = 0: atoms at equal points merge.  m = 1: collinear overlapping
    segments are split at mutual endpoints and merged per sub-segment.
    m >= 2: overlaps are detected and flagged, not resolved.
    """
    if isinstance(a, ZeroChain) or isinstance(b, ZeroChain):
        if not (isinstance(a, ZeroChain) and isinstance(b, ZeroChain)):
            raise DimensionMismatchError("cannot add 0-chain to m-chain")
        return a + b
    if a.ambient_dim != b.ambient_dim or a.dim != b.dim:
        raise DimensionMismatchError(
            f"chain mismatch: ({a.ambient_dim},{a.dim}) vs ({b.ambient_dim},{b.dim})"
        )
    merged = PolyhedralChain(a.ambient_dim, a.dim, a.terms + b.terms)
    return _canonicalize(merged)


def _canonicalize(chain: PolyhedralChain) -> PolyhedralChain:
    if chain.is_empty:
        return chain
    if chain.dim == 1:
        terms = _overlay_segments(chain.terms)
        return PolyhedralChain(chain.ambient_dim, 1, terms, "canonicalized")
    # m >= 2: no general overlay; detect and flag.
    result = overlap_check(chain)
    return result.chain


def _segment_param_frame(term: WeightedSimplex):
    a = np.asarray(term.simplex.vertices[0])
    b = np.asarray(term.simplex.vertices[1])
    d = b - a
    length = float(np.linalg.norm(d))
    return a, d / length, length


def _same_line(t1, t2, tol):
    a1, d1, l1 = _segment_param_frame(t1)
    a2, d2, l2 = _segment_param_frame(t2)
    scale_len = max(l1, l2)
    if 1.0 - abs(float(np.dot(d1, d2))) > tol:
        return False
    for p in (a2, a2 + l2 * d2):
        diff = p - a1
        perp = diff - np.dot(diff, d1) * d1
        if float(np.linalg.norm(perp)) > tol * max(scale_len, 1.0):
            return False
    return True


def _overlay_segments(terms):
    """Canonical overlay of 1-chains: group by line, merge per sub-segment."""
    n_terms = len(terms)
    parent = list(range(n_terms))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n_terms):
        for j in range(i + 1, n_terms):
            if find(i) != find(j) and _same_line(terms[i], terms[j], GEOM_RTOL):
                parent[find(j)] = find(i)

    groups: dict[int, list] = {}
    for i, t in enumerate(terms):
        groups.setdefault(find(i), []).append(t)

    out = []
    for members in groups.values():
        if len(members) == 1:
            out.append(members[0])
            continue
        out.extend(_merge_collinear(members))
    out.sort(key=lambda t: t.simplex.sort_key())
    return tuple(out)


def _merge_collinear(members):
    """Overlay collinear segments: split at all endpoints, fsum per interval."""
    anchor, d, _ = _segment_param_frame(members[0])
    # lexicographically positive direction for a reproducible parametrization
    for c in d:
        if abs(c) > 1e-15:
            if c < 0:
                d = -d
            break
    events = []  # (parameter, original point)
    entries = []  # (t_low, t_high, signed multiplicity)
    for t in members:
        pa, pb = t.simplex.vertices
        ta = float(np.dot(np.asarray(pa) - anchor, d))
        tb = float(np.dot(np.asarray(pb) - anchor, d))
        sign = 1.0 if tb > ta else -1.0
        lo, hi = min(ta, tb), max(ta, tb)
        events.append((lo, pa if ta < tb else pb))
        events.append((hi, pb if ta < tb else pa))
        entries.append((lo, hi, sign * t.multiplicity))

    scale_len = max(hi - lo for lo, hi, _ in entries)
    tol = GEOM_RTOL * max(scale_len, 1.0)
    events.sort(key=lambda e: e[0])
    breakpoints: list[tuple[float, tuple]] = []
    for tval, pt in events:
        if breakpoints and tval - breakpoints[-1][0] <= tol:
            continue
        breakpoints.append((tval, pt))

    out = []
    for (t0, p0), (t1, p1) in zip(breakpoints, breakpoints[1:]):
        mid = 0.5 * (t0 + t1)
        w = math.fsum(s for lo, hi, s in entries if lo - tol < mid < hi + tol)
        if w == 0.0:
            continue
        seg = Simplex((p0, p1)) if w > 0 else Simplex((p1, p0))
        out.append(WeightedSimplex(seg, abs(w)))
    return out


# ---------------------------------------------------------------------------
# overlap predicate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapResult:
    disjoint: bool
    witness: tuple[int, int] | None
    chain: PolyhedralChain


def overlap_check(chain: PolyhedralChain) -> OverlapResult:
    """Pairwise relative-interior intersection test; sets ``overlap_status``.

    Intersections of H^m-measure zero (e.g. 1-chains crossing at a point)
    do not count as overlap.
    """
    terms = chain.terms
    for i in range(len(terms)):
        for j in range(i + 1, len(terms)):
            if _simplexes_overlap(terms[i].simplex, terms[j].simplex):
                flagged = replace(chain, overlap_status="unverified")
                return OverlapResult(False, (i, j), flagged)
    ok = replace(chain, overlap_status="verified-disjoint")
    return OverlapResult(True, None, ok)


def _simplexes_overlap(s1: Simplex, s2: Simplex) -> bool:
    m = s1.dim
    if m == 1:
        t1 = WeightedSimplex(s1, 1.0)
        t2 = WeightedSimplex(s2, 1.0)
        if not _same_line(t1, t2, GEOM_RTOL):
            return False
        anchor, d, _ = _segment_param_frame(t1)
        params = []
        for s in (s1, s2):
            ts = [float(np.dot(np.asarray(p) - anchor, d)) for p in s.vertices]
            params.append((min(ts), max(ts)))
        (lo1, hi1), (lo2, hi2) = params
        tol = GEOM_RTOL * max(hi1 - lo1, hi2 - lo2, 1.0)
        return min(hi1, hi2) - max(lo1, lo2) > tol
    return _interior_intersection_lp(s1, s2)


def _interior_intersection_lp(s1: Simplex, s2: Simplex) -> bool:
    """Common affine hull + common interior point test, via a small LP."""
    v1 = s1.as_array()
    v2 = s2.as_array()
    m = s1.dim
    origin = v1[0]
    basis, _ = np.linalg.qr((v1[1:] - origin).T)  # n x m orthonormal
    scale_len = max(np.linalg.norm(v1 - origin, axis=1).max(), 1.0)
    # every vertex of s2 must lie in the affine hull of s1
    for p in v2:
        diff = p - origin
        perp = diff - basis @ (basis.T @ diff)
        if np.linalg.norm(perp) > GEOM_RTOL * scale_len:
            return False
    a_coords = (v1 - origin) @ basis  # (m+1) x m
    b_coords = (v2 - origin) @ basis

    from . import lp  # local import: lp has no geometry dependencies

    # max t s.t. sum(lam) = 1, sum(mu) = 1, lam@A = mu@B, lam_i >= t, mu_j >= t
    k = m + 1
    nvar = 2 * k + 1  # lam, mu, t
    rows = []
    rhs = []
    senses = []
    r = np.zeros(nvar)
    r[:k] = 1.0
    rows.append(r)
    rhs.append(1.0)
    senses.append("=")
    r = np.zeros(nvar)
    r[k : 2 * k] = 1.0
    rows.append(r)
    rhs.append(1.0)
    senses.append("=")
    for c in range(m):
        r = np.zeros(nvar)
        r[:k] = a_coords[:, c] / scale_len
        r[k : 2 * k] = -b_coords[:, c] / scale_len
        rows.append(r)
        rhs.append(0.0)
        senses.append("=")
    for i in range(2 * k):
        r = np.zeros(nvar)
        r[i] = 1.0
        r[-1] = -1.0
        rows.append(r)
        rhs.append(0.0)
        senses.append(">=")
    c_obj = np.zeros(nvar)
    c_obj[-1] = -1.0  # maximize t
    problem = lp.LPProblem(c_obj, np.array(rows), np.array(rhs), tuple(senses))
    sol = lp.solve(problem)
    if sol.status != "optimal":
        return False
    return -sol.objective_value > 1e-9


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def chain_to_json(chain, canonical_order: bool = True) -> str:
    """Serialize a chain; term order is canonical (sorted by vertex coords)."""
    if isinstance(chain, ZeroChain):
        doc = {
            "ambient_dim": chain.ambient_dim,
            "dim": 0,
            "atoms": [
                {"point": list(p), "multiplicity": w} for p, w in chain.atoms
            ],
        }
        return json.dumps(doc)
    terms = list(chain.terms)
    if canonical_order:
        terms.sort(key=lambda t: t.simplex.vertices)
    doc = {
        "ambient_dim": chain.ambient_dim,
        "dim": chain.dim,
        "terms": [
            {
                "vertices": [list(v) for v in t.simplex.vertices],
                "multiplicity": t.multiplicity,
            }
            for t in terms
        ],
    }
    return json.dumps(doc)


def chain_from_json(text: str):
    doc = json.loads(text)
    n = int(doc["ambient_dim"])
    m = int(doc["dim"])
    if m == 0:
        atoms = tuple(
            (tuple(a["point"]), float(a["multiplicity"])) for a in doc["atoms"]
        )
        return ZeroChain(n, atoms)
    terms = tuple(
        WeightedSimplex(
            Simplex(tuple(tuple(v) for v in t["vertices"])),
            float(t["multiplicity"]),
        )
        for t in doc["terms"]
    )
    return PolyhedralChain(n, m, terms)
