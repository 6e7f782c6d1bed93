"""Slicing of polyhedral chains by orthogonal projections onto m-planes.

A slice of an m-chain by the fiber of a projection onto an m-plane is a
0-chain: one signed atom per transversally-met simplex.  Monte Carlo
integration over (plane, base point) pairs reproduces the H-mass up to a
dimensional constant, which is calibrated empirically on the unit cube
chain (its exact value is not needed anywhere downstream).

Sign convention: the sign of an atom is the sign of the determinant of
the simplex's oriented edge frame expressed in the plane's basis.  Any
consistent convention satisfies the tested identities; this one makes
slices of cycles sum to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import PolyhedralChain, ZeroChain
from .flatnorm import flat_zero
from .functionals import h_mass_zero

__all__ = [
    "MPlane",
    "SliceResult",
    "GenericPositionError",
    "haar_sample",
    "slice_chain",
    "IntGeoEstimate",
    "intgeo_estimate",
    "CalibrationResult",
    "calibrate_constant",
    "unit_cube_chain",
    "LscReport",
    "lsc_slice_check",
]


class GenericPositionError(RuntimeError):
    """The base point is too close to a projected face; perturb and retry."""


@dataclass(frozen=True)
class MPlane:
    """m-dimensional linear subspace of R^n, given by orthonormal rows."""

    basis: np.ndarray  # (m, n)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        object.__setattr__(self, "basis", b)
        gram = b @ b.T
        if np.abs(gram - np.eye(b.shape[0])).max() > 1e-12:
            raise ValueError("basis rows must be orthonormal within 1e-12")

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def ambient_dim(self):
        return self.basis.shape[1]

    def project(self, points):
        return np.asarray(points, dtype=float) @ self.basis.T


@dataclass(frozen=True)
class SliceResult:
    base_point: np.ndarray  # in plane coordinates
    zero_chain: ZeroChain


def haar_sample(n: int, m: int, seed) -> MPlane:
    """Rotation-invariant random m-plane: orthonormalized Gaussian span."""
    if not (1 <= m <= n):
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(100):
        g = rng.normal(size=(n, m))
        q, r = np.linalg.qr(g)
        if np.abs(np.diag(r)).min() > 1e-12:
            return MPlane(q.T)
    raise RuntimeError("could not draw a nondegenerate plane")  # pragma: no cover


def slice_chain(chain: PolyhedralChain, plane: MPlane, y) -> SliceResult:
    """0-dimensional slice of the chain over the fiber through y.

    Emits one atom per simplex whose projection contains y in its
    interior; raises GenericPositionError when y lies within tolerance of
    a projected face (the caller perturbs y and retries).
    """
    if plane.dim != chain.dim:
        raise ValueError("slice plane dimension must equal the chain dimension")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = chain.dim
    atoms = []
    for term in chain.terms:
        verts = term.simplex.as_array()
        proj = plane.project(verts)  # (m+1, m)
        edges = proj[1:] - proj[0]
        det = float(np.linalg.det(edges))
        scale = max(np.abs(edges).max(), 1e-300)
        if abs(det) <= 1e-12 * scale**m:
            continue  # projection degenerate on this simplex: measure zero
        lam_rest = np.linalg.solve(edges.T, y - proj[0])
        lam = np.concatenate([[1.0 - lam_rest.sum()], lam_rest])
        tol = 1e-9
        if np.any(np.abs(lam) < tol) or np.any(np.abs(lam - 1.0) < tol):
            raise GenericPositionError(
                "base point within tolerance of a projected face"
            )
        if np.all(lam > 0):
            point = lam @ verts
            sign = 1.0 if det > 0 else -1.0
            atoms.append((tuple(point), sign * term.multiplicity))
    return SliceResult(y, ZeroChain(chain.ambient_dim, tuple(atoms)))


@dataclass(frozen=True)
class IntGeoEstimate:
    raw: float  # mean of box_measure x H-mass(slice), before calibration
    stderr: float
    samples: int
    rejected: int
    calibrated: float | None = None
    calibrated_stderr: float | None = None


def _bbox_corners(chain):
    lo, hi = chain.bounding_box()
    n = lo.size
    corners = np.array(
        [[(hi if (k >> i) & 1 else lo)[i] for i in range(n)] for k in range(2**n)]
    )
    return corners


def _fast_path_r2(chain, h, samples, rng):
    """Vectorized (n=2, m=1) sampler: all planes and base points at once."""
    segs = np.array([t.simplex.vertices for t in chain.terms])  # (S, 2, 2)
    hvals = np.array([h.eval(t.multiplicity) for t in chain.terms])
    corners = _bbox_corners(chain)

    dirs = rng.normal(size=(samples, 2))
    norms = np.linalg.norm(dirs, axis=1)
    good = norms > 1e-12
    dirs = dirs[good] / norms[good, None]
    ns = dirs.shape[0]

    pa = segs[:, 0, :] @ dirs.T  # (S, ns)
    pb = segs[:, 1, :] @ dirs.T
    pc = corners @ dirs.T  # (4, ns)
    lo, hi = pc.min(axis=0), pc.max(axis=0)
    measure = hi - lo

    values = np.zeros(ns)
    pending = np.ones(ns, dtype=bool)
    rejected = 0
    tol = 1e-9
    for _ in range(60):
        if not pending.any():
            break
        u = rng.uniform(size=ns)
        y = lo + u * measure
        denom = pb - pa
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (y[None, :] - pa) / denom
        nondeg = np.abs(denom) > tol * np.maximum(1.0, np.abs(pa) + np.abs(pb))
        near_face = nondeg & ((np.abs(t) < tol) | (np.abs(t - 1.0) < tol))
        bad = near_face.any(axis=0) & pending
        hits = nondeg & (t > tol) & (t < 1.0 - tol)
        vals = measure * (hvals @ hits)
        newly = pending & ~bad
        values[newly] = vals[newly]
        rejected += int(bad.sum())
        pending = bad
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(ns)) if ns > 1 else math.inf
    return mean, stderr, ns, rejected


def intgeo_estimate(chain: PolyhedralChain, h, samples: int, seed,
                    calibration_c: float | None = None) -> IntGeoEstimate:
    """Monte Carlo estimate of the plane-and-fiber integral of the slice
    H-mass. With the calibration constant supplied, also returns the
    calibrated H-mass estimate c x raw.

    Planes are Haar samples; base points are uniform over the projection
    of the chain's bounding box, whose measure enters as an importance
    weight.  Base points within tolerance of projected faces are redrawn
    (counted in ``rejected``).
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, m = chain.ambient_dim, chain.dim

    if n == 2 and m == 1:
        mean, stderr, ns, rejected = _fast_path_r2(chain, h, samples, rng)
    else:
        corners = _bbox_corners(chain)
        vals = np.empty(samples)
        rejected = 0
        for k in range(samples):
            plane = haar_sample(n, m, rng)
            proj = plane.project(corners)
            lo, hi = proj.min(axis=0), proj.max(axis=0)
            measure = float(np.prod(hi - lo))
            val = None
            for _ in range(60):
                y = lo + rng.uniform(size=m) * (hi - lo)
                try:
                    sl = slice_chain(chain, plane, y)
                except GenericPositionError:
                    rejected += 1
                    continue
                val = measure * h_mass_zero(sl.zero_chain, h)
                break
            vals[k] = 0.0 if val is None else val
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(samples))
        ns = samples
    calibrated = calibrated_stderr = None
    if calibration_c is not None:
        calibrated = calibration_c * mean
        calibrated_stderr = calibration_c * stderr
    return IntGeoEstimate(mean, stderr, ns, rejected, calibrated, calibrated_stderr)


def unit_cube_chain(n: int, m: int) -> PolyhedralChain:
    """The unit m-cube [0,1]^m x {0} in R^n, triangulated consistently."""
    import itertools

    from .chains import Simplex, WeightedSimplex

    terms = []
    for perm in itertools.permutations(range(m)):
        verts = [np.zeros(n)]
        for ax in perm:
            v = verts[-1].copy()
            v[ax] += 1.0
            verts.append(v)
        parity = _perm_sign(perm)
        vv = [tuple(v) for v in verts]
        if parity < 0:
            vv[0], vv[1] = vv[1], vv[0]
        terms.append(WeightedSimplex(Simplex(tuple(vv)), 1.0))
    return PolyhedralChain(n, m, tuple(terms), "verified-disjoint")


def _perm_sign(perm):
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


@dataclass(frozen=True)
class CalibrationResult:
    c: float
    stderr: float
    raw: float
    raw_stderr: float
    samples: int


def calibrate_constant(n: int, m: int, samples: int, seed) -> CalibrationResult:
    """Empirical dimensional constant: mass of the unit m-cube divided by
    the raw plane-and-fiber integral (confidence interval propagated)."""
    cube = unit_cube_chain(n, m)
    est = intgeo_estimate(cube, _AbsShim(), samples, seed)
    c = 1.0 / est.raw
    stderr = est.stderr / est.raw**2
    return CalibrationResult(c, stderr, est.raw, est.stderr, est.samples)


class _AbsShim:
    """Mass functional stand-in (avoids importing hfuncs for one lambda)."""

    @staticmethod
    def eval(theta):
        return abs(theta)


# ---------------------------------------------------------------------------
# 0-dimensional lower semicontinuity harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LscReport:
    flat_distances: tuple[float, ...]
    flat_converging: bool
    ball_radii: tuple[float, ...]
    multiplicity_residuals: tuple[float, ...]  # per target atom, at the tail
    h_mass_target: float
    h_mass_tail_min: float
    passed: bool


def lsc_slice_check(sequence, target: ZeroChain, h, tol: float = 1e-9,
                    tail_fraction: float = 0.5) -> LscReport:
    """Numerical lower-semicontinuity check for 0-chains.

    Around each target atom a ball is chosen so that the balls are
    pairwise disjoint; the signed multiplicities of the approximating
    chains inside each ball must converge to the atom's, and the target
    H-mass must not exceed the tail minimum of the sequence's H-masses
    plus ``tol``.  A non-converging sequence is reported, not raised.
    """
    flats = tuple(flat_zero(target - t_j) for t_j in sequence)
    converging = len(flats) >= 2 and flats[-1] <= flats[0] and flats[-1] < 0.5 * max(flats[0], 1e-300) + 1e-12

    pts = [np.asarray(p) for p, _ in target.atoms]
    radii = []
    for i, p in enumerate(pts):
        d = min(
            (float(np.linalg.norm(p - q)) for j, q in enumerate(pts) if j != i),
            default=2.0,
        )
        radii.append(0.49 * min(d, 1.0))

    tail_start = int(len(sequence) * (1 - tail_fraction))
    residuals = []
    for (p, w), r in zip(target.atoms, radii):
        worst = 0.0
        for t_j in sequence[tail_start:]:
            inside = t_j.restrict_ball(p, r)
            worst = max(worst, abs(w - inside.total_multiplicity()))
        residuals.append(worst)

    target_hm = h_mass_zero(target, h)
    tail_hm = min(h_mass_zero(t_j, h) for t_j in sequence[tail_start:])
    passed = bool(converging and target_hm <= tail_hm + tol)
    return LscReport(flats, converging, tuple(radii), tuple(residuals),
                     target_hm, tail_hm, passed)
