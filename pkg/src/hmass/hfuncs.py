"""Cost functions H on multiplicities: built-in kinds and property checks.

Every kind is even with H(0) = 0 by construction.  The built-ins are

* ``abs`` : |x|  (induces plain mass)
* ``power(alpha)`` : |x|^alpha with alpha in (0, 1)
* ``affine_indicator(beta)`` : (1 + beta |x|) for x != 0
* ``indicator`` : 1 for x != 0
* ``tabulated`` : lower-semicontinuous interpolation of sampled values

Analytic kinds carry proofs-by-construction flags for subadditivity,
lower semicontinuity and monotonicity; the sampling-based verifier is
advisory evidence on top of that, never a proof.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HSpec",
    "AbsH",
    "PowerH",
    "AffineIndicatorH",
    "IndicatorH",
    "TabulatedH",
    "AssumptionReport",
    "SlopeReport",
    "verify_assumptions",
    "even_extension",
    "infinite_slope_check",
    "small_mass_bound",
    "h_to_json",
    "h_from_json",
    "default_grid",
]

# absolute tolerance on H2/H3 comparisons (double-precision noise floor)
PROP_TOL = 1e-10


class HSpec:
    """Base cost function; subclasses implement ``_eval_nonneg``."""

    kind = "abstract"
    # declared structural properties (proof-by-construction for analytic kinds)
    even = True
    subadditive = False
    lsc = False
    monotone_on_nonneg = False
    infinite_slope_at_zero = False
    # True when t / H(t) is non-decreasing on (0, inf): the grid supremum in
    # small_mass_bound is then attained at t = theta and therefore exact.
    ratio_monotone = False

    def eval(self, theta: float) -> float:
        theta = float(theta)
        if not math.isfinite(theta):
            raise ValueError("theta must be finite")
        if theta == 0.0:
            return 0.0
        return self._eval_nonneg(abs(theta))

    __call__ = eval

    def _eval_nonneg(self, t: float) -> float:  # pragma: no cover
        raise NotImplementedError

    def to_doc(self) -> dict:
        raise NotImplementedError(f"kind {self.kind!r} is not serializable")


@dataclass(frozen=True)
class AbsH(HSpec):
    kind = "abs"
    subadditive = True
    lsc = True
    monotone_on_nonneg = True
    infinite_slope_at_zero = False
    ratio_monotone = True  # ratio is constant 1

    def _eval_nonneg(self, t):
        return t

    def to_doc(self):
        return {"kind": "abs"}


@dataclass(frozen=True)
class PowerH(HSpec):
    """H(x) = |x|^alpha, alpha in (0, 1): concave, hence subadditive."""

    alpha: float
    kind = "power"
    subadditive = True
    lsc = True
    monotone_on_nonneg = True
    infinite_slope_at_zero = True
    ratio_monotone = True  # t^(1-alpha) increasing

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"power kind needs alpha in (0,1), got {self.alpha}")

    def _eval_nonneg(self, t):
        return t**self.alpha

    def to_doc(self):
        return {"kind": "power", "alpha": self.alpha}


@dataclass(frozen=True)
class AffineIndicatorH(HSpec):
    """H(x) = (1 + beta |x|) for x != 0, H(0) = 0."""

    beta: float
    kind = "affine_indicator"
    subadditive = True
    lsc = True
    monotone_on_nonneg = True
    infinite_slope_at_zero = True
    ratio_monotone = True  # t / (1 + beta t) increasing

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"affine_indicator needs beta >= 0, got {self.beta}")

    def _eval_nonneg(self, t):
        return 1.0 + self.beta * t

    def to_doc(self):
        return {"kind": "affine_indicator", "beta": self.beta}


@dataclass(frozen=True)
class IndicatorH(HSpec):
    """H(x) = 1 for x != 0; the size functional (Steiner-type costs)."""

    kind = "indicator"
    subadditive = True
    lsc = True
    monotone_on_nonneg = True
    infinite_slope_at_zero = True
    ratio_monotone = True

    def _eval_nonneg(self, t):
        return 1.0

    def to_doc(self):
        return {"kind": "indicator"}


@dataclass(frozen=True)
class TabulatedH(HSpec):
    """Sampled H on [0, inf), interpolated lower semicontinuously.

    ``grid`` must be sorted non-decreasing with grid[0] == 0 and
    values[0] == 0.  Repeated grid points declare jumps; evaluation takes
    the lower envelope of the piecewise-linear interpolant and the
    declared values, which preserves lsc under discretization.  Beyond the
    last grid point the last value is held constant.
    """

    grid: tuple[float, ...]
    values: tuple[float, ...]
    kind = "tabulated"

    def __post_init__(self):
        g = tuple(float(x) for x in self.grid)
        v = tuple(float(x) for x in self.values)
        if len(g) != len(v) or len(g) < 2:
            raise ValueError("tabulated kind needs matching grid/values, length >= 2")
        if any(b < a for a, b in zip(g, g[1:])):
            raise ValueError("tabulated grid must be sorted")
        if g[0] != 0.0 or v[0] != 0.0:
            raise ValueError("tabulated grid must start at H(0) = 0")
        if any(x < 0 for x in v):
            raise ValueError("tabulated values must be nonnegative")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def _eval_nonneg(self, t):
        g, v = self.grid, self.values
        if t >= g[-1]:
            return v[-1]
        i = bisect.bisect_left(g, t)
        if g[i] == t:
            # exact grid point: lower envelope of every declared value there
            # (one-sided limits are themselves declared values)
            vals = []
            j = i
            while j < len(g) and g[j] == t:
                vals.append(v[j])
                j += 1
            return min(vals)
        # strictly between distinct neighbours; with repeated left points the
        # last declared value is the right limit at the jump
        il, ir = i - 1, i
        lam = (t - g[il]) / (g[ir] - g[il])
        return (1 - lam) * v[il] + lam * v[ir]

    def jump_points(self):
        """Grid points declared with several values (or value jumps)."""
        pts = []
        for i in range(1, len(self.grid)):
            if self.grid[i] == self.grid[i - 1] and self.values[i] != self.values[i - 1]:
                pts.append(self.grid[i])
        return tuple(dict.fromkeys(pts))

    def one_sided_limits(self, t):
        """Exact (left, right) limits at a positive grid point t.

        The left limit is the first declared value at t (end of the
        incoming segment), the right limit the last declared value.
        """
        g, v = self.grid, self.values
        i = bisect.bisect_left(g, t)
        if i >= len(g) or g[i] != t:
            raise ValueError(f"{t} is not a grid point")
        j = i
        while j < len(g) and g[j] == t:
            j += 1
        return v[i], v[j - 1]

    def to_doc(self):
        return {"kind": "tabulated", "grid": list(self.grid), "values": list(self.values)}


@dataclass(frozen=True)
class _EvenWrapH(HSpec):
    """Even extension of a caller-supplied nonnegative-domain function."""

    fn: object
    declared_monotone: bool = True
    kind = "even_extension"

    def _eval_nonneg(self, t):
        return float(self.fn(t))


def even_extension(h_tilde, grid=None) -> HSpec:
    """Even extension H(x) = h_tilde(|x|) of a function on [0, inf).

    ``h_tilde`` may be an HSpec (returned as is: all kinds are already
    even), a (grid, values) pair producing a tabulated kind, or a callable
    with h_tilde(0) = 0, declared monotone non-decreasing, subadditive and
    lsc by the caller.
    """
    if isinstance(h_tilde, HSpec):
        return h_tilde
    if isinstance(h_tilde, (tuple, list)) and len(h_tilde) == 2:
        return TabulatedH(tuple(h_tilde[0]), tuple(h_tilde[1]))
    if callable(h_tilde):
        at_zero = float(h_tilde(0.0))
        if at_zero != 0.0:
            raise ValueError(f"even extension requires h(0) = 0, got {at_zero}")
        if grid is not None:
            g = [0.0] + [float(x) for x in grid if x > 0]
            return TabulatedH(tuple(g), tuple(float(h_tilde(x)) for x in g))
        return _EvenWrapH(h_tilde)
    raise TypeError(f"cannot build even extension from {type(h_tilde)!r}")


# ---------------------------------------------------------------------------
# property verification (sampling-based, advisory)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    h1_ok: bool
    h2_ok: bool
    h3_ok: bool
    monotone_ok: bool
    witnesses: dict = field(default_factory=dict)

    @property
    def all_ok(self):
        return self.h1_ok and self.h2_ok and self.h3_ok


def default_grid(hi=10.0, step=0.1):
    k = int(round(hi / step))
    return tuple(i * step for i in range(k + 1))


def verify_assumptions(h: HSpec, grid=None) -> AssumptionReport:
    """Sample H(0)=0 + evenness (H1), subadditivity (H2), lsc at declared
    jumps (H3), and monotonicity on the nonnegative grid.

    A passing report is evidence, not a proof: the hypotheses are not
    decidable from finitely many samples.  Each failure carries a witness.
    """
    grid = tuple(default_grid() if grid is None else grid)
    witnesses = {}

    h1_ok = h.eval(0.0) == 0.0
    if not h1_ok:
        witnesses["H1"] = (0.0, h.eval(0.0))
    for t in grid:
        if abs(h.eval(-t) - h.eval(t)) > PROP_TOL:
            h1_ok = False
            witnesses["H1"] = (t, h.eval(-t), h.eval(t))
            break

    signed = sorted(set(grid) | {-t for t in grid})
    h2_ok = True
    for t1 in signed:
        if not h2_ok:
            break
        for t2 in signed:
            if h.eval(t1 + t2) > h.eval(t1) + h.eval(t2) + PROP_TOL:
                h2_ok = False
                witnesses["H2"] = (t1, t2, h.eval(t1 + t2), h.eval(t1) + h.eval(t2))
                break

    h3_ok = True
    if isinstance(h, TabulatedH):
        for t in h.jump_points():
            lim = min(h.one_sided_limits(t)) if t > 0 else h.eval(1e-12)
            if h.eval(t) > lim + PROP_TOL:
                h3_ok = False
                witnesses["H3"] = (t, h.eval(t), lim)
                break

    monotone_ok = True
    vals = [h.eval(t) for t in sorted(grid)]
    for a, b in zip(vals, vals[1:]):
        if b < a - PROP_TOL:
            monotone_ok = False
            witnesses["monotone"] = (a, b)
            break

    return AssumptionReport(h1_ok, h2_ok, h3_ok, monotone_ok, witnesses)


@dataclass(frozen=True)
class SlopeReport:
    holds: bool
    thetas: tuple[float, ...]
    ratios: tuple[float, ...]
    witness: tuple[float, ...] | None = None


def infinite_slope_check(h: HSpec, theta_min: float, levels: int = 40) -> SlopeReport:
    """Empirical check of H(theta)/theta -> infinity as theta -> 0+.

    Evaluates the ratio on the geometric grid theta_min * 2^-k.  Divergence
    is called when the ratios grow without an upper plateau; a bounded
    subsequence is returned as witness otherwise.
    """
    if theta_min <= 0:
        raise ValueError("theta_min must be positive")
    thetas = tuple(theta_min * 2.0**-k for k in range(levels + 1))
    ratios = tuple(h.eval(t) / t for t in thetas)
    increasing = all(b >= a * (1 - 1e-12) for a, b in zip(ratios, ratios[1:]))
    diverges = ratios[-1] > 1e3 * max(ratios[0], 1e-300)
    if increasing and diverges:
        return SlopeReport(True, thetas, ratios)
    # witness: the flattest tail subsequence
    return SlopeReport(False, thetas, ratios, witness=thetas[-5:])


def small_mass_bound(h: HSpec, theta: float, samples: int = 60) -> float:
    """f(theta) = sup of t/H(t) over (0, theta], by geometric sampling.

    For kinds with non-decreasing t/H(t) the supremum sits at t = theta and
    the returned value is exact; otherwise it is a lower estimate of the
    true supremum (flagged via ``h.ratio_monotone``).  Raises if H vanishes
    at a sampled point of (0, theta].
    """
    theta = float(theta)
    if theta <= 0:
        raise ValueError("theta must be positive")
    if h.ratio_monotone:
        ht = h.eval(theta)
        if ht <= 0:
            raise ValueError(f"H vanishes at {theta}")
        return theta / ht
    best = 0.0
    for k in range(samples + 1):
        t = theta * 2.0**-k
        ht = h.eval(t)
        if ht <= 0:
            raise ValueError(f"H vanishes at sampled t = {t}")
        best = max(best, t / ht)
    return best


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def h_to_json(h: HSpec) -> str:
    return json.dumps(h.to_doc())


def h_from_json(text: str) -> HSpec:
    doc = json.loads(text)
    kind = doc.get("kind")
    if kind == "abs":
        return AbsH()
    if kind == "power":
        return PowerH(float(doc["alpha"]))
    if kind == "affine_indicator":
        return AffineIndicatorH(float(doc["beta"]))
    if kind == "indicator":
        return IndicatorH()
    if kind == "tabulated":
        return TabulatedH(tuple(doc["grid"]), tuple(doc["values"]))
    raise ValueError(f"unknown H kind {kind!r}")
