import math

import numpy as np
import pytest

from hmass.chains import (
    OverlapUnverifiedError,
    PolyhedralChain,
    Simplex,
    WeightedSimplex,
    ZeroChain,
    add,
    mass,
    overlap_check,
)
from hmass.functionals import h_mass_patch, h_mass_zero, phi_h, relaxation_liminf
from hmass.hfuncs import AbsH, AffineIndicatorH, IndicatorH, PowerH
from hmass.quadrature import QuadPlan, QuadratureError, integrate_interval, integrate_polygon
from hmass.rectifiable import (
    flat_square_current,
    inscribed_chord_chain,
    quarter_circle_current,
)

from genutil import random_chain

BUILTINS = [AbsH(), PowerH(0.5), AffineIndicatorH(1.0), IndicatorH()]


def segs(n, *data):
    terms = tuple(
        WeightedSimplex(Simplex((tuple(a), tuple(b))), th) for a, b, th in data
    )
    return PolyhedralChain(n, 1, terms, "verified-disjoint")


class TestQuadrature:
    def test_interval_polynomial(self):
        v, e = integrate_interval(lambda x: x**3, 0.0, 2.0)
        assert v == pytest.approx(4.0, abs=1e-9)

    def test_polygon_area(self):
        square = [(0, 0), (2, 0), (2, 1), (0, 1)]
        v, e = integrate_polygon(lambda z: np.ones(z.shape[0]), square)
        assert v == pytest.approx(2.0, abs=1e-9)

    def test_nonconvergence_raises(self):
        plan = QuadPlan(tol=1e-14, max_levels=2)
        with pytest.raises(QuadratureError):
            integrate_interval(lambda x: np.abs(np.sin(50 * x)), 0.0, 3.0, plan)


class TestPhiH:
    def test_disjoint_segments_power(self):
        c = segs(2, ((0, 0), (1, 0), 4.0), ((0, 1), (2, 1), 9.0))
        assert phi_h(c, PowerH(0.5)) == pytest.approx(8.0)

    def test_abs_equals_mass(self):
        rng = np.random.default_rng(5)
        for m, n in [(1, 2), (2, 3)]:
            c = overlap_check(random_chain(rng, m, n, 3)).chain
            if c.overlap_status != "verified-disjoint":
                continue
            assert phi_h(c, AbsH()) == pytest.approx(mass(c), abs=1e-12)

    def test_counterexample_value(self):
        # N_i segments of multiplicity theta_i: phi_h = N_i H(theta_i)
        from hmass.cli import counterexample_chain

        for i in (3, 7):
            c = counterexample_chain(i)
            assert phi_h(c, AbsH()) == 1.0
            assert phi_h(c, PowerH(0.5)) == pytest.approx(2.0 ** (i / 2), rel=1e-12)

    def test_unverified_rejected(self):
        c = PolyhedralChain(
            2, 1, (WeightedSimplex(Simplex(((0.0, 0.0), (1.0, 0.0))), 1.0),)
        )
        with pytest.raises(OverlapUnverifiedError):
            phi_h(c, AbsH())

    def test_subadditivity_transfer(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            a = random_chain(rng, 1, 2, 2)
            b = random_chain(rng, 1, 2, 2)
            s = add(a, b)
            ca = overlap_check(a).chain
            cb = overlap_check(b).chain
            for h in BUILTINS:
                assert phi_h(s, h) <= phi_h(ca, h) + phi_h(cb, h) + 1e-9

    def test_monotone_in_h(self):
        c = segs(2, ((0, 0), (1, 0), 0.5), ((0, 1), (1, 1), 2.0))
        h1, h2 = AbsH(), AffineIndicatorH(1.0)
        # h2 dominates h1 on the occurring multiplicities {0.5, 2.0}
        assert all(h1.eval(t) <= h2.eval(t) for t in (0.5, 2.0))
        assert phi_h(c, h1) <= phi_h(c, h2)


class TestHMassZero:
    def test_pair(self):
        z = ZeroChain(2, (((0.0, 0.0), 2.0), ((1.0, 1.0), -2.0)))
        assert h_mass_zero(z, PowerH(0.5)) == pytest.approx(2 * math.sqrt(2))

    def test_empty(self):
        assert h_mass_zero(ZeroChain(3), AbsH()) == 0.0

    def test_two_plus_atoms_abs(self):
        z = ZeroChain(1, (((0.0,), 1.0), ((1.0,), 1.0)))
        assert h_mass_zero(z, AbsH()) == 2.0


class TestHMassPatch:
    def test_arc_abs(self):
        v, e = h_mass_patch(quarter_circle_current(), AbsH())
        assert v == pytest.approx(math.pi / 2, abs=1e-6)

    def test_arc_theta4_power(self):
        v, e = h_mass_patch(quarter_circle_current(4.0), PowerH(0.5))
        assert v == pytest.approx(math.pi, abs=1e-6)

    def test_flat_square_any_h(self):
        for h in BUILTINS:
            v, e = h_mass_patch(flat_square_current(), h)
            assert v == pytest.approx(h.eval(1.0), abs=1e-9)

    def test_matches_patch_mass_for_abs(self):
        from hmass.rectifiable import patch_mass

        qc = quarter_circle_current(2.0)
        v1, e1 = h_mass_patch(qc, AbsH())
        v2, e2 = patch_mass(qc)
        assert abs(v1 - v2) <= e1 + e2 + 1e-12


class TestRelaxationLiminf:
    def test_chord_refinement(self):
        qc = quarter_circle_current()
        js = [4, 16, 64, 256]
        seq, maps = [], []
        for j in js:
            c, m = inscribed_chord_chain(qc, j)
            seq.append(c)
            maps.append(m)
        rep = relaxation_liminf(seq, qc, AbsH(), mappings=maps)
        phis = [r.phi_h for r in rep.rows]
        assert all(b > a for a, b in zip(phis, phis[1:]))  # increasing to target
        assert all(r.phi_h < math.pi / 2 for r in rep.rows)  # from below
        assert rep.flat_converging
        assert -1e-4 <= rep.gap <= 0.0

    def test_constant_sequence_zero_gap(self):
        from hmass.rectifiable import poly_approximate

        sq_m1 = quarter_circle_current()  # use a 1d current for mapping route
        line = flat_square_current()
        # constant sequence: the exact chain of an affine segment patch
        from hmass.rectifiable import ConstTheta, PolyGraph, RectifiableCurrent, RectifiablePatch

        patch = RectifiablePatch(
            m=1, n=2, domain=(0.0, 1.0), graph=PolyGraph((0.0, 0.5)),
            lipschitz=0.5, theta=ConstTheta(1.0),
        )
        cur = RectifiableCurrent((patch,))
        chain, mapping = inscribed_chord_chain(cur, 1)
        rep = relaxation_liminf([chain] * 3, cur, AbsH(), mappings=[mapping] * 3)
        assert rep.gap == pytest.approx(0.0, abs=1e-9)
        assert all(r.flat_upper <= 1e-9 for r in rep.rows)

    def test_spurious_extra_mass(self):
        # refinement sequence with a far-away extra segment of length eps:
        # the gap converges to +eps (phi_h is additive over disjoint terms)
        eps = 0.05
        qc = quarter_circle_current()
        js = [16, 64, 256]
        seq, maps = [], []
        for j in js:
            c, m = inscribed_chord_chain(qc, j)
            extra = WeightedSimplex(
                Simplex(((5.0, 0.0), (5.0 + eps, 0.0))), 1.0
            )
            seq.append(PolyhedralChain(2, 1, c.terms + (extra,), "verified-disjoint"))
            maps.append(m)  # extra term is unmatched: pays its own mass
        rep = relaxation_liminf(seq, qc, AbsH(), mappings=None)
        assert rep.gap == pytest.approx(eps, abs=1e-3)

    def test_lsc_inequality_for_all_builtins(self):
        qc = quarter_circle_current(2.0)
        js = [8, 32, 128, 512]
        seq, maps = [], []
        for j in js:
            c, m = inscribed_chord_chain(qc, j)
            seq.append(c)
            maps.append(m)
        for h in BUILTINS:
            rep = relaxation_liminf(seq, qc, h, mappings=maps)
            tol = rep.h_mass_error + 1e-6
            assert rep.gap >= -1e-4 - tol
            assert rep.rows[-1].flat_upper < rep.rows[0].flat_upper
