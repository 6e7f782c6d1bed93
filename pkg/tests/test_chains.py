import math

import numpy as np
import pytest

from hmass.chains import (
    ChainError,
    DegenerateSimplexError,
    DimensionMismatchError,
    OverlapUnverifiedError,
    PolyhedralChain,
    Simplex,
    WeightedSimplex,
    ZeroChain,
    add,
    boundary,
    chain_from_json,
    chain_to_json,
    mass,
    overlap_check,
    scale,
    simplex_volume,
)

from genutil import mesh_chain, random_chain


def seg(a, b, theta=1.0):
    return WeightedSimplex(Simplex((tuple(a), tuple(b))), theta)


def chain1(n, *terms):
    return PolyhedralChain(n, 1, tuple(terms))


class TestSimplex:
    def test_volume_triangle(self):
        assert simplex_volume([(0, 0), (1, 0), (0, 1)]) == pytest.approx(0.5)

    def test_volume_isometry_invariant(self):
        rng = np.random.default_rng(7)
        verts = rng.normal(size=(3, 3))
        v0 = simplex_volume(verts)
        # random rotation + translation
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        moved = verts @ q.T + rng.normal(size=3)
        assert simplex_volume(moved) == pytest.approx(v0, rel=1e-9)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateSimplexError):
            Simplex(((0.0, 0.0), (1.0, 0.0), (2.0, 0.0)))

    def test_repeated_vertex_rejected(self):
        with pytest.raises(DegenerateSimplexError):
            Simplex(((0.0, 0.0), (0.0, 0.0)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ChainError):
            Simplex(((0.0, 0.0), (math.inf, 0.0)))

    def test_dim_exceeds_ambient(self):
        with pytest.raises(ChainError):
            Simplex(((0.0,), (1.0,), (2.0,)))


class TestBoundary:
    def test_segment(self):
        c = chain1(2, seg((0, 0), (1, 0), 2.0))
        zb = boundary(c)
        assert zb.atoms == (((0.0, 0.0), -2.0), ((1.0, 0.0), 2.0))

    def test_boundary_of_zero_chain_rejected(self):
        z = ZeroChain(2, (((0.0, 0.0), 1.0),))
        with pytest.raises(ChainError):
            boundary(z)

    def test_dd_triangle(self):
        tri = PolyhedralChain.from_simplex_data(
            2, 2, [([(0, 0), (1, 0), (0, 1)], 1.0)]
        )
        assert boundary(boundary(tri)).is_empty

    def test_two_triangles_shared_edge_cancels(self):
        # consistently oriented pair: shared edge (1,0)-(0,1) cancels and the
        # quadrilateral boundary survives (enumerated by hand)
        t1 = ([(0, 0), (1, 0), (0, 1)], 1.0)
        t2 = ([(1, 0), (1, 1), (0, 1)], 1.0)
        c = PolyhedralChain.from_simplex_data(2, 2, [t1, t2])
        b = boundary(c)
        got = {
            (t.simplex.sort_key(), t.simplex.orientation_vs_sorted(), t.multiplicity)
            for t in b.terms
        }
        expect_edges = {
            (((0.0, 0.0), (1.0, 0.0)), 1, 1.0),
            (((1.0, 0.0), (1.0, 1.0)), 1, 1.0),
            (((0.0, 1.0), (1.0, 1.0)), -1, 1.0),
            (((0.0, 0.0), (0.0, 1.0)), -1, 1.0),
        }
        assert got == expect_edges
        assert boundary(b).is_empty

    @pytest.mark.parametrize("m,n", [(2, 2), (2, 3), (3, 3), (2, 4), (3, 4)])
    def test_dd_zero_random(self, m, n):
        rng = np.random.default_rng(100 * m + n)
        for _ in range(20):
            c = random_chain(rng, m, n, n_terms=int(rng.integers(1, 5)))
            b2 = boundary(boundary(c))
            assert b2.is_empty

    @pytest.mark.parametrize("m,n", [(2, 2), (2, 3), (3, 3), (3, 4)])
    def test_dd_zero_mesh(self, m, n):
        # face-sharing cells with clashing multiplicities stress the
        # combinatorial cancellation path
        rng = np.random.default_rng(17 * m + n)
        for _ in range(20):
            c = mesh_chain(rng, m, n, n_cells=int(rng.integers(2, 5)))
            assert boundary(boundary(c)).is_empty

    def test_cycle_boundary_total_zero(self):
        sq = chain1(
            2,
            seg((0, 0), (1, 0)),
            seg((1, 0), (1, 1)),
            seg((1, 1), (0, 1)),
            seg((0, 1), (0, 0)),
        )
        assert boundary(sq).is_empty


class TestMass:
    def test_two_segments(self):
        c = chain1(2, seg((0, 0), (1, 0), 3.0), seg((0, 1), (2, 1), 0.5))
        c = overlap_check(c).chain
        assert mass(c) == pytest.approx(4.0)

    def test_triangle_weighted(self):
        c = PolyhedralChain.from_simplex_data(
            2, 2, [([(0, 0), (1, 0), (0, 1)], 3.0)], status="verified-disjoint"
        )
        assert mass(c) == pytest.approx(1.5)

    def test_embedded_in_r5(self):
        a = tuple([0.0] * 5)
        b = (1.0, 0.0, 0.0, 0.0, 0.0)
        c = PolyhedralChain(5, 1, (seg(a, b),), "verified-disjoint")
        assert mass(c) == pytest.approx(1.0)

    def test_unverified_raises(self):
        c = chain1(2, seg((0, 0), (1, 0)))
        assert c.overlap_status == "unverified"
        with pytest.raises(OverlapUnverifiedError):
            mass(c)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(5)
        c = random_chain(rng, 2, 3, 4)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        shift = rng.normal(size=3)
        moved_terms = tuple(
            WeightedSimplex(
                Simplex(tuple(tuple(np.asarray(v) @ q.T + shift) for v in t.simplex.vertices)),
                t.multiplicity,
            )
            for t in c.terms
        )
        moved = PolyhedralChain(3, 2, moved_terms)
        m0 = mass(overlap_check(c).chain)
        m1 = mass(overlap_check(moved).chain)
        assert m1 == pytest.approx(m0, rel=1e-9)


class TestAddScale:
    def test_cancellation(self):
        a = chain1(2, seg((0, 0), (1, 0)))
        b = chain1(2, seg((1, 0), (0, 0)))
        assert add(a, b).is_empty

    def test_interval_overlay(self):
        a = chain1(2, seg((0, 0), (1, 0), 2.0))
        b = chain1(2, seg((0.5, 0), (1.5, 0), 1.0))
        c = add(a, b)
        got = sorted(
            (t.simplex.sort_key(), t.multiplicity) for t in c.terms
        )
        assert got == [
            (((0.0, 0.0), (0.5, 0.0)), 2.0),
            (((0.5, 0.0), (1.0, 0.0)), 3.0),
            (((1.0, 0.0), (1.5, 0.0)), 1.0),
        ]
        assert c.overlap_status == "canonicalized"

    def test_zero_chain_cancellation(self):
        z1 = ZeroChain(2, (((0.5, 0.5), 1.0),))
        z2 = ZeroChain(2, (((0.5, 0.5), -1.0),))
        assert (z1 + z2).is_empty

    def test_dimension_mismatch(self):
        a = chain1(2, seg((0, 0), (1, 0)))
        b = PolyhedralChain.from_simplex_data(3, 1, [([(0, 0, 0), (1, 0, 0)], 1.0)])
        with pytest.raises(DimensionMismatchError):
            add(a, b)

    def test_scale_identity_and_inverse(self):
        a = chain1(2, seg((0, 0), (1, 1), 1.5))
        assert scale(a, 1.0) == a
        assert add(a, scale(a, -1.0)).is_empty
        doubled = scale(a, 2.0)
        assert mass(overlap_check(doubled).chain) == pytest.approx(
            2 * mass(overlap_check(a).chain)
        )

    def test_scale_zero(self):
        a = chain1(2, seg((0, 0), (1, 1)))
        assert scale(a, 0.0).is_empty

    def test_scale_nonfinite(self):
        a = chain1(2, seg((0, 0), (1, 1)))
        with pytest.raises(ChainError):
            scale(a, math.nan)

    def test_add_commutative_associative(self):
        rng = np.random.default_rng(11)
        chains = [random_chain(rng, 1, 2, 3) for _ in range(3)]
        a, b, c = chains

        def canon(ch):
            return sorted(
                (t.simplex.vertices, t.multiplicity) for t in ch.terms
            )

        assert canon(add(a, b)) == canon(add(b, a))
        assert canon(add(add(a, b), c)) == canon(add(a, add(b, c)))

    def test_mass_subadditive(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = random_chain(rng, 1, 2, 2)
            b = random_chain(rng, 1, 2, 2)
            s = add(a, b)
            ma = mass(overlap_check(a).chain)
            mb = mass(overlap_check(b).chain)
            assert mass(s) <= ma + mb + 1e-9


class TestOverlap:
    def test_parallel_disjoint(self):
        c = chain1(2, seg((0, 0), (1, 0)), seg((0, 1), (1, 1)))
        res = overlap_check(c)
        assert res.disjoint and res.witness is None
        assert res.chain.overlap_status == "verified-disjoint"

    def test_identical_triangles_overlap(self):
        t = ([(0, 0), (1, 0), (0, 1)], 1.0)
        c = PolyhedralChain.from_simplex_data(2, 2, [t, t])
        res = overlap_check(c)
        assert not res.disjoint
        assert res.witness == (0, 1)

    def test_crossing_segments_disjoint(self):
        # H^1-null crossing does not count as overlap
        c = chain1(2, seg((0, 0), (1, 1)), seg((0, 1), (1, 0)))
        assert overlap_check(c).disjoint

    def test_collinear_overlap_detected(self):
        c = chain1(2, seg((0, 0), (1, 0)), seg((0.5, 0), (2, 0)))
        assert not overlap_check(c).disjoint

    def test_partially_overlapping_triangles(self):
        t1 = ([(0, 0), (2, 0), (0, 2)], 1.0)
        t2 = ([(0.5, 0.5), (2.5, 0.5), (0.5, 2.5)], 1.0)
        c = PolyhedralChain.from_simplex_data(2, 2, [t1, t2])
        assert not overlap_check(c).disjoint

    def test_touching_triangles_disjoint(self):
        t1 = ([(0, 0), (1, 0), (0, 1)], 1.0)
        t2 = ([(1, 0), (2, 0), (1, 1)], 1.0)
        c = PolyhedralChain.from_simplex_data(2, 2, [t1, t2])
        assert overlap_check(c).disjoint

    def test_tetrahedra_in_r4(self):
        t1 = ([(0, 0, 0, 0), (1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0)], 1.0)
        t2 = ([(0.1, 0.1, 0.1, 0), (1, 0.1, 0.1, 0), (0.1, 1, 0.1, 0), (0.1, 0.1, 1, 0)], 1.0)
        c = PolyhedralChain.from_simplex_data(4, 3, [t1, t2])
        assert not overlap_check(c).disjoint
        t3 = ([(0, 0, 0, 1), (1, 0, 0, 1), (0, 1, 0, 1), (0, 0, 1, 1)], 1.0)
        c2 = PolyhedralChain.from_simplex_data(4, 3, [t1, t3])
        assert overlap_check(c2).disjoint


class TestJson:
    def test_roundtrip_chain(self):
        rng = np.random.default_rng(23)
        c = random_chain(rng, 2, 3, 3)
        c2 = chain_from_json(chain_to_json(c))
        assert c2.ambient_dim == 3 and c2.dim == 2
        assert sorted(t.simplex.vertices for t in c2.terms) == sorted(
            t.simplex.vertices for t in c.terms
        )

    def test_roundtrip_zero_chain(self):
        z = ZeroChain(2, (((1.0, 0.0), 2.0), ((0.0, 0.0), -2.0)))
        z2 = chain_from_json(chain_to_json(z))
        assert z2 == z

    def test_canonical_term_order(self):
        a = chain1(2, seg((1, 0), (2, 0)), seg((0, 0), (1, 0)))
        doc = chain_to_json(a)
        assert doc.index("[[0.0, 0.0]") < doc.index("[[1.0, 0.0]")
