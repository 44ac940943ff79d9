import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifsmeasure.cantor import cantor_cdf
from ifsmeasure.distributions import CantorUniform, Exponential, Triangular, Uniform01, eval_cdf
from ifsmeasure.errors import ConstructionError, DomainError, IntegrityError
from ifsmeasure.ifs import (
    AffineMap,
    ComposedMap,
    Ifsp,
    TheoremMap,
    TriangularMap,
    apply_map,
    build_theorem_ifsp,
    cantor_ifsp,
    compose_ifsp,
    digit_map,
    identity_map,
    invariance_residual,
    preimage_mass,
    symmetry_affine_ifsp,
    triangular_ifsp,
)

from conftest import all_dists, dist_id


class TestDigitMap:
    @pytest.mark.parametrize("n, i, u, expected", [(2, 2, 0.5, 0.75), (3, 1, 0.0, 0.0), (5, 4, 1.0, 0.8)])
    def test_examples(self, n, i, u, expected):
        assert digit_map(n, i, u) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("n, i", [(2, 0), (2, 3), (1, 1)])
    def test_index_out_of_range(self, n, i):
        with pytest.raises(DomainError):
            digit_map(n, i, 0.5)

    @settings(max_examples=200)
    @given(n=st.integers(2, 12), data=st.data(), u=st.floats(0.0, 1.0))
    def test_range_is_the_ith_cell(self, n, data, u):
        i = data.draw(st.integers(1, n))
        v = digit_map(n, i, u)
        assert (i - 1) / n <= v <= i / n + 1e-16


class TestBuildTheorem:
    def test_uniform_halves(self):
        ifsp = build_theorem_ifsp(Uniform01(), 2)
        assert apply_map(ifsp.maps[1], 0.5) == 0.75
        for x in np.linspace(0, 1, 33):
            assert apply_map(ifsp.maps[0], x) == pytest.approx(x / 2, abs=1e-15)
            assert apply_map(ifsp.maps[1], x) == pytest.approx(x / 2 + 0.5, abs=1e-15)

    def test_exponential_left_fixed_point(self):
        ifsp = build_theorem_ifsp(Exponential(1.0), 2)
        assert apply_map(ifsp.maps[0], 0.0) == 0.0
        # map_1(x) = -ln(1 - (1 - e^-x)/2)
        for x in (0.1, 1.0, 3.0):
            assert apply_map(ifsp.maps[0], x) == pytest.approx(-math.log(1 - (1 - math.exp(-x)) / 2), rel=1e-14)

    def test_triangular_matches_printed_branch(self):
        ifsp = build_theorem_ifsp(Triangular(), 2)
        assert apply_map(ifsp.maps[0], 1.0) == pytest.approx(math.sqrt(0.5), abs=1e-14)

    def test_probabilities_and_label(self):
        ifsp = build_theorem_ifsp(Exponential(2.0), 5)
        assert ifsp.n == 5 and ifsp.probs == (0.2,) * 5
        assert ifsp.dist == Exponential(2.0)
        assert ifsp.support == (0.0, math.inf)

    def test_rejects_small_n(self):
        with pytest.raises(ConstructionError):
            build_theorem_ifsp(Uniform01(), 1)

    def test_rejects_distribution_with_atoms(self):
        class Atomic(Uniform01):
            continuous = False

        with pytest.raises(ConstructionError, match="continuous"):
            build_theorem_ifsp(Atomic(), 2)

    def test_zero_mass_start_uses_left_cell_endpoint(self):
        d = Exponential(1.0)
        for i in (1, 2, 3):
            assert TheoremMap(d, 3, i)(-4.0) == pytest.approx(d.quantile((i - 1) / 3) if i > 1 else 0.0)


class TestApplyMap:
    def test_affine(self):
        assert apply_map(AffineMap(1 / 3, 0.0), 0.9) == pytest.approx(0.3, abs=1e-15)

    def test_triangular_branch_two_at_junction(self):
        v = apply_map(TriangularMap(2), 1.0)
        assert v == pytest.approx(2 - math.sqrt(0.5), abs=1e-15)
        assert v == pytest.approx(1.29289, abs=1e-5)
        # both pieces of branch 2 agree at x = 1
        assert 2 - math.sqrt(1 - 1 / 2) == pytest.approx(2 - math.sqrt(2 - 2 + 1 / 2))

    def test_composed(self):
        m = ComposedMap(AffineMap(1 / 3, 2 / 3), AffineMap(1 / 3, 0.0))
        assert apply_map(m, 0.0) == pytest.approx(2 / 3, abs=1e-15)

    @pytest.mark.parametrize("bad", [math.nan, math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(DomainError):
            apply_map(AffineMap(0.5, 0.0), bad)

    def test_clamps_to_domain(self):
        assert apply_map(TriangularMap(1), 5.0) == 1.0
        assert apply_map(TheoremMap(Uniform01(), 2, 2), -3.0) == 0.5

    @pytest.mark.parametrize("dist", all_dists(), ids=dist_id)
    def test_maps_nondecreasing_and_array_agrees(self, dist, rng):
        lo = dist.support_lo
        hi = dist.support_hi if math.isfinite(dist.support_hi) else 25.0
        xs = np.sort(rng.uniform(lo, hi, 1500))
        for m in build_theorem_ifsp(dist, 3).maps:
            vals = np.array([apply_map(m, x) for x in xs])
            assert (np.diff(vals) >= 0).all()
            np.testing.assert_allclose(m.apply_array(xs), vals, rtol=1e-13, atol=1e-15)


class TestSymmetryAffine:
    def test_cantor(self):
        f1, f2 = symmetry_affine_ifsp(1 / 3, 0.0).maps
        assert (f1.a, f1.b) == (1 / 3, 0.0)
        assert f2.a == 1 / 3 and f2.b == pytest.approx(2 / 3, abs=2e-16)
        assert cantor_ifsp() == symmetry_affine_ifsp(1 / 3, 0.0)

    def test_half_is_uniform_theorem_system(self):
        affine = symmetry_affine_ifsp(0.5, 0.0)
        theorem = build_theorem_ifsp(Uniform01(), 2)
        for x in np.linspace(0, 1, 65):
            for a, t in zip(affine.maps, theorem.maps):
                assert apply_map(a, x) == pytest.approx(apply_map(t, x), abs=1e-15)

    @pytest.mark.parametrize(
        "a, b, inequality",
        [(0.0, 0.2, "a != 0"), (0.1, 0.6, "b <= 1/2"), (0.1, -0.1, "0 <= b"), (0.4, 0.2, "a \\+ b <= 1/2")],
    )
    def test_constraint_errors_name_the_inequality(self, a, b, inequality):
        with pytest.raises(ConstructionError, match=inequality):
            symmetry_affine_ifsp(a, b)

    @pytest.mark.parametrize("a, b", [(0.25, 0.1), (0.4, 0.05), (0.2, 0.3), (-0.2, 0.5)])
    def test_admissible_pairs_give_self_maps_of_the_unit_interval(self, a, b):
        ifsp = symmetry_affine_ifsp(a, b)
        assert ifsp.support == (0.0, 1.0)
        xs = np.linspace(0, 1, 101)
        for m in ifsp.maps:
            ys = m.apply_array(xs)
            assert ys.min() >= -1e-15 and ys.max() <= 1 + 1e-15
        # the two maps mirror each other: f_2(x) = 1 - f_1(1 - x)
        np.testing.assert_allclose(ifsp.maps[1].apply_array(xs), 1 - ifsp.maps[0].apply_array(1 - xs), atol=1e-15)


class TestTriangular:
    def test_printed_values(self):
        f1, f2 = triangular_ifsp().maps
        assert apply_map(f1, 2.0) == 1.0
        assert apply_map(f2, 0.0) == 1.0
        assert apply_map(f1, 0.0) == 0.0

    def test_closed_form_equals_theorem_maps(self):
        closed = triangular_ifsp()
        theorem = build_theorem_ifsp(Triangular(), 2)
        xs = np.linspace(0, 2, 2001)
        for c, t in zip(closed.maps, theorem.maps):
            np.testing.assert_allclose(c.apply_array(xs), t.apply_array(xs), atol=1e-12)

    def test_conjugacy_of_printed_maps(self):
        d = Triangular()
        for x in np.linspace(0.01, 1.99, 199):
            for i, m in enumerate(triangular_ifsp().maps, start=1):
                assert d.cdf(m(x)) == pytest.approx(digit_map(2, i, d.cdf(x)), abs=1e-12)


class TestCompose:
    def test_enumeration_is_inner_fastest(self):
        inner = build_theorem_ifsp(Exponential(1.0), 2)
        outer = build_theorem_ifsp(Exponential(0.5), 2)
        g = compose_ifsp(outer, inner)
        assert g.n == 4
        expected = [(0, 0), (0, 1), (1, 0), (1, 1)]
        for m, (j, i) in zip(g.maps, expected):
            assert m.outer == outer.maps[j] and m.inner == inner.maps[i]
        # g_2 = f^2_1 o f^1_2
        x = 0.7
        assert g.maps[1](x) == outer.maps[0](inner.maps[1](x))

    def test_product_probabilities(self):
        g = compose_ifsp(cantor_ifsp(), cantor_ifsp())
        assert g.probs == (0.25,) * 4
        assert math.fsum(g.probs) == pytest.approx(1.0, abs=1e-12)

    def test_uneven_probabilities_conserved(self):
        a = Ifsp((AffineMap(0.5, 0, 0, 1), AffineMap(0.5, 0.5, 0, 1)), (0.3, 0.7))
        b = Ifsp((AffineMap(0.2, 0, 0, 1), AffineMap(0.3, 0.1, 0, 1), AffineMap(0.1, 0.9, 0, 1)), (0.1, 0.6, 0.3))
        g = compose_ifsp(a, b)
        assert abs(math.fsum(g.probs) - 1.0) <= 1e-12
        assert g.probs[1] == pytest.approx(0.3 * 0.6)

    def test_identity_composition(self):
        x_sys = triangular_ifsp()
        ident = Ifsp((identity_map(0.0, 2.0),), (1.0,))
        g = compose_ifsp(x_sys, ident)
        assert g.probs == x_sys.probs
        for x in np.linspace(0, 2, 41):
            for gm, xm in zip(g.maps, x_sys.maps):
                assert gm(x) == xm(x)

    def test_support_mismatch(self):
        with pytest.raises(ConstructionError, match="support"):
            compose_ifsp(cantor_ifsp(), triangular_ifsp())


class TestIfspValidation:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(ConstructionError):
            Ifsp((AffineMap(0.5, 0), AffineMap(0.5, 0.5)), (0.5, 0.6))

    def test_negative_probability(self):
        with pytest.raises(ConstructionError):
            Ifsp((AffineMap(0.5, 0), AffineMap(0.5, 0.5)), (1.5, -0.5))

    def test_length_mismatch_and_empty(self):
        with pytest.raises(ConstructionError):
            Ifsp((AffineMap(0.5, 0),), (0.5, 0.5))
        with pytest.raises(ConstructionError):
            Ifsp((), ())

    def test_domains_must_agree(self):
        with pytest.raises(ConstructionError):
            Ifsp((AffineMap(0.5, 0, 0, 1), TriangularMap(1)), (0.5, 0.5))

    def test_immutable(self):
        ifsp = cantor_ifsp()
        with pytest.raises(AttributeError):
            ifsp.probs = (1.0,)


class TestInvariance:
    def test_uniform_theorem(self):
        rep = invariance_residual(build_theorem_ifsp(Uniform01(), 2), Uniform01(), np.linspace(0, 1, 101))
        assert rep.max_residual <= 1e-10
        assert len(rep.residuals) == 101

    def test_cantor_affine(self):
        grid = (np.arange(729) + 0.5) / 729
        rep = invariance_residual(cantor_ifsp(), CantorUniform(), grid)
        assert rep.max_residual <= 1e-9

    def test_triangular(self):
        rep = invariance_residual(triangular_ifsp(), Triangular(), np.linspace(0, 2, 101))
        assert rep.max_residual <= 1e-9

    @pytest.mark.parametrize("dist", all_dists(), ids=dist_id)
    def test_theorem_systems_both_methods(self, dist):
        ifsp = build_theorem_ifsp(dist, 3)
        u = (np.arange(60) + 0.5) / 60
        grid = [dist.quantile(v) for v in u]
        for method in ("analytic", "bisection"):
            assert invariance_residual(ifsp, dist, grid, method).max_residual <= 1e-9

    def test_analytic_and_bisection_preimages_agree(self):
        d = Exponential(1.0)
        for m in build_theorem_ifsp(d, 4).maps:
            for y in (0.05, 0.3, 1.0, 2.5, 7.0):
                a = preimage_mass(m, d, y, "analytic")
                b = preimage_mass(m, d, y, "bisection")
                assert a == pytest.approx(b, abs=1e-9)

    def test_symmetry_soundness_uniform(self):
        # F = identity satisfies F(1-x) = 1-F(x) and F(x)/2 = F(x/2)
        rep = invariance_residual(symmetry_affine_ifsp(0.5, 0.0), Uniform01(), np.linspace(0, 1, 257))
        assert rep.max_residual <= 1e-9

    def test_wrong_law_has_large_residual(self):
        rep = invariance_residual(triangular_ifsp(), Uniform01(), np.linspace(0, 1, 11))
        assert rep.max_residual > 0.01

    def test_decreasing_map_is_integrity_error(self):
        with pytest.raises(IntegrityError):
            preimage_mass(AffineMap(-1.0, 1.0, 0.0, 1.0), Uniform01(), 0.5)

    def test_non_monotone_map_is_integrity_error(self):
        class Tent:
            domain = (0.0, 1.0)

            def __call__(self, x):
                return 2 * x if x < 0.5 else 0.2 + 0.6 * (1 - x)

        with pytest.raises(IntegrityError):
            preimage_mass(Tent(), Uniform01(), 0.1)

    def test_analytic_requires_theorem_map(self):
        with pytest.raises(DomainError):
            preimage_mass(AffineMap(0.5, 0.0), Uniform01(), 0.3, "analytic")

    def test_report_dict(self):
        rep = invariance_residual(cantor_ifsp(), CantorUniform(), [0.1, 0.5])
        d = rep.to_dict()
        assert set(d) == {"grid", "residuals", "max_residual"} and d["grid"] == [0.1, 0.5]


@pytest.mark.parametrize("dist", all_dists(), ids=dist_id)
@pytest.mark.parametrize("n", [2, 3, 5])
def test_theorem_conjugacy(dist, n, rng):
    ifsp = build_theorem_ifsp(dist, n)
    lo = dist.support_lo
    hi = dist.support_hi if math.isfinite(dist.support_hi) else 30.0
    for x in rng.uniform(lo, hi, 150):
        fx = eval_cdf(dist, x)
        if not 0 < fx < 1:
            continue
        for i, m in enumerate(ifsp.maps, start=1):
            assert eval_cdf(dist, apply_map(m, x)) == pytest.approx(digit_map(n, i, fx), abs=1e-9)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_images_partition_the_range(n):
    # F(f_i(x)) ranges over [(i-1)/n, i/n]: the images tile quantile space
    d = Exponential(1.0)
    for i, m in enumerate(build_theorem_ifsp(d, n).maps, start=1):
        assert d.cdf(m(0.0)) == pytest.approx((i - 1) / n, abs=1e-15)
        assert d.cdf(m(60.0)) == pytest.approx(i / n, abs=1e-12)


def test_cantor_theorem_and_affine_systems_agree_off_gaps():
    theorem = build_theorem_ifsp(CantorUniform(), 2)
    affine = cantor_ifsp()
    for x in (np.arange(729) + 0.5) / 729:
        for t, a in zip(theorem.maps, affine.maps):
            assert cantor_cdf(t(x)) == pytest.approx(cantor_cdf(a(x)), abs=1e-12)
