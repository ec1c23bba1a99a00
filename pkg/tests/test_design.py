import numpy as np
import pytest
from scipy.stats import norm

from mvbern.design import (
    DesignTarget,
    bivariate_normal_cdf,
    mvn_cdf,
    sample_size_compensatory,
    sample_size_mvn,
    sample_size_sequential,
    sample_size_single,
    sequential_mvn_power,
)
from mvbern.errors import InfeasibleRule, InvalidParams, ZeroEffect
from mvbern.harness import dgm_from_margins, get_dgm
from mvbern.rules import AllRule, AnyRule, CompensatoryRule, SingleRule


def target(dgm_id, alpha=0.05, beta=0.20):
    return DesignTarget(alpha=alpha, beta=beta, anticipated=get_dgm(dgm_id))


# Frozen per-group sample sizes for the benchmark grid (per-arm).
SINGLE_COLUMN = {"3": 307, "4": 75, "5": 17, "6": 17, "7": 75, "8": 51}
CE_COLUMN = {
    "3.1": 108, "3.2": 154, "3.3": 199,
    "4.1": 26, "4.2": 38, "4.3": 49,
    "5.1": 6, "5.2": 9, "5.3": 11,
    "6.1": 25, "6.2": 36, "6.3": 47,
    "8.1": 41, "8.2": 59, "8.3": 76,
}
ALL_COLUMN = {
    "3.1": 424, "3.2": 418, "3.3": 406,
    "4.1": 105, "4.2": 103, "4.3": 101,
    "5.1": 25, "5.2": 25, "5.3": 24,
    "8.1": 482, "8.2": 482, "8.3": 482,
}
ANY_COLUMN = {
    "3.1": 191, "3.2": 217, "3.3": 247,
    "4.1": 47, "4.2": 53, "4.3": 60,
    "5.1": 11, "5.2": 12, "5.3": 14,
    "6.1": 21, "6.2": 21, "6.3": 21,
    "7.1": 95, "7.2": 95, "7.3": 95,
    "8.1": 56, "8.2": 60, "8.3": 63,
}


class TestSingleRuleSize:
    @pytest.mark.parametrize("group,expected", sorted(SINGLE_COLUMN.items()))
    def test_two_proportion_z_values(self, group, expected):
        for sub in ("1", "2", "3"):  # the z-test ignores the correlation
            assert sample_size_single(target(f"{group}.{sub}")) == expected

    def test_zero_effect(self):
        with pytest.raises(ZeroEffect):
            sample_size_single(target("2.2"))
        with pytest.raises(ZeroEffect):
            sample_size_single(target("6.2"), outcome=2)

    def test_monotone_in_effect(self):
        small = dgm_from_margins("a", (0.55, 0.55), (0.45, 0.45), 0.0)
        large = dgm_from_margins("b", (0.60, 0.60), (0.40, 0.40), 0.0)
        n_small = sample_size_single(DesignTarget(0.05, 0.2, small))
        n_large = sample_size_single(DesignTarget(0.05, 0.2, large))
        assert n_large <= n_small


class TestCompensatorySize:
    @pytest.mark.parametrize("dgm_id,expected", sorted(CE_COLUMN.items()))
    def test_equal_weight_values(self, dgm_id, expected):
        assert sample_size_compensatory(target(dgm_id), (0.5, 0.5)) == expected

    def test_unit_weight_equals_single(self):
        for dgm_id in ("3.1", "4.2", "8.3"):
            assert sample_size_compensatory(target(dgm_id), (1.0, 0.0)) == \
                sample_size_single(target(dgm_id), 1)

    def test_zero_weighted_effect(self):
        with pytest.raises(ZeroEffect):
            sample_size_compensatory(target("2.1"), (0.5, 0.5))

    def test_correlation_direction(self):
        # positive outcome correlation inflates the weighted-sum variance
        for group in ("3", "4", "5", "8"):
            ns = [
                sample_size_compensatory(target(f"{group}.{s}"), (0.5, 0.5))
                for s in ("1", "2", "3")
            ]
            assert ns[0] <= ns[1] <= ns[2]


class TestMvnSize:
    @pytest.mark.parametrize("dgm_id,expected", sorted(ALL_COLUMN.items()))
    def test_all_rule_within_two(self, dgm_id, expected):
        assert abs(sample_size_mvn(AllRule(), target(dgm_id)) - expected) <= 2

    @pytest.mark.parametrize("dgm_id,expected", sorted(ANY_COLUMN.items()))
    def test_any_rule_within_two(self, dgm_id, expected):
        assert abs(sample_size_mvn(AnyRule(), target(dgm_id)) - expected) <= 2

    def test_correlation_direction(self):
        for group in ("3", "4", "5"):
            n_all = [
                sample_size_mvn(AllRule(), target(f"{group}.{s}"))
                for s in ("1", "2", "3")
            ]
            n_any = [
                sample_size_mvn(AnyRule(), target(f"{group}.{s}"))
                for s in ("1", "2", "3")
            ]
            assert n_all[0] >= n_all[1] >= n_all[2]
            assert n_any[0] <= n_any[1] <= n_any[2]

    def test_infeasible_signs(self):
        with pytest.raises(InfeasibleRule):
            sample_size_mvn(AllRule(), target("6.2"))
        with pytest.raises(InfeasibleRule):
            sample_size_mvn(AnyRule(), target("1.1"))

    def test_rejects_other_rules(self):
        with pytest.raises(InvalidParams):
            sample_size_mvn(SingleRule(1), target("4.2"))

    def test_one_outcome_reduction_matches_z_test(self):
        # a single outcome turns the joint test into the plain z-test; the
        # pooled-vs-alternative critical term keeps them within 2
        from mvbern.harness import DgmSpec
        from mvbern.model import CellProbabilities

        dgm = DgmSpec(
            "k1", np.array([0.6]), np.array([0.4]), 0.0,
            CellProbabilities([0.6, 0.4]), CellProbabilities([0.4, 0.6]),
        )
        tgt = DesignTarget(0.05, 0.2, dgm)
        assert abs(sample_size_mvn(AllRule(), tgt) - sample_size_single(tgt)) <= 2


class TestBivariateNormalCdf:
    def test_symmetry(self):
        for h, k, r in [(0.3, -1.2, 0.5), (1.0, 2.0, -0.8), (0.0, 0.0, 0.3)]:
            assert bivariate_normal_cdf(h, k, r) == pytest.approx(
                bivariate_normal_cdf(k, h, r), abs=1e-14
            )

    def test_independence(self):
        assert bivariate_normal_cdf(0.7, -0.2, 0.0) == pytest.approx(
            norm.cdf(0.7) * norm.cdf(-0.2), abs=1e-15
        )

    def test_orthant_identity(self):
        # P(X<=0, Y<=0) = 1/4 + arcsin(rho) / (2 pi)
        for rho in (-0.9, -0.3, 0.0, 0.45, 0.9):
            expected = 0.25 + np.arcsin(rho) / (2 * np.pi)
            assert bivariate_normal_cdf(0.0, 0.0, rho) == pytest.approx(expected, abs=1e-12)

    def test_perfect_correlation_limits(self):
        assert bivariate_normal_cdf(0.5, 1.5, 1.0) == pytest.approx(norm.cdf(0.5))
        assert bivariate_normal_cdf(0.5, -0.5, -1.0) == pytest.approx(0.0, abs=1e-15)
        assert bivariate_normal_cdf(1.0, -0.5, -1.0) == pytest.approx(
            norm.cdf(1.0) + norm.cdf(-0.5) - 1.0
        )

    def test_against_tensor_quadrature_oracle(self):
        # independent route: 2-D Gauss-Legendre integration of the density
        nodes, weights = np.polynomial.legendre.leggauss(160)

        def oracle(h, k, r):
            lo = -8.5
            x = 0.5 * (h - lo) * nodes + 0.5 * (h + lo)
            y = 0.5 * (k - lo) * nodes + 0.5 * (k + lo)
            xx, yy = np.meshgrid(x, y, indexing="ij")
            dens = np.exp(
                -(xx**2 - 2 * r * xx * yy + yy**2) / (2 * (1 - r**2))
            ) / (2 * np.pi * np.sqrt(1 - r**2))
            return (
                0.25 * (h - lo) * (k - lo)
                * np.einsum("i,j,ij->", weights, weights, dens)
            )

        grid = (-1.5, -0.5, 0.0, 0.8, 2.0)
        corrs = (-0.9, -0.45, 0.0, 0.45, 0.9)
        worst = 0.0
        for h in grid:
            for k in grid:
                for r in corrs:
                    err = abs(bivariate_normal_cdf(h, k, r) - oracle(h, k, r))
                    worst = max(worst, err)
        assert worst < 1e-6


class TestMvnCdf:
    def test_matches_bivariate_with_padding(self):
        corr = np.eye(3)
        corr[0, 1] = corr[1, 0] = 0.4
        padded = mvn_cdf(np.array([0.5, -0.3, 8.0]), corr)
        assert padded == pytest.approx(bivariate_normal_cdf(0.5, -0.3, 0.4), abs=5e-4)

    def test_independent_product(self):
        val = mvn_cdf(np.array([0.2, 0.4, -0.1]), np.eye(3))
        expected = norm.cdf(0.2) * norm.cdf(0.4) * norm.cdf(-0.1)
        assert val == pytest.approx(expected, abs=5e-4)

    def test_deterministic(self):
        corr = np.eye(3) * 0.4 + 0.6 * np.ones((3, 3))
        b = np.array([0.1, 0.9, -0.4])
        assert mvn_cdf(b, corr) == mvn_cdf(b, corr)


class TestSequentialSizing:
    def test_power_increases_with_n(self):
        p1 = sequential_mvn_power([13, 25, 38], 0.2, 0.24, 0.98)
        p2 = sequential_mvn_power([16, 31, 47], 0.2, 0.24, 0.98)
        assert p2 > p1

    def test_single_look_reduces_to_fixed_power(self):
        # one look at the fixed-design n gives roughly the planned power
        n = 38
        power = sequential_mvn_power([n], 0.2, 0.24, 0.95)
        assert power == pytest.approx(0.80, abs=0.02)

    def test_inflated_max_for_flat_boundary(self):
        tgt = target("4.2")
        n_max = sample_size_sequential(
            tgt, CompensatoryRule((0.5, 0.5)), (1 / 3, 2 / 3, 1.0), 0.98
        )
        assert n_max == 47
        assert n_max > sample_size_compensatory(tgt, (0.5, 0.5))

    def test_rejects_any_all(self):
        with pytest.raises(InvalidParams):
            sample_size_sequential(target("4.2"), AnyRule(), (0.5, 1.0), 0.98)
