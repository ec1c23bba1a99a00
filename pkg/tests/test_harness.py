import json

import numpy as np
import pytest

from mvbern.engine import DesignSpec, FIXED, GROUP_SEQUENTIAL
from mvbern.errors import InvalidParams
from mvbern.harness import (
    RULE_COLUMNS,
    dgm_table,
    fixed_design_bias,
    get_dgm,
    least_favorable_dgm,
    named_priors,
    planned_sample_size,
    shifted_dgm,
    simulate_condition,
    write_csv,
    write_json,
)
from mvbern.model import margins_of, pairwise_correlation
from mvbern.rules import AllRule, AnyRule, CompensatoryRule, SingleRule

# Joint-success cells as printed in the benchmark table, two decimals.
PRINTED_PHI11 = {
    "1.1": (0.09, 0.29), "1.2": (0.16, 0.36), "1.3": (0.23, 0.43),
    "2.1": (0.17, 0.17), "2.2": (0.25, 0.25), "2.3": (0.32, 0.32),
    "3.1": (0.23, 0.13), "3.2": (0.30, 0.20), "3.3": (0.38, 0.28),
    "4.1": (0.29, 0.09), "4.2": (0.36, 0.16), "4.3": (0.43, 0.23),
    "5.1": (0.43, 0.03), "5.2": (0.49, 0.09), "5.3": (0.55, 0.15),
    "6.1": (0.28, 0.08), "6.2": (0.35, 0.15), "6.3": (0.42, 0.22),
    "7.1": (0.11, 0.21), "7.2": (0.18, 0.28), "7.3": (0.25, 0.35),
    "8.1": (0.26, 0.10), "8.2": (0.33, 0.17), "8.3": (0.41, 0.25),
}
PRINTED_DELTAS = {
    "1": (-0.20, -0.20), "2": (0.00, 0.00), "3": (0.10, 0.10), "4": (0.20, 0.20),
    "5": (0.40, 0.40), "6": (0.40, 0.00), "7": (0.20, -0.40), "8": (0.24, 0.08),
}


class TestDgmTable:
    def test_has_24_entries(self):
        table = dgm_table()
        assert len(table) == 24
        assert [d.id for d in table][:4] == ["1.1", "1.2", "1.3", "2.1"]

    def test_cells_match_printed_values(self):
        for dgm in dgm_table():
            exp_e, exp_c = PRINTED_PHI11[dgm.id]
            assert abs(dgm.phi_e.probs[0] - exp_e) <= 0.005 + 1e-9, dgm.id
            assert abs(dgm.phi_c.probs[0] - exp_c) <= 0.005 + 1e-9, dgm.id

    def test_margins_and_correlation_recovered(self):
        for dgm in dgm_table():
            assert margins_of(dgm.phi_e) == pytest.approx(dgm.theta_e, abs=1e-12)
            assert margins_of(dgm.phi_c) == pytest.approx(dgm.theta_c, abs=1e-12)
            assert pairwise_correlation(dgm.phi_e) == pytest.approx(dgm.rho, abs=1e-10)
            group = dgm.id.split(".")[0]
            assert dgm.delta == pytest.approx(PRINTED_DELTAS[group], abs=1e-12)

    def test_specific_rows(self):
        d52 = get_dgm("5.2")
        assert d52.theta_e == pytest.approx([0.70, 0.70])
        assert d52.phi_e.probs[0] == pytest.approx(0.49, abs=1e-12)
        d71 = get_dgm("7.1")
        assert d71.delta == pytest.approx([0.20, -0.40])
        assert d71.rho == -0.30

    def test_unknown_id(self):
        with pytest.raises(InvalidParams):
            get_dgm("9.1")


class TestLeastFavorable:
    def test_mapping(self):
        assert least_favorable_dgm(AllRule()) == "6"
        assert least_favorable_dgm(AnyRule()) == "2"
        assert least_favorable_dgm(SingleRule(1)) == "2"
        assert least_favorable_dgm(CompensatoryRule((0.3, 0.7))) == "2"


class TestShiftedDgm:
    def test_shift_moves_every_difference(self):
        base = get_dgm("4.2")
        up = shifted_dgm(base, +0.10)
        assert up.delta == pytest.approx([0.30, 0.30], abs=1e-12)
        assert up.theta_e == pytest.approx([0.65, 0.65])
        down = shifted_dgm(base, -0.10)
        assert down.delta == pytest.approx([0.10, 0.10], abs=1e-12)

    def test_infeasible_shift_raises(self):
        with pytest.raises(InvalidParams):
            shifted_dgm(get_dgm("5.1"), +0.65)


class TestNamedPriors:
    def test_reference_and_jeffreys(self):
        dgm = get_dgm("4.2")
        ref_e, ref_c = named_priors("ref", dgm)
        assert ref_e.alpha == pytest.approx([0.01] * 4)
        jef_e, _ = named_priors("jeffreys", dgm)
        assert jef_e.alpha == pytest.approx([0.5] * 4)

    def test_matched_informative(self):
        dgm = get_dgm("4.2")
        pe, pc = named_priors("matched", dgm)
        assert pe.alpha == pytest.approx([7.2, 4.8, 4.8, 3.2])
        assert pc.alpha == pytest.approx([3.2, 4.8, 4.8, 7.2])

    def test_understated_shifts_margins(self):
        dgm = get_dgm("4.2")
        pe, pc = named_priors("understated", dgm)
        mean_e = margins_of_params(pe)
        mean_c = margins_of_params(pc)
        assert mean_e == pytest.approx(dgm.theta_e - 0.05, abs=1e-12)
        assert mean_c == pytest.approx(dgm.theta_c + 0.05, abs=1e-12)

    def test_opposing_swaps_arms(self):
        dgm = get_dgm("4.2")
        pe, pc = named_priors("opposing", dgm)
        assert pe.alpha == pytest.approx(20 * dgm.phi_c.probs)
        assert pc.alpha == pytest.approx(20 * dgm.phi_e.probs)

    def test_numeric_codes_alias_names(self):
        dgm = get_dgm("4.2")
        assert named_priors("3", dgm)[0].alpha == pytest.approx(
            named_priors("matched", dgm)[0].alpha
        )

    def test_unknown_prior(self):
        with pytest.raises(InvalidParams):
            named_priors("vague", get_dgm("4.2"))


def margins_of_params(params):
    from mvbern.model import pattern_bits

    return (params.alpha @ pattern_bits(2)) / params.alpha.sum()


class TestPlannedSampleSize:
    def test_null_cells_are_none(self):
        assert planned_sample_size(get_dgm("2.2"), "single") is None
        assert planned_sample_size(get_dgm("7.1"), "ce") is None
        assert planned_sample_size(get_dgm("6.3"), "all") is None
        assert planned_sample_size(get_dgm("1.1"), "any") is None

    def test_known_cells(self):
        assert planned_sample_size(get_dgm("4.2"), "single") == 75
        assert planned_sample_size(get_dgm("4.2"), "ce") == 38
        assert planned_sample_size(get_dgm("7.2"), "cuu") == 733


def small_spec(dgm, rule, n, threshold=0.95, draws=2_000):
    pe, pc = named_priors("ref", dgm)
    return DesignSpec(FIXED, (n,), threshold, rule, pe, pc, draws)


class TestSimulateCondition:
    def test_reproducible(self):
        dgm = get_dgm("4.2")
        spec = small_spec(dgm, RULE_COLUMNS["ce"], 38)
        a = simulate_condition(dgm, spec, reps=200, seed=5)
        b = simulate_condition(dgm, spec, reps=200, seed=5)
        assert a.p_conclude_superiority == b.p_conclude_superiority
        assert a.mean_n_at_stop == b.mean_n_at_stop
        assert np.array_equal(a.bias, b.bias)

    def test_worker_count_does_not_change_output(self):
        dgm = get_dgm("4.2")
        spec = small_spec(dgm, RULE_COLUMNS["ce"], 38)
        serial = simulate_condition(dgm, spec, reps=120, seed=9, workers=1)
        parallel = simulate_condition(dgm, spec, reps=120, seed=9, workers=3)
        assert serial.p_conclude_superiority == parallel.p_conclude_superiority
        assert np.array_equal(serial.bias, parallel.bias)
        assert serial.mean_n_overall == parallel.mean_n_overall

    def test_fixed_design_rate_sane(self):
        dgm = get_dgm("4.2")
        spec = small_spec(dgm, RULE_COLUMNS["ce"], 38, draws=4_000)
        report = simulate_condition(dgm, spec, reps=400, seed=11)
        assert 0.70 < report.p_conclude_superiority < 0.90
        assert report.mean_n_at_stop == 38.0
        assert report.mean_n_overall == 38.0
        assert report.mc_standard_error == pytest.approx(
            np.sqrt(report.p_conclude_superiority
                    * (1 - report.p_conclude_superiority) / 400)
        )

    def test_sequential_condition_stops_early_sometimes(self):
        dgm = get_dgm("4.2")
        pe, pc = named_priors("ref", dgm)
        spec = DesignSpec(
            GROUP_SEQUENTIAL, (16, 31, 47), 0.98, RULE_COLUMNS["ce"], pe, pc, 2_000
        )
        report = simulate_condition(dgm, spec, reps=300, seed=13)
        assert report.mean_n_at_stop < 47.0
        assert report.mean_n_overall <= 47.0
        assert report.bias[0] > 0.0  # efficacy stopping inflates the estimate

    def test_harmful_configuration_never_concludes(self):
        # both outcomes worse: the region mass stays far below the threshold
        dgm = get_dgm("1.2")
        spec = small_spec(dgm, RULE_COLUMNS["ce"], 1000, draws=4_000)
        report = simulate_condition(dgm, spec, reps=400, seed=15)
        assert report.p_conclude_superiority == 0.0
        all_spec = small_spec(get_dgm("7.2"), RULE_COLUMNS["all"], 1000, draws=4_000)
        report = simulate_condition(get_dgm("7.2"), all_spec, reps=400, seed=16)
        assert report.p_conclude_superiority == 0.0


class TestFixedDesignBias:
    def test_unbiased_at_reference_prior(self):
        bias = fixed_design_bias(get_dgm("4.2"), 38, reps=4_000, seed=3)
        assert np.all(np.abs(bias) < 0.01)

    def test_opposing_prior_pulls_down(self):
        dgm = get_dgm("5.1")
        pe, pc = named_priors("opposing", dgm)
        bias = fixed_design_bias(dgm, 6, reps=2_000, seed=4, prior_e=pe, prior_c=pc)
        assert np.all(bias < -0.3)


class TestReportOutput:
    def test_csv_and_json_roundtrip(self, tmp_path):
        dgm = get_dgm("4.2")
        spec = small_spec(dgm, RULE_COLUMNS["ce"], 38)
        report = simulate_condition(dgm, spec, reps=50, seed=21)
        csv_path = tmp_path / "out.csv"
        json_path = tmp_path / "out.json"
        write_csv([report], csv_path)
        write_json([report], json_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "condition,reps,rate,mean_n,mean_n_overall,bias,se"
        assert len(lines) == 2
        payload = json.loads(json_path.read_text())
        assert payload[0]["reps"] == 50
        assert payload[0]["condition"].startswith("dgm=4.2|rule=ce|design=fixed")
        assert len(payload[0]["bias"]) == 2
