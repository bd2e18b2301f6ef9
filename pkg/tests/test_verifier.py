import json
import math

import pytest

from gapsvt import (
    ADAPTIVE_GAP,
    DomainError,
    DomainMismatch,
    GridBudgetExceeded,
    MECHANISMS,
    Mutation,
    NoiseKind,
    OutputDistribution,
    SVT_CLASSIC,
    SVT_GAP,
    Side,
    TrialPlan,
    Workload,
    check_alignment_soundness,
    check_cost_bound,
    check_dp_exact,
    check_structural_conditions,
    default_enumeration_instances,
    enumerate_output_dist,
    generate_workload,
    max_privacy_loss,
    mc_output_dist,
    mc_privacy_estimate,
    replay_witness,
    tv_distance,
)
from gapsvt.verifier import run_trial_suites, trial_rng


class TestWorkloadGeneration:
    def test_always_satisfies_sensitivity(self):
        plan = TrialPlan(SVT_GAP, trials=1, master_seed=0)
        for idx in range(2000):
            w, kind = generate_workload(plan, trial_rng(3, idx))
            assert all(abs(p.delta) <= 1 for p in w.pairs)
            assert len(w.pairs) >= 1 and w.k >= 1 and w.epsilon > 0

    def test_boundary_fraction_roughly_respected(self):
        plan = TrialPlan(SVT_GAP, trials=1, master_seed=0)
        boundary = 0
        total = 4000
        for idx in range(total):
            w, kind = generate_workload(plan, trial_rng(5, idx))
            if kind is NoiseKind.DLAP and all(abs(p.delta) == 1 for p in w.pairs) and all(
                abs(p.value_d - w.threshold) <= 1 for p in w.pairs
            ):
                boundary += 1
        assert 0.18 < boundary / total < 0.35

    def test_adaptive_workloads_carry_sigma(self):
        plan = TrialPlan(ADAPTIVE_GAP, trials=1, master_seed=0)
        for idx in range(200):
            w, _ = generate_workload(plan, trial_rng(7, idx))
            assert w.sigma is not None and w.sigma >= 0


class TestTrialSuites:
    @pytest.mark.parametrize("mechanism", MECHANISMS)
    def test_all_suites_pass(self, mechanism):
        plan = TrialPlan(mechanism, trials=2500, master_seed=101)
        reports = run_trial_suites(plan)
        for name, rep in reports.items():
            assert rep.passed, (name, rep.witness and rep.witness.detail)
        assert reports["cost"].max_cost <= max(plan.gen.epsilons) + 1e-12

    def test_single_suite_wrappers_match_engine(self):
        plan = TrialPlan(SVT_GAP, trials=300, master_seed=5)
        combined = run_trial_suites(plan)
        assert check_alignment_soundness(plan).to_json_dict() == combined["align"].to_json_dict()
        assert check_cost_bound(plan).to_json_dict() == combined["cost"].to_json_dict()
        assert (
            check_structural_conditions(plan).to_json_dict()
            == combined["structural"].to_json_dict()
        )

    @pytest.mark.parametrize(
        "mechanism,mutation",
        [
            (SVT_GAP, Mutation.THRESHOLD_SHIFT),
            (SVT_GAP, Mutation.QUERY_SHIFT),
            (SVT_CLASSIC, Mutation.THRESHOLD_SHIFT),
            (ADAPTIVE_GAP, Mutation.THRESHOLD_SHIFT),
            (ADAPTIVE_GAP, Mutation.QUERY_SHIFT),
            (ADAPTIVE_GAP, Mutation.DROP_SECOND_BRANCH),
        ],
    )
    def test_mutations_detected_with_replayable_witness(self, mechanism, mutation):
        plan = TrialPlan(mechanism, trials=10**4, master_seed=31, mutation=mutation)
        report = check_alignment_soundness(plan)
        assert report.verdict == "fail"
        assert report.witness is not None
        assert report.witness.trial_index < 10**4
        assert replay_witness(report.witness)

    def test_clean_witness_replay_is_negative(self):
        # a witness assembled from a passing configuration must not replay
        plan = TrialPlan(SVT_GAP, trials=50, master_seed=3, mutation=Mutation.THRESHOLD_SHIFT)
        report = check_alignment_soundness(plan)
        fixed = report.witness.__class__(**{**report.witness.__dict__, "mutation": None})
        assert not replay_witness(fixed)

    def test_stop_on_failure_false_keeps_counting(self):
        plan = TrialPlan(
            SVT_GAP, trials=200, master_seed=3, mutation=Mutation.THRESHOLD_SHIFT, stop_on_failure=False
        )
        report = check_alignment_soundness(plan)
        assert report.verdict == "fail"
        assert report.checks_run == 400  # both orientations on every trial

    def test_report_json_serializable(self):
        plan = TrialPlan(SVT_GAP, trials=100, master_seed=3, mutation=Mutation.QUERY_SHIFT)
        report = check_alignment_soundness(plan)
        payload = json.dumps(report.to_json_dict())
        assert "witness" in payload


class TestEnumeration:
    def test_identical_sides_give_identical_distributions(self):
        w = Workload.from_values([(1, 1), (0, 0)], 0, 1, 1.0)
        p = enumerate_output_dist(SVT_GAP, w, Side.D)
        q = enumerate_output_dist(SVT_GAP, w, Side.DPRIME)
        assert p.masses == q.masses

    @pytest.mark.parametrize("mechanism", MECHANISMS)
    def test_normalization(self, mechanism):
        w = default_enumeration_instances(mechanism)[0]
        dist = enumerate_output_dist(mechanism, w, Side.D)
        assert dist.normalization_defect() < 1e-9
        assert dist.truncation_loss < 1e-9
        assert all(m >= 0 for m in dist.masses.values())

    def test_batch_equals_per_tape(self):
        w = Workload.from_values([(1, 0), (0, 1)], 0, 1, 1.0)
        a = enumerate_output_dist(SVT_GAP, w, Side.D, box=5, method="per-tape")
        b = enumerate_output_dist(SVT_GAP, w, Side.D, box=5, method="batch")
        assert set(a.masses) == set(b.masses)
        for key in a.masses:
            assert a.masses[key] == pytest.approx(b.masses[key], abs=1e-15)

    def test_grid_budget_enforced(self):
        w = Workload.from_values([(1, 0), (0, 1), (1, 1)], 0, 1, 0.25)
        with pytest.raises(GridBudgetExceeded):
            enumerate_output_dist(SVT_GAP, w, Side.D, grid_budget=10**6)

    def test_integer_values_required(self):
        w = Workload.from_values([(1.5, 0.5)], 0, 1, 1.0)
        with pytest.raises(DomainError):
            enumerate_output_dist(SVT_GAP, w, Side.D)

    def test_single_query_mass_accounting(self):
        w = Workload.from_values([(1, 0)], 0, 1, 1.0)
        dist = enumerate_output_dist(SVT_GAP, w, Side.D)
        bot = dist.masses.get(("bot",), 0.0)
        tops = sum(m for key, m in dist.masses.items() if key != ("bot",))
        assert abs(bot + tops + dist.truncation_loss - 1.0) < 1e-9


class TestPrivacyLoss:
    def test_equal_distributions_have_zero_loss(self):
        d = OutputDistribution(SVT_GAP, "d", {("bot",): 0.4, (("plain", 1),): 0.6}, 0.0)
        loss = max_privacy_loss(d, d)
        assert loss.padded_max == 0.0 and loss.raw_max == 0.0 and loss.certified_max == 0.0

    def test_two_point_example(self):
        p = OutputDistribution(SVT_GAP, "d", {"a": 0.6, "b": 0.4}, 0.0)
        q = OutputDistribution(SVT_GAP, "dprime", {"a": 0.4, "b": 0.6}, 0.0)
        loss = max_privacy_loss(p, q)
        assert loss.padded_max == pytest.approx(math.log(1.5), abs=1e-12)
        assert loss.raw_max == pytest.approx(math.log(1.5), abs=1e-12)

    def test_mechanism_mismatch(self):
        p = OutputDistribution(SVT_GAP, "d", {"a": 1.0}, 0.0)
        q = OutputDistribution(ADAPTIVE_GAP, "dprime", {"a": 1.0}, 0.0)
        with pytest.raises(DomainMismatch):
            max_privacy_loss(p, q)

    def test_one_sided_outputs_are_material(self):
        p = OutputDistribution(SVT_GAP, "d", {"a": 0.9, "b": 0.1}, 1e-9)
        q = OutputDistribution(SVT_GAP, "dprime", {"a": 1.0}, 1e-9)
        loss = max_privacy_loss(p, q)
        assert loss.material_one_sided()
        assert loss.one_sided[0][0] == "b"

    def test_enumerated_instance_within_epsilon(self):
        w = Workload.from_values([(1, 0), (0, 1)], 0, 1, 1.0)
        p = enumerate_output_dist(SVT_GAP, w, Side.D)
        q = enumerate_output_dist(SVT_GAP, w, Side.DPRIME)
        loss = max_privacy_loss(p, q)
        assert loss.certified_max <= w.epsilon + 1e-9
        assert loss.padded_max <= w.epsilon + 1e-4
        assert not loss.material_one_sided()


class TestMonteCarlo:
    def test_mc_deterministic(self):
        w = Workload.from_values([(1, 0)], 0, 1, 1.0)
        a = mc_output_dist(SVT_GAP, w, Side.D, 10**4, seed=8)
        b = mc_output_dist(SVT_GAP, w, Side.D, 10**4, seed=8)
        assert a.masses == b.masses

    def test_mc_close_to_enumeration(self):
        w = Workload.from_values([(1, 0)], 0, 1, 1.0)
        enum = enumerate_output_dist(SVT_GAP, w, Side.D)
        mc = mc_output_dist(SVT_GAP, w, Side.D, 10**5, seed=4)
        assert tv_distance(enum, mc) < 0.05

    def test_identical_sides_not_flagged(self):
        w = Workload.from_values([(2, 2), (1, 1)], 1, 1, 1.0)
        report = mc_privacy_estimate(SVT_GAP, w, 10**4, seed=12)
        assert report.passed

    def test_sample_floor(self):
        w = Workload.from_values([(1, 0)], 0, 1, 1.0)
        with pytest.raises(DomainError):
            mc_privacy_estimate(SVT_GAP, w, 5000, seed=1)

    def test_valid_instance_not_flagged(self):
        w = Workload.from_values([(5, 6), (5, 6), (8, 7)], 4, 1, 1.0)
        report = mc_privacy_estimate(SVT_GAP, w, 10**5, seed=21)
        assert report.passed
        assert "heuristic" in report.notes["method"]

    @pytest.mark.slow
    def test_doubled_noise_scales_are_flagged(self):
        w = Workload.from_values([(5, 6), (5, 6), (8, 7)], 4, 1, 1.0)
        clean = mc_privacy_estimate(SVT_GAP, w, 10**6, seed=21)
        assert clean.passed
        report = mc_privacy_estimate(SVT_GAP, w, 10**6, seed=21, scale_epsilon_factor=2.0)
        assert report.verdict == "fail"
        assert report.notes["flagged"]
        assert report.witness is not None


class TestDpExact:
    @pytest.mark.parametrize("mechanism", MECHANISMS)
    def test_first_instances_pass(self, mechanism):
        for w in default_enumeration_instances(mechanism)[:2]:
            report, loss = check_dp_exact(mechanism, w)
            assert report.passed, report.to_json_dict()
            assert report.max_log_ratio <= w.epsilon + 1e-4
            assert report.truncation_loss < 1e-9

    def test_report_fields(self):
        w = default_enumeration_instances(SVT_GAP)[0]
        report, loss = check_dp_exact(SVT_GAP, w)
        d = report.to_json_dict()
        for field in ("verdict", "suite", "trials", "max_cost", "max_log_ratio", "truncation_loss"):
            assert field in d
        json.dumps(d)
