import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapsvt import (
    BOT,
    Branch,
    CostWeights,
    LayoutMismatch,
    NoiseTape,
    Side,
    TapeLayout,
    Workload,
    adaptive_svt_gap_run,
    align_adaptive,
    align_svt_gap,
    alignment_cost,
    budget_split_adaptive,
    budget_split_svt,
    cost_closed_form,
    index_sets,
    shift_for_output,
    svt_gap_run,
    top_gap,
)
from gapsvt.alignments import Mutation


def zero_paired(n):
    return NoiseTape(0, tuple([(0, 0)] * n), TapeLayout.PAIRED)


class TestIndexSets:
    def test_plain_tops(self):
        omega_answers = (top_gap(1), BOT, top_gap(3))
        from gapsvt import OutputSequence

        sets = index_sets(OutputSequence(omega_answers))
        assert sets.top_first == {0, 2}
        assert sets.top_second == frozenset()

    def test_adaptive_branches(self):
        from gapsvt import OutputSequence

        omega = OutputSequence((top_gap(6, Branch.FIRST), BOT, top_gap(0.5, Branch.SECOND)))
        sets = index_sets(omega)
        assert sets.top_first == {0}
        assert sets.top_second == {2}

    def test_all_bot(self):
        from gapsvt import OutputSequence

        sets = index_sets(OutputSequence((BOT, BOT)))
        assert sets.top_first == frozenset() and sets.top_second == frozenset()


class TestAlignSvtGap:
    def test_worked_example_reproduces_output(self):
        w = Workload.from_values([(5, 4), (3, 4)], 4, 1, 1.0)
        tape = NoiseTape(0, (0, 0))
        omega = svt_gap_run(w, tape, Side.D)
        aligned = align_svt_gap(tape, omega, w)
        assert aligned.threshold_noise == 1
        assert aligned.per_query == (2, 0)
        assert svt_gap_run(w, aligned, Side.DPRIME) == omega

    def test_identical_sides_all_bot(self):
        w = Workload.from_values([(1, 1), (2, 2)], 4, 1, 1.0)
        tape = NoiseTape(0.5, (0.25, -0.75))
        omega = svt_gap_run(w, tape, Side.D)
        assert all(not a.top for a in omega)
        aligned = align_svt_gap(tape, omega, w)
        assert aligned.threshold_noise == tape.threshold_noise + 1
        assert aligned.per_query == tape.per_query
        assert svt_gap_run(w, aligned, Side.DPRIME) == omega

    def test_shift_is_constant_given_output(self):
        # over tapes conditioned on the same output, phi(H) - H is one vector
        w = Workload.from_values([(5, 4), (3, 4)], 4, 1, 1.0)
        rng = np.random.default_rng(7)
        shifts = {}
        for _ in range(3000):
            tape = NoiseTape(float(rng.normal(0, 2)), tuple(rng.normal(0, 2, size=2)))
            omega = svt_gap_run(w, tape, Side.D)
            aligned = align_svt_gap(tape, omega, w)
            delta = tuple(
                round(b - a, 9) for a, b in zip(tape.flat(), aligned.flat())
            )
            shifts.setdefault(omega.canonical(6), set()).add(delta)
        assert len(shifts) > 1
        assert all(len(v) == 1 for v in shifts.values())

    def test_layout_mismatch(self):
        w = Workload.from_values([(1, 1)], 0, 1, 1.0)
        from gapsvt import OutputSequence

        with pytest.raises(LayoutMismatch):
            align_svt_gap(zero_paired(1), OutputSequence((BOT,)), w)


class TestAlignAdaptive:
    def test_first_branch_example(self):
        w = Workload.from_values([(10, 9)], 4, 1, 1.0, sigma=2)
        budget = budget_split_adaptive(1.0, 1)
        tape = zero_paired(1)
        omega, _ = adaptive_svt_gap_run(w, budget, tape, Side.D)
        aligned = align_adaptive(tape, omega, w)
        assert aligned.threshold_noise == 1
        assert aligned.per_query == ((2, 0),)
        again, _ = adaptive_svt_gap_run(w, budget, aligned, Side.DPRIME)
        assert again == omega

    def test_second_branch_example(self):
        w = Workload.from_values([(5, 4)], 4, 1, 1.0, sigma=2)
        budget = budget_split_adaptive(1.0, 1)
        tape = zero_paired(1)
        omega, _ = adaptive_svt_gap_run(w, budget, tape, Side.D)
        assert omega.answers[0].branch is Branch.SECOND
        aligned = align_adaptive(tape, omega, w)
        assert aligned.per_query == ((0, 2),)
        again, _ = adaptive_svt_gap_run(w, budget, aligned, Side.DPRIME)
        assert again == omega

    def test_all_bot_keeps_queries(self):
        w = Workload.from_values([(0, 0), (1, 1)], 4, 1, 1.0, sigma=2)
        budget = budget_split_adaptive(1.0, 1)
        tape = NoiseTape(0.5, ((0.1, -0.2), (0.3, 0.4)), TapeLayout.PAIRED)
        omega, _ = adaptive_svt_gap_run(w, budget, tape, Side.D)
        assert all(not a.top for a in omega)
        aligned = align_adaptive(tape, omega, w)
        assert aligned.threshold_noise == tape.threshold_noise + 1
        assert aligned.per_query == tape.per_query
        again, _ = adaptive_svt_gap_run(w, budget, aligned, Side.DPRIME)
        assert again == omega


class TestAlignmentCost:
    def test_identity_costs_nothing(self):
        tape = NoiseTape(0.7, (1.0, -2.0))
        weights = CostWeights.for_svt(budget_split_svt(1.0, 1))
        assert alignment_cost(tape, tape, weights) == 0.0

    def test_single_top_with_max_delta(self):
        # one positive answer with delta = 1: 0.5 * 1 + 0.25 * |1 + 1| = 1.0
        w = Workload.from_values([(5, 4)], 4, 1, 1.0)
        tape = NoiseTape(0, (0,))
        omega = svt_gap_run(w, tape, Side.D)
        aligned = align_svt_gap(tape, omega, w)
        weights = CostWeights.for_svt(budget_split_svt(1.0, 1))
        cost = alignment_cost(tape, aligned, weights)
        assert cost == 1.0
        assert cost <= w.epsilon

    def test_adaptive_second_branch_with_max_delta(self):
        # 0.5 + 0.25 * |1 + 1| = 1.0 <= epsilon
        w = Workload.from_values([(5, 4)], 4, 1, 1.0, sigma=2)
        budget = budget_split_adaptive(1.0, 1)
        tape = zero_paired(1)
        omega, _ = adaptive_svt_gap_run(w, budget, tape, Side.D)
        aligned = align_adaptive(tape, omega, w)
        cost = alignment_cost(tape, aligned, CostWeights.for_adaptive(budget))
        assert cost == 1.0

    def test_closed_form_matches_generic_on_integers(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            n = int(rng.integers(1, 5))
            values = rng.integers(-3, 8, size=n)
            deltas = rng.integers(-1, 2, size=n)
            w = Workload.from_values(
                [(int(v), int(v - d)) for v, d in zip(values, deltas)],
                int(rng.integers(-2, 6)),
                int(rng.integers(1, 4)),
                1.0,
            )
            tape = NoiseTape(int(rng.integers(-5, 6)), tuple(int(x) for x in rng.integers(-5, 6, size=n)))
            omega = svt_gap_run(w, tape, Side.D)
            aligned = align_svt_gap(tape, omega, w)
            weights = CostWeights.for_svt(budget_split_svt(1.0, w.k))
            assert cost_closed_form(index_sets(omega), w.deltas(), weights) == alignment_cost(
                tape, aligned, weights
            )

    def test_length_mismatch_rejected(self):
        weights = CostWeights.for_svt(budget_split_svt(1.0, 1))
        with pytest.raises(LayoutMismatch):
            alignment_cost(NoiseTape(0, (0,)), NoiseTape(0, (0, 0)), weights)

    def test_weights_layout_checked(self):
        weights = CostWeights.for_adaptive(budget_split_adaptive(1.0, 1))
        with pytest.raises(LayoutMismatch):
            alignment_cost(NoiseTape(0, (0,)), NoiseTape(0, (0,)), weights)


class TestShiftStructure:
    def test_integer_closure(self):
        # integer values and tapes give integer aligned tapes
        w = Workload.from_values([(5, 4), (3, 4), (6, 6)], 4, 2, 1.0)
        tape = NoiseTape(-1, (2, 0, 1))
        omega = svt_gap_run(w, tape, Side.D)
        aligned = align_svt_gap(tape, omega, w)
        assert isinstance(aligned.threshold_noise, int)
        assert all(isinstance(v, int) for v in aligned.per_query)

    def test_shift_depends_only_on_index_sets_and_deltas(self):
        from gapsvt import OutputSequence

        deltas = (1, -1, 0)
        a = OutputSequence((top_gap(3), BOT, top_gap(0)))
        b = OutputSequence((top_gap(7), BOT, top_gap(2)))  # same index sets
        sa = shift_for_output(a, deltas, TapeLayout.SINGLE)
        sb = shift_for_output(b, deltas, TapeLayout.SINGLE)
        assert sa.flat() == sb.flat() == (1, 2, 0, 1)

    def test_mutations_change_the_shift(self):
        from gapsvt import OutputSequence

        omega = OutputSequence((top_gap(1),))
        deltas = (1,)
        base = shift_for_output(omega, deltas, TapeLayout.SINGLE)
        t = shift_for_output(omega, deltas, TapeLayout.SINGLE, Mutation.THRESHOLD_SHIFT, 2.0)
        q = shift_for_output(omega, deltas, TapeLayout.SINGLE, Mutation.QUERY_SHIFT)
        assert base.flat() == (1, 2)
        assert t.flat() == (2.0, 2)
        assert q.flat() == (1, 1)

    def test_drop_second_branch_mutation(self):
        from gapsvt import OutputSequence

        omega = OutputSequence((top_gap(1, Branch.SECOND),))
        deltas = (1,)
        base = shift_for_output(omega, deltas, TapeLayout.PAIRED)
        dropped = shift_for_output(omega, deltas, TapeLayout.PAIRED, Mutation.DROP_SECOND_BRANCH)
        assert base.flat() == (1, 0, 2)
        assert dropped.flat() == (1, 0, 0)


@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    n=st.integers(min_value=1, max_value=5),
    k=st.integers(min_value=1, max_value=3),
)
@settings(max_examples=150, deadline=None)
def test_alignment_soundness_property(seed, n, k):
    """Random integer workloads: the aligned tape reproduces the output
    exactly, and the cost stays within epsilon."""
    rng = np.random.default_rng(seed)
    values = rng.integers(-4, 10, size=n)
    deltas = rng.integers(-1, 2, size=n)
    w = Workload.from_values(
        [(int(v), int(v - d)) for v, d in zip(values, deltas)], int(rng.integers(0, 6)), k, 1.0
    )
    tape = NoiseTape(int(rng.integers(-6, 7)), tuple(int(x) for x in rng.integers(-6, 7, size=n)))
    omega = svt_gap_run(w, tape, Side.D)
    aligned = align_svt_gap(tape, omega, w)
    assert svt_gap_run(w, aligned, Side.DPRIME) == omega
    weights = CostWeights.for_svt(budget_split_svt(w.epsilon, k))
    assert alignment_cost(tape, aligned, weights) <= w.epsilon + 1e-12
