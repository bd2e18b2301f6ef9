"""Executable privacy checks.

Three families of evidence, in increasing strength on small instances:

* randomized trials over generated workloads and tapes, asserting that the
  alignment reproduces outputs on the adjacent side, that its weighted cost
  stays within the budget, and that the structural side conditions hold;
* an exact output-distribution oracle under integer (discrete Laplace)
  noise that enumerates every tape in a box and checks the likelihood-ratio
  bound directly;
* a Monte Carlo estimator used both to cross-check the enumeration and as a
  falsification heuristic on instances too large to enumerate.

Failures are reported as replayable witnesses, never exceptions: a fail
report carries the workload, the tape and both outputs, and
``replay_witness`` re-triggers the violation from those alone.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .alignments import (
    CostWeights,
    Mutation,
    align_adaptive,
    align_svt_gap,
    alignment_cost,
    cost_closed_form,
    index_sets,
    shift_for_output,
)
from .core import (
    NoiseKind,
    NoiseSpec,
    NoiseTape,
    OutputSequence,
    QueryPair,
    Side,
    TapeLayout,
    Workload,
    check_workload,
    discrete_laplace_box,
    discrete_laplace_tail,
    draw_tape,
)
from .errors import DomainError, DomainMismatch, GridBudgetExceeded
from .mechanisms import (
    ADAPTIVE_GAP,
    MECHANISMS,
    SVT_CLASSIC,
    SVT_GAP,
    AdaptiveBudget,
    budget_split_adaptive,
    budget_split_svt,
    default_budget,
    run_mechanism,
    svt_classic_run,
    svt_gap_run,
    tape_layout_for,
)
from .vectorized import canonical_rows, decode_row, encode_int_rows, run_status_gaps

GAP_TOL = 1e-9  # per-gap equality tolerance for real-valued workloads
COST_TOL = 1e-12


# ---------------------------------------------------------------------------
# Trial plans and workload generation


@dataclass(frozen=True)
class WorkloadGenSpec:
    """Ranges for randomized workload generation.

    A quarter of the workloads (by default) are boundary cases: integer
    values straddling the threshold with deltas pinned to +-1, where the
    cost and alignment inequalities are tight.  ``real_fraction`` of the
    rest use real-valued queries and continuous noise; the remainder are
    integer-valued with integer noise so outputs can be compared exactly.
    """

    n_range: tuple = (1, 6)
    value_range: tuple = (0.0, 20.0)
    k_range: tuple = (1, 3)
    epsilons: tuple = (0.5, 1.0, 2.0)
    sigma_range: tuple = (0.0, 4.0)
    boundary_fraction: float = 0.25
    real_fraction: float = 0.5  # of the non-boundary trials


@dataclass(frozen=True)
class TrialPlan:
    mechanism: str
    trials: int
    master_seed: int
    gen: WorkloadGenSpec = WorkloadGenSpec()
    mutation: Mutation | None = None
    mutation_value: float = 2.0
    stop_on_failure: bool = True

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise DomainError(f"unknown mechanism {self.mechanism!r}")
        if self.trials < 1:
            raise DomainError("trial count must be >= 1")


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent substream per (master seed, trial index)."""
    return np.random.default_rng((master_seed, trial_index))


def generate_workload(plan: TrialPlan, rng: np.random.Generator) -> tuple[Workload, NoiseKind]:
    g = plan.gen
    n = int(rng.integers(g.n_range[0], g.n_range[1] + 1))
    k = int(rng.integers(g.k_range[0], g.k_range[1] + 1))
    epsilon = float(g.epsilons[rng.integers(0, len(g.epsilons))])
    lo, hi = g.value_range
    mode = rng.random()
    if mode < g.boundary_fraction:
        threshold = int(rng.integers(int(lo), int(hi) + 1))
        pairs = []
        for _ in range(n):
            vd = threshold + int(rng.integers(-1, 2))  # straddle the threshold
            delta = int(rng.choice((-1, 1)))
            pairs.append(QueryPair(vd, vd - delta))
        sigma = int(rng.integers(0, 4)) if plan.mechanism == ADAPTIVE_GAP else None
        kind = NoiseKind.DLAP
    elif mode < g.boundary_fraction + (1 - g.boundary_fraction) * g.real_fraction:
        threshold = float(rng.uniform(lo, hi))
        pairs = []
        for _ in range(n):
            vd = float(rng.uniform(lo, hi))
            delta = float(rng.uniform(-1.0, 1.0))
            pairs.append(QueryPair(vd, vd - delta))
        sigma = float(rng.uniform(*g.sigma_range)) if plan.mechanism == ADAPTIVE_GAP else None
        kind = NoiseKind.LAPLACE
    else:
        threshold = int(rng.integers(int(lo), int(hi) + 1))
        pairs = []
        for _ in range(n):
            vd = int(rng.integers(int(lo), int(hi) + 1))
            delta = int(rng.integers(-1, 2))
            pairs.append(QueryPair(vd, vd - delta))
        sigma = int(rng.integers(0, 4)) if plan.mechanism == ADAPTIVE_GAP else None
        kind = NoiseKind.DLAP
    w = Workload(tuple(pairs), threshold, k, epsilon, sigma)
    return check_workload(w), kind


# ---------------------------------------------------------------------------
# Reports and witnesses


@dataclass(frozen=True)
class Witness:
    """Everything needed to re-trigger a failed check, self-contained."""

    kind: str  # soundness | cost | structural | dp-exact | dp-mc
    trial_index: int
    mechanism: str
    noise: str
    orientation: str  # forward | reverse
    workload: dict
    tape: dict | None
    expected: tuple | None
    got: tuple | None
    detail: str
    mutation: str | None = None
    mutation_value: float = 2.0


@dataclass
class PrivacyReport:
    verdict: str  # pass | fail
    suite: str
    mechanism: str
    trials: int
    checks_run: int = 0
    max_cost: float | None = None
    max_log_ratio: float | None = None
    truncation_loss: float | None = None
    witness: Witness | None = None
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "suite": self.suite,
            "mechanism": self.mechanism,
            "trials": self.trials,
            "checks_run": self.checks_run,
            "max_cost": self.max_cost,
            "max_log_ratio": self.max_log_ratio,
            "truncation_loss": self.truncation_loss,
            "witness": None,
            "notes": self.notes,
        }
        if self.witness is not None:
            wd = dict(self.witness.__dict__)
            wd["expected"] = _jsonable(self.witness.expected)
            wd["got"] = _jsonable(self.witness.got)
            d["witness"] = wd
        return d


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def _serialize_workload(w: Workload) -> dict:
    return {
        "pairs": [[p.value_d, p.value_dprime] for p in w.pairs],
        "threshold": w.threshold,
        "k": w.k,
        "epsilon": w.epsilon,
        "sigma": w.sigma,
    }


def _deserialize_workload(d: dict) -> Workload:
    return Workload.from_values(d["pairs"], d["threshold"], d["k"], d["epsilon"], d.get("sigma"))


def _serialize_tape(tape: NoiseTape) -> dict:
    per = [list(e) for e in tape.per_query] if tape.layout is TapeLayout.PAIRED else list(tape.per_query)
    return {"threshold": tape.threshold_noise, "per_query": per, "layout": tape.layout.value}


def _deserialize_tape(d: dict) -> NoiseTape:
    layout = TapeLayout(d["layout"])
    per = tuple(tuple(e) for e in d["per_query"]) if layout is TapeLayout.PAIRED else tuple(d["per_query"])
    return NoiseTape(d["threshold"], per, layout)


def outputs_equal(a: OutputSequence, b: OutputSequence, exact: bool, gap_tol: float = GAP_TOL) -> bool:
    if len(a) != len(b):
        return False
    if exact:
        return a.answers == b.answers
    for x, y in zip(a, b):
        if x.top != y.top or x.branch != y.branch:
            return False
        if x.gap is None or y.gap is None:
            if x.gap is not y.gap:
                return False
        elif abs(x.gap - y.gap) > gap_tol:
            return False
    return True


def _align_for(mechanism: str):
    return align_adaptive if mechanism == ADAPTIVE_GAP else align_svt_gap


@lru_cache(maxsize=1024)
def _budget_and_spec(mechanism: str, epsilon: float, k: int, kind: NoiseKind):
    if mechanism == ADAPTIVE_GAP:
        budget = budget_split_adaptive(epsilon, k)
    else:
        budget = budget_split_svt(epsilon, k)
    return budget, budget.noise_spec(kind)


def _trial_setup(plan: TrialPlan, idx: int):
    rng = trial_rng(plan.master_seed, idx)
    w, kind = generate_workload(plan, rng)
    budget, spec = _budget_and_spec(plan.mechanism, w.epsilon, w.k, kind)
    tape = draw_tape(spec, tape_layout_for(plan.mechanism), len(w), rng)
    return rng, w, kind, budget, spec, tape


# ---------------------------------------------------------------------------
# Randomized suites

TRIAL_SUITES = ("align", "cost", "structural")


def run_trial_suites(plan: TrialPlan, suites=TRIAL_SUITES) -> dict:
    """Drive any subset of the randomized suites over one shared trial
    stream, so a combined run pays for workload/tape generation once.

    Returns a dict suite name -> PrivacyReport.  The same trial indices
    produce the same workloads and tapes regardless of which suites are
    requested, so single-suite runs see exactly the trials a combined run
    does."""
    unknown = [s for s in suites if s not in TRIAL_SUITES]
    if unknown:
        raise DomainError(f"unknown trial suite {unknown[0]!r}")
    reports = {s: PrivacyReport("pass", s, plan.mechanism, plan.trials) for s in suites}
    if "cost" in reports:
        reports["cost"].max_cost = 0.0
    if "structural" in reports:
        reports["structural"].notes["not_checked"] = (
            "distributional regularity of the noise density is assumed, not executable here"
        )
    align = _align_for(plan.mechanism)
    layout = tape_layout_for(plan.mechanism)
    for idx in range(plan.trials):
        rng, w, kind, budget, spec, tape = _trial_setup(plan, idx)
        exact = kind is NoiseKind.DLAP
        active = [s for s in suites if reports[s].verdict == "pass" or not plan.stop_on_failure]
        if not active:
            break
        if "align" in active or "cost" in active:
            weights = None
            if "cost" in active:
                weights = (
                    CostWeights.for_adaptive(budget)
                    if plan.mechanism == ADAPTIVE_GAP
                    else CostWeights.for_svt(budget)
                )
            for orientation, ww in (("forward", w), ("reverse", w.swapped())):
                result = run_mechanism(plan.mechanism, ww, tape, Side.D, budget)
                omega = result.output
                aligned = align(tape, omega, ww, plan.mutation, plan.mutation_value)
                if "align" in active:
                    again = run_mechanism(plan.mechanism, ww, aligned, Side.DPRIME, budget).output
                    report = reports["align"]
                    report.checks_run += 1
                    if not outputs_equal(omega, again, exact):
                        _record_failure(
                            report,
                            plan,
                            kind="soundness",
                            trial_index=idx,
                            orientation=orientation,
                            workload=ww,
                            tape=tape,
                            expected=omega.canonical(),
                            got=again.canonical(),
                            detail="re-run on the adjacent side with the aligned tape changed the output",
                        )
                if "cost" in active:
                    report = reports["cost"]
                    cost = alignment_cost(tape, aligned, weights)
                    closed = cost_closed_form(index_sets(omega), ww.deltas(), weights)
                    report.max_cost = max(report.max_cost, cost)
                    report.checks_run += 1
                    failure = None
                    if cost > ww.epsilon + COST_TOL:
                        failure = f"alignment cost {cost} exceeds epsilon {ww.epsilon}"
                    elif exact and closed != cost:
                        failure = f"closed-form cost {closed} != generic cost {cost} on an integer workload"
                    elif not exact and abs(closed - cost) > COST_TOL:
                        failure = f"closed-form cost {closed} deviates from generic cost {cost}"
                    elif plan.mechanism == ADAPTIVE_GAP:
                        failure = _verify_ledger(ww, budget, omega, result.ledger)
                    if failure is not None:
                        _record_failure(
                            report,
                            plan,
                            kind="cost",
                            trial_index=idx,
                            orientation=orientation,
                            workload=ww,
                            tape=tape,
                            expected=None,
                            got=omega.canonical(),
                            detail=failure,
                        )
        if "structural" in active:
            _structural_trial(reports["structural"], plan, idx, rng, w, kind, budget, spec, tape, layout)
    return reports


def _record_failure(report, plan, *, kind, trial_index, orientation, workload, tape, expected, got, detail):
    report.verdict = "fail"
    if report.witness is None:
        report.witness = Witness(
            kind=kind,
            trial_index=trial_index,
            mechanism=plan.mechanism,
            noise="dlap" if isinstance(tape.threshold_noise, int) else "laplace",
            orientation=orientation,
            workload=_serialize_workload(workload),
            tape=_serialize_tape(tape),
            expected=expected,
            got=got,
            detail=detail,
            mutation=plan.mutation.value if plan.mutation else None,
            mutation_value=plan.mutation_value,
        )


def check_alignment_soundness(plan: TrialPlan) -> PrivacyReport:
    """For sampled (workload, tape): the run on one side, rewritten through
    the alignment, must reproduce the identical output on the other side.
    Exact equality on integer workloads, per-gap tolerance on real ones.
    Both directions are exercised."""
    return run_trial_suites(plan, ("align",))["align"]


def _verify_ledger(w: Workload, budget: AdaptiveBudget, omega: OutputSequence, ledger) -> str | None:
    """Exact rational re-derivation of the adaptive ledger from the output.

    Returns None when consistent, else a description of the first defect.
    """
    if ledger.initial != budget.epsilon0:
        return f"ledger starts at {ledger.initial}, expected epsilon0 {budget.epsilon0}"
    running = budget.epsilon0
    step = 0
    for i, a in enumerate(omega):
        if running > budget.guard_limit:
            return f"query {i} was processed with running cost {running} above the guard limit"
        if not a.top:
            continue
        expected_inc = 2 * (budget.epsilon1 if a.branch.value == "first" else budget.epsilon2)
        if step >= len(ledger.events):
            return f"missing ledger event for positive answer at query {i}"
        ev = ledger.events[step]
        if ev.index != i or ev.increment != expected_inc:
            return f"ledger event {step} is ({ev.index}, {ev.increment}), expected ({i}, {expected_inc})"
        running += expected_inc
        step += 1
        if ledger.cost_at(step) != running:
            return f"ledger prefix cost after {step} events diverges"
    if step != len(ledger.events):
        return "ledger has more events than positive answers"
    if ledger.running_cost != running:
        return "final ledger cost does not match the per-event sum"
    sets = index_sets(omega)
    formula = budget.epsilon0 + 2 * budget.epsilon1 * len(sets.top_first) + 2 * budget.epsilon2 * len(sets.top_second)
    if ledger.running_cost != formula:
        return "final ledger cost does not match the index-set formula"
    if ledger.running_cost > budget.epsilon:
        return f"final cost {ledger.running_cost} exceeds epsilon {budget.epsilon}"
    return None


def check_cost_bound(plan: TrialPlan) -> PrivacyReport:
    """Over the same trial stream: the weighted L1 size of every alignment
    stays within epsilon, the structural closed form agrees with the generic
    computation, and the adaptive ledger is exactly consistent."""
    return run_trial_suites(plan, ("cost",))["cost"]


def _structural_trial(report, plan, idx, rng, w, kind, budget, spec, tape, layout):
    result = run_mechanism(plan.mechanism, w, tape, Side.D, budget)
    omega = result.output
    failure = None
    expected_draws = 1 + (2 * len(omega) if layout is TapeLayout.PAIRED else len(omega))
    if len(omega) > len(w):
        failure = f"output length {len(omega)} exceeds query count {len(w)}"
    elif result.consumed != expected_draws:
        failure = f"consumed {result.consumed} draws, expected {expected_draws}"
    elif any(a.top and a.gap is not None and a.gap < 0 for a in omega):
        failure = "negative gap released"
    elif plan.mechanism == ADAPTIVE_GAP and any(
        a.top and a.branch.value == "first" and a.gap < w.sigma for a in omega
    ):
        failure = "first-branch gap below sigma"
    elif plan.mechanism != ADAPTIVE_GAP and omega.top_count() > w.k:
        failure = f"{omega.top_count()} positive answers with k={w.k}"
    if failure is None:
        # countability witness: same index sets on a fresh tape => same shift
        shift = shift_for_output(omega, w.deltas(), layout)
        tape2 = draw_tape(spec, layout, len(w), rng)
        omega2 = run_mechanism(plan.mechanism, w, tape2, Side.D, budget).output
        report.checks_run += 1
        if index_sets(omega2) == index_sets(omega):
            shift2 = shift_for_output(omega2, w.deltas(), layout)
            if shift2.flat() != shift.flat():
                failure = "equal index sets produced different shift vectors"
    if failure is None and layout is TapeLayout.SINGLE:
        gap_out = svt_gap_run(w, tape, Side.D)
        classic_out = svt_classic_run(w, tape, Side.D)
        report.checks_run += 1
        if gap_out.erase_gaps() != classic_out:
            failure = "gap run with gaps erased differs from the classic run"
    report.checks_run += 1
    if failure is not None:
        _record_failure(
            report,
            plan,
            kind="structural",
            trial_index=idx,
            orientation="forward",
            workload=w,
            tape=tape,
            expected=None,
            got=omega.canonical(),
            detail=failure,
        )


def check_structural_conditions(plan: TrialPlan) -> PrivacyReport:
    """Executable side conditions: runs terminate within the query count and
    consume exactly one draw plus one (or one pair) per emitted answer; the
    shift vector is a function of the index sets and deltas alone; and the
    gap variant erased equals the classic variant on every shared tape."""
    return run_trial_suites(plan, ("structural",))["structural"]


def replay_witness(witness: Witness) -> bool:
    """Re-run a recorded failure from its serialized inputs alone.

    Returns True when the violation reproduces."""
    w = _deserialize_workload(witness.workload)
    tape = _deserialize_tape(witness.tape)
    budget = default_budget(witness.mechanism, w)
    mutation = Mutation(witness.mutation) if witness.mutation else None
    align = _align_for(witness.mechanism)
    result = run_mechanism(witness.mechanism, w, tape, Side.D, budget)
    omega = result.output
    exact = witness.noise == NoiseKind.DLAP.value
    if witness.kind == "soundness":
        aligned = align(tape, omega, w, mutation, witness.mutation_value)
        again = run_mechanism(witness.mechanism, w, aligned, Side.DPRIME, budget).output
        return not outputs_equal(omega, again, exact)
    if witness.kind == "cost":
        aligned = align(tape, omega, w, mutation, witness.mutation_value)
        weights = (
            CostWeights.for_adaptive(budget)
            if witness.mechanism == ADAPTIVE_GAP
            else CostWeights.for_svt(budget)
        )
        cost = alignment_cost(tape, aligned, weights)
        closed = cost_closed_form(index_sets(omega), w.deltas(), weights)
        if cost > w.epsilon + COST_TOL:
            return True
        if exact and closed != cost:
            return True
        if not exact and abs(closed - cost) > COST_TOL:
            return True
        if witness.mechanism == ADAPTIVE_GAP:
            return _verify_ledger(w, budget, omega, result.ledger) is not None
        return False
    raise DomainError(f"cannot replay witness kind {witness.kind!r}")


# ---------------------------------------------------------------------------
# Exact enumeration oracle


@dataclass
class OutputDistribution:
    """Probability mass per canonical output, plus unassigned tail mass."""

    mechanism: str
    side: str
    masses: dict
    truncation_loss: float
    meta: dict = field(default_factory=dict)

    def total_mass(self) -> float:
        return float(sum(self.masses.values()))

    def normalization_defect(self) -> float:
        return abs(self.total_mass() + self.truncation_loss - 1.0)


def _require_integer_workload(w: Workload) -> None:
    if not w.is_integer_valued():
        raise DomainError("exact enumeration needs integer query values and threshold")
    if w.sigma is not None and not float(w.sigma).is_integer():
        raise DomainError("exact enumeration needs an integer sigma")


@dataclass(frozen=True)
class _Axis:
    role: str
    scale: float
    bound: int
    values: np.ndarray
    pmf: np.ndarray
    tail: float


def _make_axis(role: str, scale: float, box: int | None, per_draw_tail: float) -> _Axis:
    bound = box if box is not None else discrete_laplace_box(scale, per_draw_tail)
    values = np.arange(-bound, bound + 1, dtype=np.int64)
    alpha = math.exp(-1.0 / scale)
    pmf = (1.0 - alpha) / (1.0 + alpha) * alpha ** np.abs(values)
    return _Axis(role, scale, bound, values, pmf, discrete_laplace_tail(bound, scale))


def _enum_axes(mechanism: str, w: Workload, spec: NoiseSpec, box: int | None, per_draw_tail: float):
    """Axes in tape-consumption order: threshold, then per-query roles."""
    n = len(w)
    if mechanism == ADAPTIVE_GAP:
        th = _make_axis("threshold", spec.scales["threshold"], box, per_draw_tail)
        f = _make_axis("query_first", spec.scales["query_first"], box, per_draw_tail)
        s = _make_axis("query_second", spec.scales["query_second"], box, per_draw_tail)
        return [th] + [f, s] * n
    th = _make_axis("threshold", spec.scales["threshold"], box, per_draw_tail)
    q = _make_axis("query", spec.scales["query"], box, per_draw_tail)
    return [th] + [q] * n


def _pack_rows(codes: np.ndarray, bits: int) -> np.ndarray:
    packed = codes[:, 0].astype(np.int64)
    for j in range(1, codes.shape[1]):
        packed = (packed << bits) | codes[:, j]
    return packed


def _unpack_row(packed: int, bits: int, n: int) -> tuple:
    mask = (1 << bits) - 1
    out = [0] * n
    for j in range(n - 1, -1, -1):
        out[j] = packed & mask
        packed >>= bits
    return tuple(out)


def enumerate_output_dist(
    mechanism: str,
    w: Workload,
    side: Side = Side.D,
    budget=None,
    box: int | None = None,
    per_draw_tail: float = 1e-12,
    grid_budget: int = 10**8,
    max_chunk: int = 1 << 20,
    method: str = "batch",
) -> OutputDistribution:
    """Exact output distribution under integer Laplace noise.

    Every tape in the per-role integer box is weighted by its product pmf
    and fed through the mechanism; masses accumulate per canonical output.
    ``method='per-tape'`` runs the per-tape mechanism on every grid point
    (small boxes only); the default batch path uses the array kernels, whose
    agreement with the per-tape runs is itself under test.
    """
    check_workload(w)
    _require_integer_workload(w)
    if mechanism not in MECHANISMS:
        raise DomainError(f"unknown mechanism {mechanism!r}")
    if budget is None:
        budget = default_budget(mechanism, w)
    spec = budget.noise_spec(NoiseKind.DLAP)
    axes = _enum_axes(mechanism, w, spec, box, per_draw_tail)
    sizes = [len(ax.values) for ax in axes]
    total = 1
    for s in sizes:
        total *= s
    if total > grid_budget:
        raise GridBudgetExceeded(
            total,
            grid_budget,
            hint="fewer queries, larger epsilon, or a larger --grid-budget shrink the grid",
        )
    inbox = 1.0
    for ax in axes:
        inbox *= 1.0 - ax.tail
    truncation_loss = 1.0 - inbox

    if method == "per-tape":
        if total > 2_000_000:
            raise GridBudgetExceeded(total, 2_000_000, hint="per-tape method is for small boxes")
        masses = _enumerate_per_tape(mechanism, w, side, budget, axes)
    elif method == "batch":
        masses = _enumerate_batch(mechanism, w, side, budget, axes, sizes, max_chunk)
    else:
        raise DomainError(f"unknown enumeration method {method!r}")

    return OutputDistribution(
        mechanism,
        side.value,
        masses,
        truncation_loss,
        meta={
            "grid_points": total,
            "bounds": [ax.bound for ax in axes],
            "per_draw_tail": per_draw_tail,
            "method": method,
        },
    )


def _enumerate_per_tape(mechanism, w, side, budget, axes) -> dict:
    n = len(w)
    layout = tape_layout_for(mechanism)
    masses: dict = {}
    value_lists = [ax.values.tolist() for ax in axes]
    pmf_lists = [ax.pmf.tolist() for ax in axes]
    for combo in itertools.product(*(range(len(v)) for v in value_lists)):
        weight = 1.0
        for ax_i, ci in enumerate(combo):
            weight *= pmf_lists[ax_i][ci]
        coords = [value_lists[ax_i][ci] for ax_i, ci in enumerate(combo)]
        if layout is TapeLayout.SINGLE:
            tape = NoiseTape(coords[0], tuple(coords[1:]), layout)
        else:
            per = tuple((coords[1 + 2 * i], coords[2 + 2 * i]) for i in range(n))
            tape = NoiseTape(coords[0], per, layout)
        omega = run_mechanism(mechanism, w, tape, side, budget).output
        key = omega.canonical()
        masses[key] = masses.get(key, 0.0) + weight
    return masses


def _enumerate_batch(mechanism, w, side, budget, axes, sizes, max_chunk) -> dict:
    n = len(w)
    m = len(axes)
    # choose the suffix of axes evaluated as one flat block
    suffix_start = m
    block = 1
    while suffix_start > 0 and block * sizes[suffix_start - 1] <= max_chunk:
        block *= sizes[suffix_start - 1]
        suffix_start -= 1
    suffix_axes = axes[suffix_start:]
    if suffix_axes:
        grids = np.meshgrid(*(ax.values for ax in suffix_axes), indexing="ij")
        suffix_cols = [g.ravel() for g in grids]
        wgrids = np.meshgrid(*(ax.pmf for ax in suffix_axes), indexing="ij")
        suffix_weight = np.ones(block)
        for g in wgrids:
            suffix_weight = suffix_weight * g.ravel()
    else:
        suffix_cols = []
        suffix_weight = np.ones(1)
        block = 1

    # conservative per-position code bound fixes the packing width globally
    max_gap = 0
    vals = w.values(side)
    for i in range(n):
        q_axes = [axes[1 + 2 * i], axes[2 + 2 * i]] if mechanism == ADAPTIVE_GAP else [axes[1 + i]]
        reach = max(ax.bound for ax in q_axes)
        max_gap = max(max_gap, int(vals[i]) + reach + axes[0].bound - int(w.threshold))
    bits = max(3, (3 + 4 * max(0, max_gap)).bit_length())
    if n * bits > 62:
        raise DomainError("packed output encoding exceeds 62 bits; reduce the query count")

    acc: dict = {}
    prefix_sizes = sizes[:suffix_start]
    for combo in np.ndindex(*prefix_sizes):
        pw = 1.0
        for ax_i, ci in enumerate(combo):
            pw *= float(axes[ax_i].pmf[ci])
        cols = []
        for ax_i in range(m):
            if ax_i < suffix_start:
                cols.append(np.full(block, axes[ax_i].values[combo[ax_i]], dtype=np.int64))
            else:
                cols.append(suffix_cols[ax_i - suffix_start])
        eta0 = cols[0]
        if mechanism == ADAPTIVE_GAP:
            xis = np.column_stack([cols[1 + 2 * i] for i in range(n)])
            etas = np.column_stack([cols[2 + 2 * i] for i in range(n)])
            status, gaps = run_status_gaps(mechanism, w, side, budget, eta0, (xis, etas))
        else:
            etaq = np.column_stack(cols[1:])
            status, gaps = run_status_gaps(mechanism, w, side, budget, eta0, etaq)
        codes = encode_int_rows(mechanism, status, gaps)
        packed = _pack_rows(codes, bits)
        uniq, inverse = np.unique(packed, return_inverse=True)
        sums = np.bincount(inverse, weights=suffix_weight * pw)
        for u, mass in zip(uniq.tolist(), sums.tolist()):
            acc[u] = acc.get(u, 0.0) + mass
    return {decode_row(mechanism, _unpack_row(u, bits, n)): mass for u, mass in acc.items()}


# ---------------------------------------------------------------------------
# Monte Carlo estimation


def _draw_block(rng, kind: NoiseKind, scale: float, rows: int, cols: int) -> np.ndarray:
    if kind is NoiseKind.LAPLACE:
        u = rng.integers(1, 1 << 53, size=(rows, cols)).astype(np.float64) / float(1 << 53)
        return np.where(u < 0.5, scale * np.log(2.0 * u), -scale * np.log(2.0 * (1.0 - u)))
    alpha = math.exp(-1.0 / scale)
    p = 1.0 - alpha
    return rng.geometric(p, size=(rows, cols)) - rng.geometric(p, size=(rows, cols))


def mc_output_dist(
    mechanism: str,
    w: Workload,
    side: Side,
    samples: int,
    seed,
    kind: NoiseKind = NoiseKind.DLAP,
    scale_epsilon_factor: float = 1.0,
    chunk: int = 1 << 20,
    gap_ndigits: int = 9,
) -> OutputDistribution:
    """Empirical output distribution from vectorized sampling.

    ``scale_epsilon_factor`` is a self-test hook: it rescales the noise as
    if the budget were ``factor * epsilon`` while everything else (including
    the adaptive guard) still believes in ``epsilon``, which breaks the
    privacy guarantee on purpose so detectors can be validated.
    """
    check_workload(w)
    budget = default_budget(mechanism, w)
    if scale_epsilon_factor != 1.0:
        # self-test path: scales as if the budget were factor * epsilon,
        # while the guard (and any epsilon-based verdict) still uses epsilon
        scaled = Workload(w.pairs, w.threshold, w.k, w.epsilon * scale_epsilon_factor, w.sigma)
        spec = default_budget(mechanism, scaled).noise_spec(kind)
    else:
        spec = budget.noise_spec(kind)
    rng = np.random.default_rng(seed)
    n = len(w)
    int_outputs = kind is NoiseKind.DLAP and w.is_integer_valued()
    counts: Counter = Counter()
    done = 0
    while done < samples:
        rows = min(chunk, samples - done)
        eta0 = _draw_block(rng, kind, spec.scales["threshold"], rows, 1)[:, 0]
        if mechanism == ADAPTIVE_GAP:
            xis = _draw_block(rng, kind, spec.scales["query_first"], rows, n)
            etas = _draw_block(rng, kind, spec.scales["query_second"], rows, n)
            status, gaps = run_status_gaps(mechanism, w, side, budget, eta0, (xis, etas))
        else:
            etaq = _draw_block(rng, kind, spec.scales["query"], rows, n)
            status, gaps = run_status_gaps(mechanism, w, side, budget, eta0, etaq)
        if int_outputs:
            codes = encode_int_rows(mechanism, status, gaps)
            uniq, inverse = np.unique(codes, axis=0, return_inverse=True)
            tallies = np.bincount(inverse)
            for row, c in zip(uniq, tallies.tolist()):
                counts[decode_row(mechanism, row)] += c
        else:
            for key in canonical_rows(mechanism, status, gaps, gap_ndigits):
                counts[key] += 1
        done += rows
    masses = {k: c / samples for k, c in counts.items()}
    return OutputDistribution(
        mechanism,
        side.value,
        masses,
        truncation_loss=0.0,
        meta={"samples": samples, "counts": dict(counts), "noise": kind.value},
    )


def tv_distance(a: OutputDistribution, b: OutputDistribution) -> float:
    """Total variation over the union of outputs, with unassigned (tail)
    mass treated as one extra bucket."""
    keys = set(a.masses) | set(b.masses)
    s = sum(abs(a.masses.get(k, 0.0) - b.masses.get(k, 0.0)) for k in keys)
    s += abs(a.truncation_loss - b.truncation_loss)
    return 0.5 * s


# ---------------------------------------------------------------------------
# Privacy-loss evaluation


@dataclass(frozen=True)
class PrivacyLossResult:
    """Likelihood-ratio maxima between two output distributions.

    padded_max pads both masses by the truncation bound tau (the reported
    headline number); raw_max uses no padding and only outputs present on
    both sides; certified_max pads only the denominator, which is a sound
    upper-bound certificate: if the mechanism really is eps-DP then
    certified_max <= eps up to float error, truncation notwithstanding.
    one_sided lists outputs whose mass exceeds tau on one side while absent
    on the other; any such output is verdict material.
    """

    padded_max: float
    raw_max: float
    certified_max: float
    tau: float
    one_sided: tuple

    def material_one_sided(self) -> bool:
        return len(self.one_sided) > 0


def max_privacy_loss(p: OutputDistribution, q: OutputDistribution) -> PrivacyLossResult:
    if p.mechanism != q.mechanism:
        raise DomainMismatch(f"distributions from {p.mechanism!r} vs {q.mechanism!r}")
    tau = max(p.truncation_loss, q.truncation_loss)
    padded_max = 0.0
    raw_max = 0.0
    certified_max = 0.0
    one_sided = []
    for key in set(p.masses) | set(q.masses):
        pm = p.masses.get(key, 0.0)
        qm = q.masses.get(key, 0.0)
        if pm + qm <= 0.0:
            continue
        if tau > 0.0:
            padded = abs(math.log((pm + tau) / (qm + tau)))
        elif pm > 0.0 and qm > 0.0:
            padded = abs(math.log(pm / qm))
        else:
            padded = math.inf
        padded_max = max(padded_max, padded)
        if pm > 0.0 and qm > 0.0:
            raw_max = max(raw_max, abs(math.log(pm / qm)))
        if pm > 0.0:
            certified_max = max(certified_max, math.log(pm / (qm + tau)) if qm + tau > 0 else math.inf)
        if qm > 0.0:
            certified_max = max(certified_max, math.log(qm / (pm + tau)) if pm + tau > 0 else math.inf)
        if (pm == 0.0 and qm > tau) or (qm == 0.0 and pm > tau):
            one_sided.append((key, "d" if pm > 0 else "dprime", max(pm, qm)))
    certified_max = max(certified_max, 0.0)
    return PrivacyLossResult(padded_max, raw_max, certified_max, tau, tuple(one_sided))


def check_dp_exact(
    mechanism: str,
    w: Workload,
    grid_budget: int = 10**8,
    per_draw_tail: float = 1e-12,
    padded_slack: float = 1e-4,
) -> tuple[PrivacyReport, PrivacyLossResult]:
    """Enumerate both sides of an integer workload and compare the maximum
    log likelihood ratio against epsilon."""
    p = enumerate_output_dist(mechanism, w, Side.D, grid_budget=grid_budget, per_draw_tail=per_draw_tail)
    q = enumerate_output_dist(mechanism, w, Side.DPRIME, grid_budget=grid_budget, per_draw_tail=per_draw_tail)
    loss = max_privacy_loss(p, q)
    ok = (
        loss.certified_max <= w.epsilon + 1e-9
        and loss.padded_max <= w.epsilon + padded_slack
        and not loss.material_one_sided()
    )
    report = PrivacyReport(
        "pass" if ok else "fail",
        "dp-exact",
        mechanism,
        trials=1,
        checks_run=len(set(p.masses) | set(q.masses)),
        max_log_ratio=loss.padded_max,
        truncation_loss=p.truncation_loss + q.truncation_loss,
        notes={
            "epsilon": w.epsilon,
            "certified_max": loss.certified_max,
            "raw_max": loss.raw_max,
            "tau": loss.tau,
            "grid_points": p.meta["grid_points"],
            "workload": _serialize_workload(w),
        },
    )
    if not ok:
        report.witness = Witness(
            kind="dp-exact",
            trial_index=0,
            mechanism=mechanism,
            noise=NoiseKind.DLAP.value,
            orientation="forward",
            workload=_serialize_workload(w),
            tape=None,
            expected=None,
            got=None,
            detail=(
                f"max log ratio padded={loss.padded_max} certified={loss.certified_max} "
                f"vs epsilon={w.epsilon}; one_sided={list(loss.one_sided)[:3]}"
            ),
        )
    return report, loss


def _wilson_bounds(count: int, n: int, z: float) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    phat = count / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def mc_privacy_estimate(
    mechanism: str,
    w: Workload,
    samples: int,
    seed,
    kind: NoiseKind = NoiseKind.DLAP,
    z: float = 6.0,
    scale_epsilon_factor: float = 1.0,
) -> PrivacyReport:
    """Sampling-based falsifier: flags outputs whose empirical likelihood
    ratio exceeds epsilon beyond a Wilson-interval margin.

    A clean report is evidence, not a proof; the harness exists to catch
    broken mechanisms, and is validated by the scale_epsilon_factor
    self-test which must produce flags.
    """
    if samples < 10**4:
        raise DomainError("mc_privacy_estimate needs at least 1e4 samples per side")
    p = mc_output_dist(mechanism, w, Side.D, samples, (seed, 0), kind, scale_epsilon_factor)
    q = mc_output_dist(mechanism, w, Side.DPRIME, samples, (seed, 1), kind, scale_epsilon_factor)
    eps = w.epsilon
    flagged = []
    max_ratio = 0.0
    for key in set(p.masses) | set(q.masses):
        cp = p.meta["counts"].get(key, 0)
        cq = q.meta["counts"].get(key, 0)
        if cp > 0 and cq > 0:
            max_ratio = max(max_ratio, abs(math.log((cp / samples) / (cq / samples))))
        lp, up = _wilson_bounds(cp, samples, z)
        lq, uq = _wilson_bounds(cq, samples, z)
        if lp > 0 and uq > 0 and math.log(lp / uq) > eps:
            flagged.append((key, cp, cq))
        elif lq > 0 and up > 0 and math.log(lq / up) > eps:
            flagged.append((key, cp, cq))
    report = PrivacyReport(
        "pass" if not flagged else "fail",
        "dp-mc",
        mechanism,
        trials=samples,
        checks_run=len(set(p.masses) | set(q.masses)),
        max_log_ratio=max_ratio,
        truncation_loss=0.0,
        notes={
            "method": "monte-carlo falsification heuristic; a clean run is not a proof",
            "z": z,
            "noise": kind.value,
            "flagged": [[_jsonable(k), cp, cq] for k, cp, cq in flagged[:10]],
            "epsilon": eps,
        },
    )
    if flagged:
        key, cp, cq = flagged[0]
        report.witness = Witness(
            kind="dp-mc",
            trial_index=0,
            mechanism=mechanism,
            noise=kind.value,
            orientation="forward",
            workload=_serialize_workload(w),
            tape=None,
            expected=None,
            got=key,
            detail=f"output {key!r} seen {cp} vs {cq} times in {samples} samples/side exceeds e^eps",
        )
    return report


# ---------------------------------------------------------------------------
# Curated integer instances for the exact oracle


def default_enumeration_instances(mechanism: str) -> list[Workload]:
    """Small integer workloads whose full output distribution fits the
    default grid budget at the default tail tolerance."""
    if mechanism == SVT_GAP:
        return [
            Workload.from_values([(1, 0)], 0, 1, 1.0),
            Workload.from_values([(2, 3)], 2, 1, 1.0),
            Workload.from_values([(5, 4)], 5, 1, 2.0),
            Workload.from_values([(1, 0), (0, 1)], 0, 1, 1.0),
            Workload.from_values([(3, 2), (4, 3)], 3, 1, 1.0),
            Workload.from_values([(0, 1), (1, 0)], 0, 2, 1.0),
            Workload.from_values([(1, 0), (2, 1)], 1, 2, 2.0),
            Workload.from_values([(1, 0), (0, 0)], 0, 1, 0.5),
            Workload.from_values([(2, 1), (2, 3)], 2, 2, 2.0),
        ]
    if mechanism == SVT_CLASSIC:
        return [
            Workload.from_values([(1, 0)], 0, 1, 1.0),
            Workload.from_values([(0, 1), (1, 0)], 0, 1, 1.0),
            Workload.from_values([(2, 1), (1, 2)], 1, 2, 1.0),
            Workload.from_values([(1, 1), (0, 1)], 1, 1, 2.0),
            Workload.from_values([(4, 3), (3, 4)], 3, 1, 0.5),
        ]
    if mechanism == ADAPTIVE_GAP:
        return [
            Workload.from_values([(6, 5)], 4, 1, 1.0, sigma=2),
            Workload.from_values([(5, 4)], 4, 1, 1.0, sigma=2),
            Workload.from_values([(4, 5)], 4, 1, 2.0, sigma=1),
            Workload.from_values([(0, 1)], 0, 1, 1.0, sigma=3),
            Workload.from_values([(1, 0)], 0, 1, 2.0, sigma=0),
            Workload.from_values([(1, 0), (0, 1)], 0, 1, 8.0, sigma=1),
            Workload.from_values([(2, 1), (1, 1)], 1, 2, 16.0, sigma=2),
            Workload.from_values([(3, 2), (2, 3)], 2, 1, 8.0, sigma=1),
        ]
    raise DomainError(f"unknown mechanism {mechanism!r}")
