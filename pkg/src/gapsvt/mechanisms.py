"""Tape-consuming runs of the three mechanisms, plus budget arithmetic.

Budgets are kept as exact rationals so the defining identities
(eps0 + 2k*eps1 = eps for the plain split, eps0 + 2k*eps2 = eps for the
adaptive one) and the adaptive cost ledger hold exactly, not just to float
tolerance.  Noise scales are converted to floats only at sampling time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np

from .core import (
    BOT,
    Branch,
    NoiseKind,
    NoiseSpec,
    NoiseTape,
    OutputSequence,
    Side,
    TapeLayout,
    Workload,
    check_workload,
    draw_tape,
    top_gap,
    top_marker,
)
from .errors import BudgetInvariantViolation, GapSvtError, NonPositiveBudget

SVT_CLASSIC = "svt"
SVT_GAP = "svt-gap"
ADAPTIVE_GAP = "adaptive-gap"
MECHANISMS = (SVT_CLASSIC, SVT_GAP, ADAPTIVE_GAP)

Rational = Union[int, float, Fraction]


def _fraction(x: Rational, name: str) -> Fraction:
    f = Fraction(x)
    if f <= 0:
        raise NonPositiveBudget(f"{name} must be positive, got {x}")
    return f


def tape_layout_for(mechanism: str) -> TapeLayout:
    if mechanism not in MECHANISMS:
        raise GapSvtError(f"unknown mechanism {mechanism!r}, expected one of {MECHANISMS}")
    return TapeLayout.PAIRED if mechanism == ADAPTIVE_GAP else TapeLayout.SINGLE


@dataclass(frozen=True)
class SvtBudget:
    """Threshold/query budget split for the plain SVT variants."""

    epsilon0: Fraction
    epsilon1: Fraction
    epsilon: Fraction
    k: int

    def __post_init__(self):
        for name in ("epsilon0", "epsilon1", "epsilon"):
            if getattr(self, name) <= 0:
                raise NonPositiveBudget(f"{name} must be positive")
        if self.k < 1:
            raise NonPositiveBudget(f"k must be >= 1, got {self.k}")

    def identity_holds(self) -> bool:
        return self.epsilon0 + 2 * self.k * self.epsilon1 == self.epsilon

    def noise_spec(self, kind: NoiseKind = NoiseKind.LAPLACE) -> NoiseSpec:
        return NoiseSpec(
            kind,
            {"threshold": float(1 / self.epsilon0), "query": float(1 / self.epsilon1)},
        )


@dataclass(frozen=True)
class AdaptiveBudget:
    """Budget pieces for the adaptive mechanism.

    epsilon1 <= epsilon2 is required: the per-query worst case is then
    2*epsilon2, so a run that stops once the remaining headroom drops below
    2*epsilon2 can never overshoot epsilon.
    """

    epsilon0: Fraction
    epsilon1: Fraction
    epsilon2: Fraction
    epsilon: Fraction

    def __post_init__(self):
        for name in ("epsilon0", "epsilon1", "epsilon2", "epsilon"):
            if getattr(self, name) <= 0:
                raise NonPositiveBudget(f"{name} must be positive")
        if not self.epsilon1 <= self.epsilon2:
            raise NonPositiveBudget("epsilon1 must not exceed epsilon2")
        if not self.epsilon0 + 2 * self.epsilon2 <= self.epsilon:
            raise NonPositiveBudget(
                "epsilon0 + 2*epsilon2 must not exceed epsilon (no query could be processed)"
            )

    @property
    def guard_limit(self) -> Fraction:
        """Largest running cost that still leaves room for a worst-case query."""
        return self.epsilon - 2 * self.epsilon2

    def noise_spec(self, kind: NoiseKind = NoiseKind.LAPLACE) -> NoiseSpec:
        return NoiseSpec(
            kind,
            {
                "threshold": float(1 / self.epsilon0),
                "query_first": float(1 / self.epsilon1),
                "query_second": float(1 / self.epsilon2),
            },
        )


@lru_cache(maxsize=4096)
def budget_split_svt(epsilon: Rational, k: int) -> SvtBudget:
    """The standard split: half the budget on the threshold, the rest spread
    over the k possible positive answers (eps0 = eps/2, eps1 = eps/(4k))."""
    eps = _fraction(epsilon, "epsilon")
    if k < 1:
        raise NonPositiveBudget(f"k must be >= 1, got {k}")
    return SvtBudget(epsilon0=eps / 2, epsilon1=eps / (4 * k), epsilon=eps, k=k)


@lru_cache(maxsize=4096)
def budget_split_adaptive(epsilon: Rational, k: int) -> AdaptiveBudget:
    """Default adaptive split: eps0 = eps/2, eps2 = eps/(4k), eps1 = eps/(8k).

    Chosen so that k worst-case (second-branch) answers exactly exhaust the
    budget and a first-branch answer costs half as much.  Callers may build
    an AdaptiveBudget directly to override, subject to its invariants.
    """
    eps = _fraction(epsilon, "epsilon")
    if k < 1:
        raise NonPositiveBudget(f"k must be >= 1, got {k}")
    return AdaptiveBudget(
        epsilon0=eps / 2,
        epsilon1=eps / (8 * k),
        epsilon2=eps / (4 * k),
        epsilon=eps,
    )


@dataclass(frozen=True)
class LedgerEvent:
    index: int
    branch: Branch
    increment: Fraction


@dataclass
class CostLedger:
    """Running privacy cost of an adaptive run, charged per positive answer."""

    initial: Fraction
    running_cost: Fraction
    events: list = field(default_factory=list)

    @classmethod
    def start(cls, epsilon0: Fraction) -> "CostLedger":
        return cls(initial=epsilon0, running_cost=epsilon0)

    def charge(self, index: int, branch: Branch, increment: Fraction) -> None:
        self.running_cost += increment
        self.events.append(LedgerEvent(index, branch, increment))

    def cost_at(self, step: int) -> Fraction:
        """Running cost after the first ``step`` charged events."""
        return self.initial + sum((e.increment for e in self.events[:step]), Fraction(0))


def svt_gap_run(w: Workload, tape: NoiseTape, side: Side = Side.D) -> OutputSequence:
    """Report which queries clear the noisy threshold, with the positive
    answers carrying their noisy margin; stops after the k-th positive."""
    out, _ = _svt_run(w, tape, side, with_gap=True)
    return out


def svt_classic_run(w: Workload, tape: NoiseTape, side: Side = Side.D) -> OutputSequence:
    """Same loop as svt_gap_run but positives are bare markers (no margin)."""
    out, _ = _svt_run(w, tape, side, with_gap=False)
    return out


def _svt_run(w: Workload, tape: NoiseTape, side: Side, with_gap: bool):
    check_workload(w)
    cur = tape.cursor()
    noisy_threshold = w.threshold + cur.take_threshold()
    answers = []
    count = 0
    for q in w.values(side):
        eta_i = cur.take_single()
        gap = q + eta_i - noisy_threshold  # same draw decides and is released
        if gap >= 0:
            answers.append(top_gap(gap) if with_gap else top_marker())
            count += 1
        else:
            answers.append(BOT)
        if count >= w.k:
            break
    return OutputSequence(tuple(answers)), cur.consumed


def adaptive_svt_gap_run(
    w: Workload,
    budget: AdaptiveBudget,
    tape: NoiseTape,
    side: Side = Side.D,
) -> tuple[OutputSequence, CostLedger]:
    """Two-attempt variant: a wide-noise first test must clear the threshold
    by at least sigma (cheap answer), otherwise a narrow-noise second test
    must clear it at all (expensive answer).  Below-threshold answers are
    free; the run stops once the ledger cannot afford a worst-case query."""
    check_workload(w)
    if w.sigma is None:
        raise GapSvtError("adaptive mechanism requires workload.sigma")
    out, ledger, _ = _adaptive_run(w, budget, tape, side)
    return out, ledger


def _adaptive_run(w: Workload, budget: AdaptiveBudget, tape: NoiseTape, side: Side):
    sigma = w.sigma
    cur = tape.cursor()
    noisy_threshold = w.threshold + cur.take_threshold()
    ledger = CostLedger.start(budget.epsilon0)
    limit = budget.guard_limit
    answers = []
    for i, q in enumerate(w.values(side)):
        if ledger.running_cost > limit:
            raise BudgetInvariantViolation(
                f"query {i} reached with running cost {ledger.running_cost} > {limit}"
            )
        first_noise, second_noise = cur.take_pair()
        first_gap = q + first_noise - noisy_threshold
        if first_gap >= sigma:
            answers.append(top_gap(first_gap, Branch.FIRST))
            ledger.charge(i, Branch.FIRST, 2 * budget.epsilon1)
        else:
            second_gap = q + second_noise - noisy_threshold
            if second_gap >= 0:
                answers.append(top_gap(second_gap, Branch.SECOND))
                ledger.charge(i, Branch.SECOND, 2 * budget.epsilon2)
            else:
                answers.append(BOT)
        if ledger.running_cost > limit:
            break
    if ledger.running_cost > budget.epsilon:
        raise BudgetInvariantViolation(
            f"terminated with cost {ledger.running_cost} > epsilon {budget.epsilon}"
        )
    return OutputSequence(tuple(answers)), ledger, cur.consumed


@dataclass(frozen=True)
class RunResult:
    """One mechanism run plus the instrumentation the verifier needs."""

    output: OutputSequence
    consumed: int  # scalar tape draws actually read, threshold included
    ledger: CostLedger | None = None


def run_mechanism(
    mechanism: str,
    w: Workload,
    tape: NoiseTape,
    side: Side = Side.D,
    budget: AdaptiveBudget | None = None,
) -> RunResult:
    """Dispatch a deterministic run and capture the consumed-draw count."""
    if mechanism == SVT_GAP:
        out, consumed = _svt_run(w, tape, side, with_gap=True)
        return RunResult(out, consumed)
    if mechanism == SVT_CLASSIC:
        out, consumed = _svt_run(w, tape, side, with_gap=False)
        return RunResult(out, consumed)
    if mechanism == ADAPTIVE_GAP:
        check_workload(w)
        if w.sigma is None:
            raise GapSvtError("adaptive mechanism requires workload.sigma")
        if budget is None:
            budget = budget_split_adaptive(w.epsilon, w.k)
        out, ledger, consumed = _adaptive_run(w, budget, tape, side)
        return RunResult(out, consumed, ledger)
    raise GapSvtError(f"unknown mechanism {mechanism!r}, expected one of {MECHANISMS}")


def default_budget(mechanism: str, w: Workload):
    if mechanism == ADAPTIVE_GAP:
        return budget_split_adaptive(w.epsilon, w.k)
    return budget_split_svt(w.epsilon, w.k)


@lru_cache(maxsize=4096)
def _cached_noise_spec(mechanism: str, epsilon: float, k: int, kind: NoiseKind) -> NoiseSpec:
    if mechanism == ADAPTIVE_GAP:
        return budget_split_adaptive(epsilon, k).noise_spec(kind)
    return budget_split_svt(epsilon, k).noise_spec(kind)


def default_noise_spec(mechanism: str, w: Workload, kind: NoiseKind = NoiseKind.LAPLACE) -> NoiseSpec:
    return _cached_noise_spec(mechanism, w.epsilon, w.k, kind)


def sample_run(
    mechanism: str,
    w: Workload,
    side: Side,
    seed,
    kind: NoiseKind = NoiseKind.LAPLACE,
) -> tuple[RunResult, NoiseTape]:
    """Sample a tape at the mechanism's scales and run; fully determined by
    the seed."""
    check_workload(w)
    spec = default_noise_spec(mechanism, w, kind)
    rng = np.random.default_rng(seed)
    tape = draw_tape(spec, tape_layout_for(mechanism), len(w), rng)
    return run_mechanism(mechanism, w, tape, side), tape


def run_sampled(
    mechanism: str,
    w: Workload,
    side: Side,
    seed,
    kind: NoiseKind = NoiseKind.LAPLACE,
) -> OutputSequence:
    result, _ = sample_run(mechanism, w, side, seed, kind)
    return result.output
