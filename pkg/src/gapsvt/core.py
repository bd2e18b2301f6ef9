"""Workloads, noise tapes and noise distributions.

A mechanism in this package is a deterministic function of a workload and a
noise tape.  The tape holds the threshold draw plus one entry per query:
a single draw for the plain SVT variants, a pair of draws for the adaptive
variant.  Keeping the randomness explicit is what makes output sequences
replayable and alignments testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    EmptyWorkload,
    LayoutMismatch,
    NonPositiveBudget,
    SensitivityViolation,
    TapeExhausted,
)


class Side(str, Enum):
    """Which of the two adjacent value sequences a run reads."""

    D = "d"
    DPRIME = "dprime"


class TapeLayout(str, Enum):
    SINGLE = "single"   # one draw per query
    PAIRED = "paired"   # (first, second) draws per query


class NoiseKind(str, Enum):
    LAPLACE = "laplace"  # continuous Laplace, inverse-CDF sampled
    DLAP = "dlap"        # discrete (integer) Laplace


class Branch(str, Enum):
    """Which comparison produced a positive answer."""

    PLAIN = "plain"    # the single comparison of the non-adaptive variants
    FIRST = "first"    # adaptive first attempt (wide noise, margin sigma)
    SECOND = "second"  # adaptive second attempt (narrow noise, margin 0)


@dataclass(frozen=True)
class QueryPair:
    """One query evaluated on both adjacent inputs."""

    value_d: float
    value_dprime: float

    @property
    def delta(self) -> float:
        return self.value_d - self.value_dprime

    def value(self, side: Side) -> float:
        return self.value_d if side is Side.D else self.value_dprime

    def swapped(self) -> "QueryPair":
        return QueryPair(self.value_dprime, self.value_d)


@dataclass(frozen=True)
class Workload:
    """An adjacent pair of query value sequences plus mechanism parameters."""

    pairs: tuple[QueryPair, ...]
    threshold: float
    k: int
    epsilon: float
    sigma: float | None = None  # adaptive first-attempt margin

    @classmethod
    def from_values(
        cls,
        pairs: Sequence[Sequence[float]],
        threshold: float,
        k: int,
        epsilon: float,
        sigma: float | None = None,
    ) -> "Workload":
        qp = tuple(QueryPair(a, b) for a, b in pairs)
        return cls(qp, threshold, k, epsilon, sigma)

    def __len__(self) -> int:
        return len(self.pairs)

    def values(self, side: Side) -> tuple[float, ...]:
        return tuple(p.value(side) for p in self.pairs)

    def deltas(self) -> tuple[float, ...]:
        return tuple(p.delta for p in self.pairs)

    def swapped(self) -> "Workload":
        """The same workload with the two sides exchanged."""
        return Workload(
            tuple(p.swapped() for p in self.pairs),
            self.threshold,
            self.k,
            self.epsilon,
            self.sigma,
        )

    def is_integer_valued(self) -> bool:
        return float(self.threshold).is_integer() and all(
            float(p.value_d).is_integer() and float(p.value_dprime).is_integer()
            for p in self.pairs
        )


def check_workload(w: Workload) -> Workload:
    """Gate every consumer of a workload behind the structural invariants.

    Raises the first violation found; returns the workload unchanged when it
    is valid so call sites can chain on it.
    """
    if len(w.pairs) == 0:
        raise EmptyWorkload("workload has no query pairs")
    if not w.epsilon > 0:
        raise NonPositiveBudget(f"epsilon must be positive, got {w.epsilon}")
    if w.k < 1:
        raise NonPositiveBudget(f"k must be >= 1, got {w.k}")
    if w.sigma is not None and w.sigma < 0:
        raise NonPositiveBudget(f"sigma must be >= 0, got {w.sigma}")
    for i, p in enumerate(w.pairs):
        if not abs(p.delta) <= 1:
            raise SensitivityViolation(i, p.delta)
    return w


@dataclass(frozen=True)
class Answer:
    """One per-query answer: below threshold, or above with an optional gap.

    ``gap`` is None for below-threshold answers and for the classic SVT's
    gap-erased positive marker.  ``branch`` is None only for below-threshold
    answers.
    """

    top: bool
    gap: float | None = None
    branch: Branch | None = None

    def erase_gap(self) -> "Answer":
        if not self.top:
            return self
        return Answer(top=True, gap=None, branch=self.branch)

    def __repr__(self) -> str:  # compact traces in test output
        if not self.top:
            return "Bot"
        if self.gap is None:
            return "Top"
        if self.branch is Branch.PLAIN:
            return f"TopGap({self.gap})"
        return f"TopGap({self.gap}, {self.branch.value})"


BOT = Answer(top=False)


def top_gap(gap: float, branch: Branch = Branch.PLAIN) -> Answer:
    return Answer(top=True, gap=gap, branch=branch)


def top_marker(branch: Branch = Branch.PLAIN) -> Answer:
    return Answer(top=True, gap=None, branch=branch)


@dataclass(frozen=True)
class OutputSequence:
    """Variable-length sequence of per-query answers."""

    answers: tuple[Answer, ...]

    def __len__(self) -> int:
        return len(self.answers)

    def __iter__(self) -> Iterator[Answer]:
        return iter(self.answers)

    def __getitem__(self, i: int) -> Answer:
        return self.answers[i]

    def top_count(self) -> int:
        return sum(1 for a in self.answers if a.top)

    def erase_gaps(self) -> "OutputSequence":
        return OutputSequence(tuple(a.erase_gap() for a in self.answers))

    def canonical(self, gap_ndigits: int | None = None) -> tuple:
        """Hashable encoding used as a distribution key.

        Below-threshold answers encode as ``"bot"``, gap-erased positives as
        ``"top"`` and gap answers as ``(branch, gap)``.  ``gap_ndigits``
        rounds gaps before keying (used by the Monte Carlo paths so that
        float gaps collide deterministically).
        """
        out = []
        for a in self.answers:
            if not a.top:
                out.append("bot")
            elif a.gap is None:
                out.append("top")
            else:
                g = a.gap
                if gap_ndigits is not None:
                    g = round(g, gap_ndigits)
                if isinstance(g, float) and g.is_integer():
                    g = int(g)
                out.append((a.branch.value, g))
        return tuple(out)


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution family plus per-role scales (scale b = 1 / epsilon_role)."""

    kind: NoiseKind
    scales: Mapping[str, float]

    ROLES_SINGLE = frozenset({"threshold", "query"})
    ROLES_PAIRED = frozenset({"threshold", "query_first", "query_second"})

    def __post_init__(self):
        roles = frozenset(self.scales)
        if roles not in (self.ROLES_SINGLE, self.ROLES_PAIRED):
            raise LayoutMismatch(f"unexpected noise roles {sorted(roles)}")
        for role, b in self.scales.items():
            if not b > 0:
                raise NonPositiveBudget(f"scale for role {role!r} must be positive, got {b}")

    @property
    def layout(self) -> TapeLayout:
        return TapeLayout.SINGLE if frozenset(self.scales) == self.ROLES_SINGLE else TapeLayout.PAIRED


@dataclass(frozen=True)
class NoiseTape:
    """The randomness a mechanism consumes: threshold draw + per-query draws.

    ``per_query`` entries are scalars for the single layout and
    ``(first, second)`` pairs for the paired layout.  Tapes are finite;
    reading past the end raises TapeExhausted rather than resampling.
    """

    threshold_noise: float
    per_query: tuple
    layout: TapeLayout = TapeLayout.SINGLE

    def __len__(self) -> int:
        return len(self.per_query)

    def cursor(self) -> "TapeCursor":
        return TapeCursor(self)

    def flat(self) -> tuple[float, ...]:
        """Tape coordinates in consumption order (threshold first)."""
        if self.layout is TapeLayout.SINGLE:
            return (self.threshold_noise, *self.per_query)
        out = [self.threshold_noise]
        for a, b in self.per_query:
            out.extend((a, b))
        return tuple(out)


class TapeCursor:
    """Sequential reader over a tape that counts consumed scalar draws."""

    def __init__(self, tape: NoiseTape):
        self._tape = tape
        self._index = 0
        self.consumed = 0  # scalar draws read so far, threshold included

    def take_threshold(self) -> float:
        self.consumed += 1
        return self._tape.threshold_noise

    def take_single(self) -> float:
        if self._tape.layout is not TapeLayout.SINGLE:
            raise LayoutMismatch("single draw requested from a paired tape")
        if self._index >= len(self._tape.per_query):
            raise TapeExhausted(f"tape has only {len(self._tape.per_query)} per-query entries")
        value = self._tape.per_query[self._index]
        self._index += 1
        self.consumed += 1
        return value

    def take_pair(self) -> tuple[float, float]:
        if self._tape.layout is not TapeLayout.PAIRED:
            raise LayoutMismatch("paired draw requested from a single-layout tape")
        if self._index >= len(self._tape.per_query):
            raise TapeExhausted(f"tape has only {len(self._tape.per_query)} per-query entries")
        first, second = self._tape.per_query[self._index]
        self._index += 1
        self.consumed += 2
        return first, second


# ---------------------------------------------------------------------------
# Noise primitives


def laplace_inverse_cdf(u: float, scale: float) -> float:
    """Quantile function of the zero-centred Laplace(scale) distribution.

    Equals -scale * sign(u - 1/2) * ln(1 - 2|u - 1/2|); evaluated branch-wise
    so both tails stay finite for every representable u in (0, 1).
    """
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must lie strictly inside (0, 1), got {u}")
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 * (1.0 - u)) + 0.0


def _laplace_from_uniform(u: np.ndarray, scale: float) -> np.ndarray:
    # vector twin of laplace_inverse_cdf for u strictly inside (0, 1)
    return np.where(u < 0.5, scale * np.log(2.0 * u), -scale * np.log(2.0 * (1.0 - u)))


def discrete_laplace_pmf(x: int, scale: float) -> float:
    """P[X = x] for the integer Laplace with decay exp(-1/scale).

    Mass (1-a)/(1+a) * a^|x| with a = exp(-1/scale); symmetric and sums to 1
    over the integers.
    """
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    alpha = math.exp(-1.0 / scale)
    return (1.0 - alpha) / (1.0 + alpha) * alpha ** abs(int(x))


def discrete_laplace_tail(bound: int, scale: float) -> float:
    """P[|X| > bound]; the geometric tail left outside an enumeration box."""
    if not scale > 0:
        raise DomainError(f"scale must be positive, got {scale}")
    if bound < 0:
        return 1.0
    alpha = math.exp(-1.0 / scale)
    return 2.0 * alpha ** (bound + 1) / (1.0 + alpha)


def discrete_laplace_box(scale: float, tail_tol: float = 1e-12) -> int:
    """Smallest bound whose outside mass is below tail_tol."""
    alpha = math.exp(-1.0 / scale)
    # solve 2 a^(B+1) / (1+a) < tol, then nudge for float slack
    b = max(0, math.ceil(scale * math.log(2.0 / (tail_tol * (1.0 + alpha))) - 1.0))
    while discrete_laplace_tail(b, scale) >= tail_tol:
        b += 1
    return b


def _uniform_open(rng: np.random.Generator, size: int) -> np.ndarray:
    # uniform on the open interval (0, 1): 53-bit grid excluding both ends
    return rng.integers(1, 1 << 53, size=size).astype(np.float64) / float(1 << 53)


def _draw(rng: np.random.Generator, kind: NoiseKind, scale: float, size: int) -> np.ndarray:
    if kind is NoiseKind.LAPLACE:
        return _laplace_from_uniform(_uniform_open(rng, size), scale)
    alpha = math.exp(-1.0 / scale)
    p = 1.0 - alpha
    # difference of two iid geometrics has the integer-Laplace law
    return rng.geometric(p, size=size) - rng.geometric(p, size=size)


def draw_tape(spec: NoiseSpec, layout: TapeLayout, length: int, rng: np.random.Generator) -> NoiseTape:
    """Draw a tape from an existing generator (the seeded entry point below
    and the trial harness both funnel through here)."""
    if length < 1:
        raise DomainError(f"tape length must be >= 1, got {length}")
    if layout is not spec.layout:
        raise LayoutMismatch(f"noise spec has {spec.layout.value} roles, tape layout {layout.value} requested")
    kind = spec.kind

    def scalar(role: str, n: int) -> list:
        vals = _draw(rng, kind, spec.scales[role], n)
        return [int(v) for v in vals] if kind is NoiseKind.DLAP else [float(v) for v in vals]

    eta0 = scalar("threshold", 1)[0]
    if layout is TapeLayout.SINGLE:
        per = tuple(scalar("query", length))
    else:
        firsts = scalar("query_first", length)
        seconds = scalar("query_second", length)
        per = tuple(zip(firsts, seconds))
    return NoiseTape(eta0, per, layout)


def sample_tape(spec: NoiseSpec, layout: TapeLayout, length: int, seed: int) -> NoiseTape:
    """Deterministically sample a tape: one threshold draw plus ``length``
    per-query entries, each role at its own scale."""
    return draw_tape(spec, layout, length, np.random.default_rng(seed))
