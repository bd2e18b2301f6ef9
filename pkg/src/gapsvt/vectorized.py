"""Array evaluation of the mechanisms over many tapes at once.

The exact-enumeration oracle and the Monte Carlo cross-checks have to touch
millions of tapes, which rules out a per-tape Python run.  The kernels here
replay the mechanisms column-by-column over tape arrays using the very same
arithmetic expressions and comparison directions, including the adaptive
guard evaluated from the exact rational budget.  Their agreement with the
per-tape implementations is asserted by dedicated equivalence tests
(exhaustively on small boxes, sampled on large ones), so distribution-level
results always rest on the step-by-step mechanisms, not on this file alone.

Per-tape answers are encoded positionally: 0 = not emitted (run had ended),
1 = below threshold, and for positive answers ``branch_code + 4 * gap``
where branch_code is 2 for plain/first and 3 for second.  Integer workloads
with integer tapes make the gap exact, so encoded rows are exact output
identifiers.
"""

from __future__ import annotations

import numpy as np

from .core import Workload
from .mechanisms import ADAPTIVE_GAP, SVT_CLASSIC, SVT_GAP, AdaptiveBudget

STATUS_ABSENT = 0
STATUS_BOT = 1
STATUS_TOP = 2  # plain SVT positives and adaptive first-branch positives
STATUS_TOP_SECOND = 3


def svt_status_gaps(values, threshold, k, eta0, etaq):
    """Run the plain SVT loop over tape arrays.

    ``eta0``: scalar or (G,) threshold draws; ``etaq``: (G, n) per-query
    draws.  Returns ``status`` (G, n) uint8 and ``gaps`` (G, n) in the
    arithmetic dtype of the inputs.
    """
    etaq = np.asarray(etaq)
    G, n = etaq.shape
    if n != len(values):
        raise ValueError(f"expected {len(values)} per-query columns, got {n}")
    status = np.zeros((G, n), dtype=np.uint8)
    gap_dtype = np.result_type(
        etaq.dtype, np.asarray(eta0).dtype, np.asarray(values).dtype, np.asarray(threshold).dtype
    )
    gaps = np.zeros((G, n), dtype=gap_dtype)
    noisy_threshold = threshold + eta0  # scalar or (G,)
    count = np.zeros(G, dtype=np.int64)
    alive = np.ones(G, dtype=bool)
    for i, q in enumerate(values):
        gap = q + etaq[:, i] - noisy_threshold
        top = (gap >= 0) & alive
        status[:, i] = np.where(top, STATUS_TOP, np.where(alive, STATUS_BOT, STATUS_ABSENT))
        gaps[top, i] = gap[top]
        count += top
        alive &= count < k
    return status, gaps


def _adaptive_stop_table(budget: AdaptiveBudget, n: int) -> np.ndarray:
    """stop[j1, j2]: after j1 first-branch and j2 second-branch positives the
    running cost exceeds the guard limit.  Exact rational comparison, so the
    table reproduces the per-tape ledger guard bit for bit."""
    stop = np.zeros((n + 1, n + 1), dtype=bool)
    for j1 in range(n + 1):
        for j2 in range(n + 1):
            cost = budget.epsilon0 + 2 * budget.epsilon1 * j1 + 2 * budget.epsilon2 * j2
            stop[j1, j2] = cost > budget.guard_limit
    return stop


def adaptive_status_gaps(values, threshold, sigma, budget: AdaptiveBudget, eta0, xis, etas):
    """Adaptive loop over tape arrays; ``xis``/``etas`` are (G, n)."""
    xis = np.asarray(xis)
    etas = np.asarray(etas)
    G, n = xis.shape
    if etas.shape != (G, n) or n != len(values):
        raise ValueError("xis/etas must both be (G, n) with one column per query")
    status = np.zeros((G, n), dtype=np.uint8)
    gap_dtype = np.result_type(
        xis.dtype, etas.dtype, np.asarray(eta0).dtype, np.asarray(values).dtype, np.asarray(threshold).dtype
    )
    gaps = np.zeros((G, n), dtype=gap_dtype)
    noisy_threshold = threshold + eta0
    j1 = np.zeros(G, dtype=np.int64)
    j2 = np.zeros(G, dtype=np.int64)
    alive = np.ones(G, dtype=bool)
    stop = _adaptive_stop_table(budget, n)
    for i, q in enumerate(values):
        first_gap = q + xis[:, i] - noisy_threshold
        second_gap = q + etas[:, i] - noisy_threshold
        first = (first_gap >= sigma) & alive
        second = ~first & (second_gap >= 0) & alive
        bot = alive & ~first & ~second
        status[:, i] = np.where(
            first, STATUS_TOP, np.where(second, STATUS_TOP_SECOND, np.where(bot, STATUS_BOT, STATUS_ABSENT))
        )
        gaps[first, i] = first_gap[first]
        gaps[second, i] = second_gap[second]
        j1 += first
        j2 += second
        alive &= ~stop[j1, j2]
    return status, gaps


def run_status_gaps(mechanism: str, w: Workload, side, budget, eta0, per_query_arrays):
    """Uniform kernel entry point.

    ``per_query_arrays`` is ``etaq`` (G, n) for the single layout or a pair
    ``(xis, etas)`` for the paired one.
    """
    values = w.values(side)
    if mechanism in (SVT_GAP, SVT_CLASSIC):
        return svt_status_gaps(values, w.threshold, w.k, eta0, per_query_arrays)
    if mechanism == ADAPTIVE_GAP:
        xis, etas = per_query_arrays
        return adaptive_status_gaps(values, w.threshold, w.sigma, budget, eta0, xis, etas)
    raise ValueError(f"unknown mechanism {mechanism!r}")


def encode_int_rows(mechanism: str, status: np.ndarray, gaps: np.ndarray) -> np.ndarray:
    """Positional int64 encoding of integer-valued outputs (see module doc)."""
    codes = status.astype(np.int64)
    if mechanism != SVT_CLASSIC:
        g = np.asarray(gaps)
        if g.dtype.kind == "f":
            gi = np.rint(g).astype(np.int64)
            if not np.array_equal(gi, g):
                raise ValueError("non-integer gaps cannot be int-encoded")
        else:
            gi = g.astype(np.int64)
        top = status >= STATUS_TOP
        codes = np.where(top, codes + 4 * gi, codes)
    return codes


def decode_row(mechanism: str, row) -> tuple:
    """Inverse of encode_int_rows for one row, yielding the same canonical
    key OutputSequence.canonical() produces."""
    out = []
    for c in row:
        c = int(c)
        if c == STATUS_ABSENT:
            break
        if c == STATUS_BOT:
            out.append("bot")
        elif mechanism == SVT_CLASSIC:
            out.append("top")
        else:
            branch_code = c & 3
            gap = c >> 2
            if mechanism == SVT_GAP:
                out.append(("plain", gap))
            else:
                out.append(("first" if branch_code == STATUS_TOP else "second", gap))
    return tuple(out)


def canonical_rows(mechanism: str, status, gaps, gap_ndigits: int | None = None) -> list:
    """Canonical keys for every row; float gaps are rounded before keying."""
    G, n = status.shape
    status_l = status.tolist()
    gaps_l = np.asarray(gaps).tolist()
    out = []
    for r in range(G):
        srow, grow = status_l[r], gaps_l[r]
        key = []
        for i in range(n):
            s = srow[i]
            if s == STATUS_ABSENT:
                break
            if s == STATUS_BOT:
                key.append("bot")
            elif mechanism == SVT_CLASSIC:
                key.append("top")
            else:
                g = grow[i]
                if gap_ndigits is not None:
                    g = round(g, gap_ndigits)
                if isinstance(g, float) and g.is_integer():
                    g = int(g)
                branch = "plain" if mechanism == SVT_GAP else ("first" if s == STATUS_TOP else "second")
                key.append((branch, g))
        out.append(tuple(key))
    return out
