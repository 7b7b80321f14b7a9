"""Evaluation statistics: macro-F1, delta-F1, Krippendorff's alpha
(nominal), and the Mann-Whitney U test.

Conventions stated once and tested: a class absent from both gold and
predictions contributes F1 = 0 to the macro average; the U statistic counts
0.5 per tied pair; the two-sided p-value is exact (count recurrence) for
tie-free samples with n_a * n_b <= 400 and otherwise uses the normal
approximation with tie and continuity corrections.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .errors import EmptyInputError, InsufficientDataError, LengthMismatchError

EXACT_PAIR_LIMIT = 400


@dataclass(frozen=True)
class EvalOutcome:
    """Per-class precision/recall/F1 plus the macro average and confusion
    counts (confusion[gold][pred], classes ordered 0, 1)."""

    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    macro_f1: float
    confusion: tuple[tuple[int, int], tuple[int, int]]

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.confusion)

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "per_class": {
                str(c): {
                    "precision": self.precision[c],
                    "recall": self.recall[c],
                    "f1": self.f1[c],
                }
                for c in (0, 1)
            },
            "confusion": [list(row) for row in self.confusion],
            "n": self.n,
        }


def macro_f1(gold, pred) -> EvalOutcome:
    """Macro-averaged F1 over the two classes with equal class weight."""
    gold = list(gold)
    pred = list(pred)
    if len(gold) != len(pred):
        raise LengthMismatchError(f"gold has {len(gold)} labels, pred has {len(pred)}")
    if not gold:
        raise EmptyInputError("no labels")
    for v in gold + pred:
        if v not in (0, 1):
            raise ValueError(f"labels must be binary, got {v!r}")
    conf = [[0, 0], [0, 0]]
    for g, p in zip(gold, pred):
        conf[g][p] += 1
    precision = []
    recall = []
    f1 = []
    for c in (0, 1):
        tp = conf[c][c]
        fp = conf[1 - c][c]
        fn = conf[c][1 - c]
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
    return EvalOutcome(
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        macro_f1=(f1[0] + f1[1]) / 2.0,
        confusion=(tuple(conf[0]), tuple(conf[1])),
    )


def delta_f1(a: EvalOutcome, b: EvalOutcome) -> float:
    return a.macro_f1 - b.macro_f1


# --- Krippendorff's alpha (nominal) ----------------------------------------


def load_annotation_matrix(path) -> list[list[str | None]]:
    """Read a raters-as-rows / items-as-columns CSV; empty cells are missing."""
    rows: list[list[str | None]] = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            rows.append([cell.strip() if cell.strip() else None for cell in row])
    return rows


def krippendorff_alpha(matrix) -> float:
    """Nominal-level alpha = 1 - D_o/D_e over pairable values.

    ``matrix`` is raters x items with None marking a missing rating; items
    rated by fewer than two raters do not contribute. Returns 1.0 when
    there is no observed disagreement (including the degenerate single
    category case where D_e = 0).
    """
    rows = [list(r) for r in matrix]
    if len(rows) < 2:
        raise InsufficientDataError("need at least 2 raters")
    n_items = max((len(r) for r in rows), default=0)
    if n_items < 2:
        raise InsufficientDataError("need at least 2 items")

    coincidence: dict[tuple, float] = {}
    totals: dict[object, float] = {}
    n = 0.0
    for item in range(n_items):
        ratings = [r[item] for r in rows if item < len(r) and r[item] is not None]
        m_u = len(ratings)
        if m_u < 2:
            continue
        for i, a in enumerate(ratings):
            for j, b in enumerate(ratings):
                if i == j:
                    continue
                coincidence[(a, b)] = coincidence.get((a, b), 0.0) + 1.0 / (m_u - 1)
                totals[a] = totals.get(a, 0.0) + 1.0 / (m_u - 1)
                n += 1.0 / (m_u - 1)
    if n <= 1:
        raise InsufficientDataError("no pairable values")
    # alpha = 1 - D_o/D_e with D_o = sum_o/n and D_e = sum_e/(n(n-1));
    # folding into one division keeps simple rationals exact in floats
    sum_o = sum(v for (a, b), v in coincidence.items() if a != b)
    sum_e = sum(totals[a] * totals[b] for a in totals for b in totals if a != b)
    if sum_o == 0.0:
        return 1.0
    return 1.0 - sum_o * (n - 1.0) / sum_e


# --- Mann-Whitney U ---------------------------------------------------------


@lru_cache(maxsize=None)
def _u_counts(n: int, m: int) -> tuple[int, ...]:
    """Null-distribution counts of U for sample sizes (n, m), u = 0..n*m."""
    if n == 0 or m == 0:
        return (1,)
    left = _u_counts(n - 1, m)
    right = _u_counts(n, m - 1)
    out = []
    for u in range(n * m + 1):
        c = 0
        if 0 <= u - m < len(left):
            c += left[u - m]
        if u < len(right):
            c += right[u]
        out.append(c)
    return tuple(out)


def _ranks_with_ties(values: list[float]) -> tuple[list[float], list[int]]:
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    tie_sizes = []
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and values[order[j]] == values[order[i]]:
            j += 1
        avg = (i + j + 1) / 2.0  # mean of ranks i+1 .. j
        for k in range(i, j):
            ranks[order[k]] = avg
        tie_sizes.append(j - i)
        i = j
    return ranks, tie_sizes


def mann_whitney_u(sample_a, sample_b) -> tuple[float, float]:
    """U statistic for sample_a (pair counting, 0.5 per tie) and the
    two-sided p-value."""
    a = [float(x) for x in sample_a]
    b = [float(x) for x in sample_b]
    if not a or not b:
        raise EmptyInputError("both samples must be non-empty")
    na, nb = len(a), len(b)
    ranks, tie_sizes = _ranks_with_ties(a + b)
    r_a = sum(ranks[:na])
    u_a = r_a - na * (na + 1) / 2.0
    u_b = na * nb - u_a

    has_ties = any(t > 1 for t in tie_sizes)
    if not has_ties and na * nb <= EXACT_PAIR_LIMIT:
        counts = _u_counts(na, nb)
        total = math.comb(na + nb, na)
        u_min = int(round(min(u_a, u_b)))
        p = 2.0 * sum(counts[: u_min + 1]) / total
    else:
        big_n = na + nb
        mu = na * nb / 2.0
        tie_term = sum(t**3 - t for t in tie_sizes) / (big_n * (big_n - 1)) if big_n > 1 else 0.0
        var = na * nb / 12.0 * ((big_n + 1) - tie_term)
        if var <= 0.0:
            return u_a, 1.0
        z = (max(u_a, u_b) - mu - 0.5) / math.sqrt(var)
        p = math.erfc(z / math.sqrt(2.0))
    return u_a, min(max(p, 0.0), 1.0)
