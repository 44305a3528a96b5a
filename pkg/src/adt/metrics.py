"""Detection metrics, subset robustness, and the exact Wilcoxon test.

Precision/recall/F1 follow the window-level convention with two special
cases that keep all-normal subsets meaningful:

* no positives anywhere (TP = FP = FN = 0): perfect scores (1, 1, 1);
* no hits but positives exist (TP = 0 and FP + FN > 0): all zeros.
"""

from dataclasses import dataclass

import numpy as np

from .validation import as_label_array, check_same_length

# Sign enumeration is 2^n; past this the exact test is not offered.
WILCOXON_MAX_N = 15


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    @staticmethod
    def from_arrays(predictions, truths):
        pred = as_label_array(predictions, "predictions")
        true = as_label_array(truths, "truths")
        check_same_length(pred, true, "predictions", "truths")
        tp = int(np.sum((pred == 1) & (true == 1)))
        tn = int(np.sum((pred == 0) & (true == 0)))
        fp = int(np.sum((pred == 1) & (true == 0)))
        fn = int(np.sum((pred == 0) & (true == 1)))
        return ConfusionCounts(tp, tn, fp, fn)


def precision_recall_f1(counts):
    """(precision, recall, F1) from confusion counts, with the special cases."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0, 1.0, 1.0
    if tp == 0:
        return 0.0, 0.0, 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass(frozen=True)
class DetectionResult:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float


def evaluate_run(predictions, truths):
    """Score one prediction stream against its ground truth."""
    if len(predictions) == 0:
        raise ValueError("predictions must be non-empty")
    counts = ConfusionCounts.from_arrays(predictions, truths)
    p, r, f1 = precision_recall_f1(counts)
    return DetectionResult(counts, p, r, f1)


@dataclass(frozen=True)
class RobustnessReport:
    """Per-subset results plus mean / population-std summaries."""

    subsets: tuple
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f1_mean: float
    f1_std: float

    @property
    def f1_values(self):
        return np.array([s.f1 for s in self.subsets])


def subset_robustness(predictions, truths, n_subsets=10):
    """Evaluate over ``n_subsets`` contiguous, equally sized subsets.

    The division remainder goes to the last subset, so length 25 with 10
    subsets gives nine subsets of 2 and one of 7.  Standard deviations are
    population (divisor N) over the subset values.
    """
    pred = as_label_array(predictions, "predictions")
    true = as_label_array(truths, "truths")
    check_same_length(pred, true, "predictions", "truths")
    if n_subsets < 1:
        raise ValueError("n_subsets must be >= 1")
    if len(pred) < n_subsets:
        raise ValueError(
            f"need at least {n_subsets} points for {n_subsets} subsets, got {len(pred)}"
        )
    base = len(pred) // n_subsets
    results = []
    for i in range(n_subsets):
        start = i * base
        stop = start + base if i < n_subsets - 1 else len(pred)
        results.append(evaluate_run(pred[start:stop], true[start:stop]))
    p = np.array([r.precision for r in results])
    r_ = np.array([r.recall for r in results])
    f = np.array([r.f1 for r in results])
    return RobustnessReport(
        tuple(results),
        float(p.mean()), float(p.std()),
        float(r_.mean()), float(r_.std()),
        float(f.mean()), float(f.std()),
    )


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min of the positive/negative rank sums
    p_value: float
    n: int  # pairs remaining after zero differences are dropped


def _average_ranks(values):
    """Ranks 1..n of |values| with tied values sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def wilcoxon_two_tailed(a, b):
    """Exact two-tailed Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; tied absolute differences get average
    ranks.  The p-value enumerates all 2^n sign assignments, so n after
    dropping zeros must be <= 15 (benchmark use is n = 10 subsets).  All
    differences zero means the test is undefined and raises.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("samples must be 1-dimensional")
    check_same_length(x, y, "a", "b")
    diffs = x - y
    nonzero = diffs[diffs != 0.0]
    n = len(nonzero)
    if n == 0:
        raise ValueError("all paired differences are zero; the test is undefined")
    if n > WILCOXON_MAX_N:
        raise ValueError(
            f"exact enumeration supports at most {WILCOXON_MAX_N} nonzero differences, got {n}"
        )
    ranks = _average_ranks(np.abs(nonzero))
    w_pos = float(ranks[nonzero > 0].sum())
    w_neg = float(ranks[nonzero < 0].sum())
    statistic = min(w_pos, w_neg)
    total = float(ranks.sum())

    # Rank sums are dyadic rationals (integers and half-integers), so the
    # comparisons below are exact in float64.
    masks = np.arange(2 ** n, dtype=np.uint32)
    t_plus = np.zeros(2 ** n, dtype=np.float64)
    for i in range(n):
        t_plus[(masks >> i) & 1 == 1] += ranks[i]
    extreme = np.minimum(t_plus, total - t_plus) <= statistic
    p_value = float(np.count_nonzero(extreme) / (2 ** n))
    return WilcoxonResult(statistic, p_value, n)
