"""Binary detection metrics over blind-spot confusion counts.

Implements precision, recall, false-discovery rate, F1, and the Matthews
correlation coefficient over a four-count confusion matrix, plus the
aggregation of per-frame tallies and the two-column summary table used in
reports.  Undefined metrics (zero denominators) are represented as
``None`` and rendered as ``n/a`` — never silently coerced to 0.
"""

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from math import sqrt
from typing import Iterable, Optional

#: Headline precision/recall reported for the deployed detector's field
#: trial.  Reports cross-check count-derived metrics against these figures
#: and flag disagreement, because the counts behind them were never
#: published alongside the summary.
FIELD_REFERENCE = {"precision": 0.988, "recall": 0.936}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class PerformanceSummary:
    precision: Optional[float]
    recall: Optional[float]
    fdr: Optional[float]
    f1: Optional[float]
    mcc: Optional[float]


def precision(m: ConfusionMatrix) -> Optional[float]:
    """TP / (TP + FP); None when no positive predictions exist."""
    denom = m.tp + m.fp
    return m.tp / denom if denom else None


def recall(m: ConfusionMatrix) -> Optional[float]:
    """TP / (TP + FN); None when no actual positives exist."""
    denom = m.tp + m.fn
    return m.tp / denom if denom else None


def fdr(m: ConfusionMatrix) -> Optional[float]:
    """False discovery rate: 1 - precision, sharing its undefined cases."""
    p = precision(m)
    return None if p is None else 1.0 - p


def f1(p: float, r: float) -> Optional[float]:
    """Harmonic mean of precision and recall; None when p + r == 0."""
    if p + r == 0:
        return None
    return 2.0 * p * r / (p + r)


def mcc(m: ConfusionMatrix) -> Optional[float]:
    """Matthews correlation coefficient; None when any marginal is empty."""
    factors = (m.tp + m.fp, m.tp + m.fn, m.tn + m.fp, m.tn + m.fn)
    if 0 in factors:
        return None
    prod = 1.0
    for f in factors:
        prod *= f
    return (m.tp * m.tn - m.fp * m.fn) / sqrt(prod)


def aggregate(tallies: Iterable) -> ConfusionMatrix:
    """Component-wise sum of per-frame tallies (anything with tp/fp/fn/tn)."""
    total = ConfusionMatrix()
    for t in tallies:
        total = total + ConfusionMatrix(t.tp, t.fp, t.fn, t.tn)
    return total


def summarize(m: ConfusionMatrix) -> PerformanceSummary:
    p = precision(m)
    r = recall(m)
    score = f1(p, r) if p is not None and r is not None else None
    return PerformanceSummary(p, r, fdr(m), score, mcc(m))


def percent(value: Optional[float]) -> str:
    """Render a fraction as a percentage, half-up to one decimal."""
    if value is None:
        return "n/a"
    quantized = Decimal(repr(value * 100.0)).quantize(Decimal("0.1"), ROUND_HALF_UP)
    return f"{quantized}%"


def _plain(value: Optional[float], places: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{places}f}"


def summary_json(m: ConfusionMatrix) -> dict:
    """Machine-readable summary; metric keys are the stable contract."""
    s = summarize(m)
    return {
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn,
        "tn": m.tn,
        "precision": s.precision,
        "recall": s.recall,
        "fdr": s.fdr,
        "f1": s.f1,
        "mcc": s.mcc,
    }


def summary_report(m: ConfusionMatrix, reference: Optional[dict] = None) -> str:
    """Two-column performance table with an optional cross-check footer.

    When ``reference`` precision/recall are supplied (default: the field
    reference figures) and the count-derived values disagree after
    rounding, a footer spells the discrepancy out instead of hiding it.
    """
    if reference is None:
        reference = FIELD_REFERENCE
    s = summarize(m)
    rows = [
        ("Overall Precision", percent(s.precision)),
        ("Overall Recall", percent(s.recall)),
        ("Overall FDR", percent(s.fdr)),
        ("F1 Score", percent(s.f1)),
        ("MCC", _plain(s.mcc)),
    ]
    width = max(len(label) for label, _ in rows)
    lines = [
        f"Confusion matrix: TP={m.tp} FP={m.fp} FN={m.fn} TN={m.tn}",
        f"{'Type'.ljust(width)} | Result",
        f"{'-' * width}-+-------",
    ]
    lines += [f"{label.ljust(width)} | {value}" for label, value in rows]

    notes = []
    for key, getter in (("precision", s.precision), ("recall", s.recall)):
        ref = reference.get(key)
        if ref is None or getter is None:
            continue
        if percent(getter) != percent(ref):
            notes.append(
                f"note: count-derived {key} {percent(getter)} differs from the "
                f"reported field figure {percent(ref)}; the counts behind that "
                "figure were not published."
            )
    if notes:
        lines.append("")
        lines.extend(notes)
    return "\n".join(lines)
