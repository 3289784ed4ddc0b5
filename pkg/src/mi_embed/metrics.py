"""Binary attack metrics with member as the positive class.

Metrics are percentages. A metric whose denominator is zero is reported as
None (rendered "n/a") instead of being silently coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateDataError, DimensionMismatchError

_POSITIVE = {"member", 1, True, "1"}
_NEGATIVE = {"nonmember", 0, False, "0"}


@dataclass(frozen=True)
class MetricValues:
    accuracy: float | None
    precision: float | None
    recall: float | None


def _as_bool(value, name):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if value in _POSITIVE:
        return True
    if value in _NEGATIVE:
        return False
    raise DegenerateDataError(f"invalid {name} value {value!r}")


def confusion_counts(verdicts, labels) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with member as positive."""
    verdicts = list(verdicts)
    labels = list(labels)
    if not verdicts:
        raise DegenerateDataError("evaluate needs at least one verdict")
    if len(verdicts) != len(labels):
        raise DimensionMismatchError(
            f"{len(verdicts)} verdicts vs {len(labels)} labels"
        )
    tp = fp = tn = fn = 0
    for v, l in zip(verdicts, labels):
        pred = _as_bool(v, "verdict")
        truth = _as_bool(l, "label")
        if pred and truth:
            tp += 1
        elif pred and not truth:
            fp += 1
        elif not pred and truth:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def evaluate(verdicts, labels) -> MetricValues:
    """Accuracy, precision and recall in percent; member = positive class."""
    tp, fp, tn, fn = confusion_counts(verdicts, labels)
    n = tp + fp + tn + fn
    accuracy = 100.0 * (tp + tn) / n
    precision = 100.0 * tp / (tp + fp) if (tp + fp) > 0 else None
    recall = 100.0 * tp / (tp + fn) if (tp + fn) > 0 else None
    return MetricValues(accuracy, precision, recall)
