"""Correlation, error and ranking metrics plus significance tests."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc

from .errors import UndefinedMetricError

RATING, RANKING = "rating", "ranking"


@dataclass
class MetricReport:
    metrics: dict
    n: int
    task: str

    def __post_init__(self):
        for k, v in self.metrics.items():
            if not math.isfinite(v):
                raise ValueError(f"metric {k} is not finite: {v}")

    def __getitem__(self, key):
        return self.metrics[key]

    def to_json(self) -> dict:
        out = {"task": self.task, "n": self.n}
        out.update(self.metrics)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "MetricReport":
        obj = dict(obj)
        task, n = obj.pop("task"), obj.pop("n")
        return cls({k: float(v) for k, v in obj.items()}, int(n), task)


@dataclass
class PairedPredictions:
    """Aligned evaluation data.

    For ratings, ``predictions`` and ``golds`` hold scores. For rankings,
    ``margins`` hold score(preferred) - score(other) per instance.
    """

    task: str
    predictions: Optional[np.ndarray] = None
    golds: Optional[np.ndarray] = None
    margins: Optional[np.ndarray] = None
    ids: list = field(default_factory=list)

    @property
    def correct(self) -> np.ndarray:
        return np.asarray(self.margins) > 0


def _pair(xs, ys):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return x, y


def pearson(xs, ys) -> float:
    x, y = _pair(xs, ys)
    if x.size < 2:
        raise UndefinedMetricError("correlation needs at least 2 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise UndefinedMetricError("correlation undefined for zero variance")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size)
    sorted_v = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    x, y = _pair(xs, ys)
    return pearson(average_ranks(x), average_ranks(y))


def mae(preds, golds) -> float:
    p, g = _pair(preds, golds)
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(p - g)))


def rmse(preds, golds) -> float:
    p, g = _pair(preds, golds)
    if p.size == 0:
        raise ValueError("empty input")
    return float(math.sqrt(np.mean((p - g) ** 2)))


def ranking_accuracy(margins) -> float:
    """Fraction of instances whose preferred output scored strictly higher."""
    m = np.asarray(margins, dtype=np.float64)
    if m.size == 0:
        raise ValueError("empty input")
    return float(np.mean(m > 0))


def mean_ranking_loss(margins, over: str = "wrong") -> float:
    """Mean of ``-margin`` over wrongly ranked instances (ties included).

    ``over="all"`` averages the same per-instance loss (zero for correct
    instances) over every instance instead.
    """
    m = np.asarray(margins, dtype=np.float64)
    if m.size == 0:
        raise ValueError("empty input")
    wrong = m <= 0
    if over == "all":
        return float(np.sum(-m[wrong]) / m.size)
    if over != "wrong":
        raise ValueError(f"unknown averaging {over!r}")
    return float(np.mean(-m[wrong])) if wrong.any() else 0.0


def rating_report(preds, golds) -> MetricReport:
    p, g = _pair(preds, golds)
    metrics = {"mae": mae(p, g), "rmse": rmse(p, g)}
    for name, fn in (("pearson", pearson), ("spearman", spearman)):
        try:
            metrics[name] = fn(p, g)
        except UndefinedMetricError:
            pass
    return MetricReport(metrics, int(p.size), RATING)


def ranking_report(margins) -> MetricReport:
    m = np.asarray(margins, dtype=np.float64)
    return MetricReport(
        {"accuracy": ranking_accuracy(m), "mean_ranking_loss": mean_ranking_loss(m)}, int(m.size), RANKING
    )


def constant_baseline(golds, constant: Optional[float] = None) -> MetricReport:
    """MAE/RMSE of predicting one constant (default: the mean of ``golds``)."""
    g = np.asarray(golds, dtype=np.float64)
    if g.size == 0:
        raise ValueError("empty input")
    c = float(g.mean()) if constant is None else float(constant)
    p = np.full_like(g, c)
    return MetricReport({"mae": mae(p, g), "rmse": rmse(p, g)}, int(g.size), RATING)


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t via the regularised incomplete beta."""
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(tail if t >= 0 else 1.0 - tail)


def williams_test(r12: float, r13: float, r23: float, n: int):
    """Williams test for two dependent correlations sharing variable 1.

    Tests H1: r12 > r13 (one-tailed). Returns ``(t, p)``.
    """
    if n < 4:
        raise ValueError("Williams test needs n >= 4")
    for r in (r12, r13, r23):
        if not -1.0 < r < 1.0:
            raise ValueError("correlations must lie in (-1, 1)")
    K = 1 - r12 ** 2 - r13 ** 2 - r23 ** 2 + 2 * r12 * r13 * r23
    if K <= 0:
        raise ValueError("degenerate correlation matrix (K <= 0)")
    rbar = (r12 + r13) / 2.0
    denom = 2 * K * (n - 1) / (n - 3) + rbar ** 2 * (1 - r23) ** 3
    t = (r12 - r13) * math.sqrt((n - 1) * (1 + r23) / denom)
    return float(t), t_sf(t, n - 3)


def williams_from_predictions(human, pred_a, pred_b):
    """Williams test of whether system A correlates better with human scores than B."""
    return williams_test(pearson(human, pred_a), pearson(human, pred_b), pearson(pred_a, pred_b), len(human))


def bootstrap_compare(outcomes_a, outcomes_b, n_resamples: int = 1000, rng=None) -> float:
    """Paired bootstrap p-value for H1: system A is more accurate than B.

    Outcomes are per-instance correctness values (booleans or fractions).
    Returns the share of resamples in which A's accuracy is not above B's.
    """
    a, b = _pair(outcomes_a, outcomes_b)
    if a.size == 0:
        raise ValueError("empty outcomes")
    rng = np.random.default_rng(rng)
    idx = rng.integers(0, a.size, size=(n_resamples, a.size))
    return float(np.mean(a[idx].mean(axis=1) <= b[idx].mean(axis=1)))
