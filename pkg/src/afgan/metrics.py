"""Accuracy, average precision and AUROC with fake as the positive class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray  # 1 = fake (positive), 0 = real

    def __init__(self, scores, labels):
        self.scores = np.asarray(scores, dtype=np.float64).ravel()
        self.labels = np.asarray(labels).astype(np.int64).ravel()
        if self.scores.shape != self.labels.shape:
            raise ValueError(f"{self.scores.size} scores but {self.labels.size} labels")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 (real) or 1 (fake)")

    def __len__(self) -> int:
        return self.scores.size

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos


def accuracy(s: ScoredSet, threshold: float = 0.5) -> float:
    if len(s) == 0:
        raise ValueError("accuracy of an empty set")
    pred = (s.scores >= threshold).astype(np.int64)
    return float((pred == s.labels).mean())


def average_precision(s: ScoredSet) -> float:
    """Mean of precision@rank over the ranks of positives (stable tie order)."""
    if s.n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-s.scores, kind="stable")
    hits = s.labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits == 1].sum() / s.n_pos)


def auroc(s: ScoredSet) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via midranks (Mann-Whitney U)."""
    if s.n_pos == 0 or s.n_neg == 0:
        raise ValueError("AUROC needs both positives and negatives")
    ranks = _midranks(s.scores)
    u = ranks[s.labels == 1].sum() - s.n_pos * (s.n_pos + 1) / 2.0
    return float(u / (s.n_pos * s.n_neg))


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    # group boundaries of equal values
    edges = np.flatnonzero(np.diff(sorted_x)) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [len(x)]))
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = (a + b + 1) / 2.0
    return ranks


def summarize(s: ScoredSet, threshold: float = 0.5) -> dict[str, float]:
    return {
        "n": len(s),
        "accuracy": accuracy(s, threshold),
        "average_precision": average_precision(s),
        "auroc": auroc(s),
    }


REPORT_COLUMNS = ("source_tag", "n", "accuracy", "average_precision", "auroc")


def source_report(
    real_scores: np.ndarray, fake_scores: dict[str, np.ndarray], threshold: float = 0.5
) -> list[dict]:
    """One row per fake source (reals vs that source), then a ``mean`` row.

    The mean row averages the metric columns over sources; its ``n`` counts
    every scored image once.
    """
    if not fake_scores:
        raise ValueError("report needs at least one fake source")
    real_scores = np.asarray(real_scores, dtype=np.float64)
    rows = []
    for tag in sorted(fake_scores):
        fake = np.asarray(fake_scores[tag], dtype=np.float64)
        s = ScoredSet(np.r_[real_scores, fake], np.r_[np.zeros(len(real_scores)), np.ones(len(fake))])
        rows.append({"source_tag": tag, **summarize(s, threshold)})
    mean = {k: float(np.mean([r[k] for r in rows])) for k in REPORT_COLUMNS[2:]}
    n_all = len(real_scores) + sum(len(v) for v in fake_scores.values())
    rows.append({"source_tag": "mean", "n": n_all, **mean})
    return rows


def format_report(rows: list[dict]) -> str:
    lines = [",".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r['source_tag']},{int(r['n'])},{r['accuracy']:.6f},{r['average_precision']:.6f},{r['auroc']:.6f}"
        )
    return "\n".join(lines) + "\n"
