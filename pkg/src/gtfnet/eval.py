"""Detection metrics (AUC, KS, best-F1) and the encoder-depth sweep.

All three metrics depend only on the score ordering (ties handled
explicitly), so they are invariant under strictly increasing transforms.
Thresholding convention: a node is predicted anomalous when score >= t, with
t drawn from the observed score values; best_f1 reports the maximum F1 and
the smallest threshold achieving it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import WindowedDataset
from .errors import ConfigError, ContractError, MetricUndefinedError
from .model import GtfModel, ModelDims, init_params, score_window
from .training import TrainConfig, train

__all__ = [
    "EvalReport",
    "best_f1",
    "depth_sweep",
    "evaluate",
    "ks_score",
    "roc_auc",
    "score_dataset",
    "zscore_max_baseline",
]


def _classes(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ContractError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if s.size == 0:
        raise ContractError("no scored points")
    if not np.all(np.isfinite(s)):
        raise ContractError("scores must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise MetricUndefinedError(
            f"metrics need both classes; got only label {int(y[0])}"
        )
    return s, y


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative.

    Ties count one half, which matches the trapezoidal area under the ROC
    curve. Computed from tie-averaged ranks (Mann-Whitney form).
    """
    s, y = _classes(scores, labels)
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    # average 1-based rank within each tie group; halves are exact in binary
    avg_rank = np.cumsum(counts) - (counts - 1) / 2.0
    ranks = avg_rank[inverse]
    p = int(y.sum())
    n = y.size - p
    return float((ranks[y == 1].sum() - p * (p + 1) / 2.0) / (p * n))


def ks_score(scores, labels) -> float:
    """Kolmogorov-Smirnov statistic: sup over thresholds of the gap between
    the positive and negative empirical CDFs. The sup is attained at an
    observed score, so a sorted merge over distinct values is exact."""
    s, y = _classes(scores, labels)
    pos = np.sort(s[y == 1])
    neg = np.sort(s[y == 0])
    grid = np.unique(s)
    f_pos = np.searchsorted(pos, grid, side="right") / pos.size
    f_neg = np.searchsorted(neg, grid, side="right") / neg.size
    return float(np.abs(f_pos - f_neg).max())


def best_f1(scores, labels) -> tuple[float, float]:
    """Max F1 over thresholds drawn from the observed scores.

    Predicts anomalous when score >= t. Returns (f1, threshold) with the
    smallest threshold achieving the maximum; F1 is defined as 0 when
    precision + recall is 0.
    """
    s, y = _classes(scores, labels)
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    ends = np.append(np.flatnonzero(np.diff(ss) != 0), ss.size - 1)
    tp = np.cumsum(yy)[ends]
    npred = ends + 1
    precision = tp / npred
    recall = tp / int(y.sum())
    denom = precision + recall
    f1 = np.zeros(ends.size)
    mask = denom > 0
    f1[mask] = 2.0 * precision[mask] * recall[mask] / denom[mask]
    best = f1.max()
    achieving = ss[ends][f1 == best]
    return float(best), float(achieving.min())


@dataclass(frozen=True)
class EvalReport:
    auc: float
    ks: float
    f1: float
    threshold: float
    positives: int
    negatives: int

    def __post_init__(self):
        for name in ("auc", "ks", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {v}")
        if self.positives < 1 or self.negatives < 1:
            raise ContractError("report needs at least one point of each class")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def evaluate(scores, labels) -> EvalReport:
    """All three metrics over aligned score/label sequences."""
    s, y = _classes(scores, labels)
    f1, threshold = best_f1(s, y)
    return EvalReport(
        auc=roc_auc(s, y),
        ks=ks_score(s, y),
        f1=f1,
        threshold=threshold,
        positives=int(y.sum()),
        negatives=int(y.size - y.sum()),
    )


def score_dataset(model: GtfModel, dataset: WindowedDataset) -> np.ndarray:
    """Score every (window, node) pair; returns a (windows, nodes) array."""
    out = np.empty((dataset.n_windows, dataset.n_nodes))
    for w in range(dataset.n_windows):
        snapshot, windows = dataset.entry(w)
        out[w] = [sn.score for sn in score_window(snapshot, windows, model)]
    return out


def zscore_max_baseline(dataset: WindowedDataset) -> np.ndarray:
    """Classical per-node baseline: max |z| over the window's samples/metrics.

    Expects an already normalized dataset so that |value| is a z magnitude.
    """
    if not dataset.normalized:
        raise ContractError("baseline expects a normalized dataset")
    out = np.empty((dataset.n_windows, dataset.n_nodes))
    for w in range(dataset.n_windows):
        lo = w * dataset.stride
        block = dataset.series[:, lo : lo + dataset.T, :]
        out[w] = np.abs(block).max(axis=(1, 2))
    return out


def depth_sweep(
    dataset: WindowedDataset,
    depths: Sequence[int],
    dims: ModelDims,
    config: TrainConfig,
) -> list[tuple[int, EvalReport]]:
    """Train one model per encoder depth on identical data and seed.

    Every other dimension and the training config are held fixed, so rows
    differ only in encoder depth; listing a depth twice yields identical
    rows (training is deterministic).
    """
    if not depths:
        raise ConfigError("depth sweep needs at least one depth")
    if dataset.labels is None:
        raise ContractError("depth sweep needs a labeled dataset")
    rows = []
    for depth in depths:
        model = init_params(dataclasses.replace(dims, depth=int(depth)), config.seed)
        train(model, dataset.entries(), config)
        scores = score_dataset(model, dataset)
        rows.append((int(depth), evaluate(scores.ravel(), dataset.labels.ravel())))
    return rows
