"""Class-wise adaptation measurement and source-example loss weights.

The accuracy vector scores each class on the augmented labeled targets; per
class, source samples are weighted linearly between class-specific bounds
according to their bank-feature similarity to that class's labeled targets.
Low-accuracy classes get a wider weight band (bounds 1 +- phi / exp(a_k)), so
poorly adapted classes are steered harder: near source samples up-weighted,
far ones down-weighted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import AugmentedLabeledTargets
from .bank import FeatureBank, class_similarities
from .data import LabeledSplit
from .model import ModelParams, features, predict_labels


@dataclass
class AccuracyVector:
    acc: np.ndarray  # (k,) in [0, 1]
    counts: np.ndarray  # (k,) evaluated examples per class

    def to_dict(self) -> dict:
        return {"acc": self.acc.tolist(), "counts": self.counts.tolist()}


@dataclass
class WeightTable:
    """Per-source-sample loss weights, aligned with source row positions.

    `mean_sim` keeps the across-target mean similarity actually used, for
    audit dumps; it is NaN where no similarity was computed.
    """

    w: np.ndarray
    accuracy: AccuracyVector | None = None
    phi: float | None = None
    created_t: int = -1
    mean_sim: np.ndarray | None = None

    @classmethod
    def neutral(cls, n_source: int) -> "WeightTable":
        return cls(w=np.ones(n_source))

    def weights_for(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and (positions.min() < 0 or positions.max() >= self.w.shape[0]):
            raise IndexError("weight table has no entry for a requested source index")
        return self.w[positions]

    def stats(self) -> dict:
        return {
            "weight_mean": float(np.mean(self.w)),
            "weight_min": float(np.min(self.w)),
            "weight_max": float(np.max(self.w)),
        }

    def dump_csv(self, source: LabeledSplit, path) -> None:
        sims = self.mean_sim if self.mean_sim is not None else np.full_like(self.w, np.nan)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["idx", "class", "similarity", "weight"])
            for pos in range(self.w.shape[0]):
                writer.writerow([int(source.idx[pos]), int(source._y[pos]), repr(float(sims[pos])), repr(float(self.w[pos]))])


def class_accuracy(params: ModelParams, lt_a: AugmentedLabeledTargets, k: int | None = None) -> AccuracyVector:
    """Per-class argmax accuracy on the augmented labeled targets.

    Classes with no evaluated examples score 1 (treated as fully adapted;
    they also keep neutral weights downstream).
    """
    if len(lt_a) == 0:
        raise ValueError("augmented labeled target set is empty")
    k = k if k is not None else params.k
    preds = predict_labels(params, lt_a.x)
    counts = np.bincount(lt_a.y, minlength=k)
    correct = np.bincount(lt_a.y[preds == lt_a.y], minlength=k)
    acc = np.ones(k)
    seen = counts > 0
    acc[seen] = correct[seen] / counts[seen]
    return AccuracyVector(acc=acc, counts=counts)


def class_weight_bounds(a_k: float, phi: float) -> tuple[float, float]:
    """(max_w, min_w) = 1 +- phi / exp(a_k)."""
    if phi < 0:
        raise ValueError("phi must be >= 0")
    if not 0.0 <= a_k <= 1.0:
        raise ValueError("class accuracy must lie in [0, 1]")
    spread = phi / np.exp(a_k)
    return 1.0 + spread, 1.0 - spread


def _per_target_weights(sims: np.ndarray, max_w: float, min_w: float) -> np.ndarray:
    min_sim = float(np.min(sims))
    max_sim = float(np.max(sims))
    if max_sim == min_sim:
        # degenerate similarity set: the linear map is undefined, stay neutral
        return np.ones_like(sims)
    slope = (max_w - min_w) / (max_sim - min_sim)
    return slope * (sims - min_sim) + min_w


def compute_weights(
    accuracy: AccuracyVector,
    bank: FeatureBank,
    params: ModelParams,
    lt: LabeledSplit,
    phi: float,
    created_t: int = -1,
) -> WeightTable:
    """Linear similarity-to-weight map per class, averaged over that class's
    labeled targets when there is more than one."""
    if len(lt) == 0:
        raise ValueError("labeled target split is empty")
    n_source = bank.n_columns
    w = np.ones(n_source)
    mean_sim = np.full(n_source, np.nan)
    lt_labels = lt.y
    for k in np.unique(lt_labels):
        max_w, min_w = class_weight_bounds(float(accuracy.acc[k]), phi)
        target_rows = np.nonzero(lt_labels == k)[0]
        per_target_w = []
        per_target_sim = []
        positions = None
        for row in target_rows:
            f_t = features(params, lt.x[row])
            cs = class_similarities(bank, int(k), f_t)
            order = np.argsort(cs.positions, kind="stable")  # realign to position order
            positions = cs.positions[order]
            sims = cs.sims[order]
            per_target_w.append(_per_target_weights(sims, max_w, min_w))
            per_target_sim.append(sims)
        w[positions] = np.mean(per_target_w, axis=0)
        mean_sim[positions] = np.mean(per_target_sim, axis=0)
    return WeightTable(w=w, accuracy=accuracy, phi=phi, created_t=created_t, mean_sim=mean_sim)


def fixed_weights(
    bank: FeatureBank,
    params: ModelParams,
    lt: LabeledSplit,
    w_near: float = 1.5,
    w_far: float = 0.5,
    created_t: int = -1,
) -> WeightTable:
    """Ablation table: per class, samples above the median similarity get
    w_near, the rest w_far (ties count as far)."""
    if len(lt) == 0:
        raise ValueError("labeled target split is empty")
    n_source = bank.n_columns
    w = np.ones(n_source)
    mean_sim = np.full(n_source, np.nan)
    lt_labels = lt.y
    for k in np.unique(lt_labels):
        target_rows = np.nonzero(lt_labels == k)[0]
        sims_acc = []
        positions = None
        for row in target_rows:
            f_t = features(params, lt.x[row])
            cs = class_similarities(bank, int(k), f_t)
            order = np.argsort(cs.positions, kind="stable")
            positions = cs.positions[order]
            sims_acc.append(cs.sims[order])
        sims = np.mean(sims_acc, axis=0)
        median = np.median(sims)
        w[positions] = np.where(sims > median, w_near, w_far)
        mean_sim[positions] = sims
    return WeightTable(w=w, accuracy=None, phi=None, created_t=created_t, mean_sim=mean_sim)


def clamp_near_only(table: WeightTable) -> WeightTable:
    """Keep up-weighting only: every weight below 1 becomes 1."""
    return WeightTable(
        w=np.maximum(table.w, 1.0),
        accuracy=table.accuracy,
        phi=table.phi,
        created_t=table.created_t,
        mean_sim=table.mean_sim,
    )


def clamp_far_only(table: WeightTable) -> WeightTable:
    """Keep down-weighting only: every weight above 1 becomes 1."""
    return WeightTable(
        w=np.minimum(table.w, 1.0),
        accuracy=table.accuracy,
        phi=table.phi,
        created_t=table.created_t,
        mean_sim=table.mean_sim,
    )
