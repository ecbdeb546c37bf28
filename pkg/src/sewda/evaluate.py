"""Accuracy reports on any split (including the unlabeled target via its
hidden labels) and feature-embedding export for external plotting.

This module owns the only accessor for hidden labels; training code cannot
reach them through the split API.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetBundle, HiddenLabelSplit, LabeledSplit
from .model import ModelParams, features, predict_labels


def true_labels(split) -> np.ndarray:
    """Privileged label accessor for scoring; counts hidden-label reads."""
    if isinstance(split, HiddenLabelSplit):
        split.hidden_reads += 1
        return split._hidden_y
    if isinstance(split, LabeledSplit):
        return split._y
    raise TypeError(f"not a dataset split: {type(split)!r}")


@dataclass
class EvalReport:
    accuracy: float
    per_class: np.ndarray
    confusion: np.ndarray  # confusion[true, pred]
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": self.per_class.tolist(),
            "confusion": self.confusion.tolist(),
            "n": self.n,
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")


def evaluate_arrays(params: ModelParams, x: np.ndarray, y: np.ndarray, k: int) -> EvalReport:
    if x.shape[0] == 0:
        raise ValueError("cannot evaluate an empty split")
    preds = predict_labels(params, x)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (y, preds), 1)
    counts = confusion.sum(axis=1)
    per_class = np.ones(k)
    seen = counts > 0
    per_class[seen] = np.diag(confusion)[seen] / counts[seen]
    return EvalReport(
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_class=per_class,
        confusion=confusion,
        n=int(x.shape[0]),
    )


def evaluate(params: ModelParams, split, k: int) -> EvalReport:
    """Argmax accuracy, per-class accuracies, and confusion counts."""
    return evaluate_arrays(params, split.x, true_labels(split), k)


def export_embeddings(params: ModelParams, bundle: DatasetBundle, path) -> None:
    """CSV of features for every sample in the bundle.

    Header: idx,split,label,pred,correct,f0..f{d_f-1}; deterministic given
    the model and bundle.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx", "split", "label", "pred", "correct"] + [f"f{j}" for j in range(params.d_f)])
        for name, split in (("ls", bundle.ls), ("lt", bundle.lt), ("ut", bundle.ut), ("val", bundle.val)):
            labels = true_labels(split)
            preds = predict_labels(params, split.x)
            feats = features(params, split.x)
            for i in range(len(split)):
                writer.writerow(
                    [int(split.idx[i]), name, int(labels[i]), int(preds[i]), int(preds[i] == labels[i])]
                    + [repr(float(v)) for v in feats[i]]
                )
