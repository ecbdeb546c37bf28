"""Momentum-averaged source feature bank: one column per source sample,
updated batch-wise on the fly, queried class-wise by cosine similarity.

Columns store raw (unnormalized) features; normalization happens inside the
cosine query so momentum averaging keeps its usual semantics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledSplit
from .model import ModelParams, features
from .numerics import colwise_cosine_similarity


@dataclass
class ClassSimilarities:
    """Similarities of one class's source columns against a target feature,
    sorted ascending by similarity."""

    positions: np.ndarray  # source row positions, aligned with sims
    sims: np.ndarray
    min_sim: float
    max_sim: float


class FeatureBank:
    def __init__(self, d_f: int, class_ids: np.ndarray):
        self.class_ids = np.asarray(class_ids, dtype=np.int64)
        self.s = np.zeros((d_f, self.class_ids.shape[0]))
        self.initialized = np.zeros(self.class_ids.shape[0], dtype=bool)

    @property
    def n_columns(self) -> int:
        return self.s.shape[1]

    def copy(self) -> "FeatureBank":
        out = FeatureBank(self.s.shape[0], self.class_ids)
        out.s = self.s.copy()
        out.initialized = self.initialized.copy()
        return out


def new_bank(d_f: int, source: LabeledSplit) -> FeatureBank:
    """Zero bank with class ids taken from the labeled source split."""
    return FeatureBank(d_f, source._y)


def refresh_full(bank: FeatureBank, params: ModelParams, source: LabeledSplit) -> FeatureBank:
    """Set every column to the current feature of its source sample."""
    if len(source) != bank.n_columns:
        raise ValueError("bank width does not match the source split")
    bank.s[...] = features(params, source.x).T
    bank.initialized[...] = True
    return bank


def momentum_update(bank: FeatureBank, positions: np.ndarray, batch_features: np.ndarray, m_s: float) -> FeatureBank:
    """s_i <- m_s * s_i + (1 - m_s) * f_i for the given columns only."""
    positions = np.asarray(positions, dtype=np.int64)
    feats = np.atleast_2d(np.asarray(batch_features, dtype=np.float64))
    if positions.size and (positions.min() < 0 or positions.max() >= bank.n_columns):
        raise IndexError("bank column index out of range")
    if feats.shape != (positions.shape[0], bank.s.shape[0]):
        raise ValueError("batch feature shape does not match bank feature dimension")
    if not 0.0 <= m_s <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    bank.s[:, positions] = m_s * bank.s[:, positions] + (1.0 - m_s) * feats.T
    bank.initialized[positions] = True
    return bank


def class_similarities(bank: FeatureBank, class_id: int, target_feature: np.ndarray) -> ClassSimilarities:
    """Cosine similarity of every stored class member against a target
    feature, with the set's min and max."""
    positions = np.nonzero(bank.class_ids == class_id)[0]
    if positions.size == 0:
        raise ValueError(f"class {class_id} has no source samples in the bank")
    sims = colwise_cosine_similarity(bank.s[:, positions], np.asarray(target_feature, dtype=np.float64))
    order = np.argsort(sims, kind="stable")
    sims = sims[order]
    return ClassSimilarities(
        positions=positions[order],
        sims=sims,
        min_sim=float(sims[0]),
        max_sim=float(sims[-1]),
    )


def dump_csv(bank: FeatureBank, path) -> None:
    """Debug dump: one row per source column (position,class,init,s0..s{d_f-1})."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "class", "initialized"] + [f"s{j}" for j in range(bank.s.shape[0])])
        for i in range(bank.n_columns):
            writer.writerow(
                [i, int(bank.class_ids[i]), int(bank.initialized[i])] + [repr(float(v)) for v in bank.s[:, i]]
            )
