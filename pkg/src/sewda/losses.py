"""Training loss terms, their time-gated composition, and the per-iteration
loss breakdown that gets logged.

Every term uses batch-mean reduction. The composite objective splits into a
non-adversarial part (pseudo-label, source, labeled-target cross-entropies)
and the unlabeled-entropy term, which the two parameter groups optimize with
opposite signs (see model.backward).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import LOG_EPS, cross_entropy, entropy, one_hot_rows

SOURCE_MODES = ("plain", "weighted", "focal", "off")


@dataclass
class LossSpec:
    """Which terms are active this iteration and with what parameters.

    The trainer derives one per iteration from (mode, t, T1, T2); tests build
    them directly to exercise single terms.
    """

    tau: float = 0.9
    lam: float = 0.1
    gamma: float = 2.0
    source_mode: str = "plain"
    use_pseudo: bool = True
    use_ult: bool = True
    use_lt: bool = False

    def __post_init__(self):
        if self.source_mode not in SOURCE_MODES:
            raise ValueError(f"unknown source_mode {self.source_mode!r}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass
class LossBreakdown:
    l_p: float = 0.0
    l_s: float = 0.0
    l_s_w: float = 0.0
    l_lt: float = 0.0
    l_ult: float = 0.0
    l1: float = 0.0
    pseudo_active: bool = False
    source_active: bool = False
    weighted_source_active: bool = False
    lt_active: bool = False
    ult_active: bool = False
    source_style: str = "plain"
    pseudo_count: int = 0

    def to_dict(self) -> dict:
        return {
            "l_p": self.l_p,
            "l_s": self.l_s,
            "l_s_w": self.l_s_w,
            "l_lt": self.l_lt,
            "l_ult": self.l_ult,
            "l1": self.l1,
            "pseudo_active": self.pseudo_active,
            "source_active": self.source_active,
            "weighted_source_active": self.weighted_source_active,
            "lt_active": self.lt_active,
            "ult_active": self.ult_active,
            "source_style": self.source_style,
            "pseudo_count": self.pseudo_count,
        }


def ce_rows(labels: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Per-example cross-entropy against integer labels."""
    y = one_hot_rows(labels, probs.shape[-1])
    return cross_entropy(y, probs)


def pseudo_label_gate(probs_weak: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Confidence mask (strict > tau) and argmax pseudo-labels of weak views."""
    probs_weak = np.atleast_2d(np.asarray(probs_weak, dtype=np.float64))
    mask = np.max(probs_weak, axis=-1) > tau
    labels = np.argmax(probs_weak, axis=-1)  # ties resolve to the lowest index
    return mask, labels


def confident_count(probs_weak: np.ndarray, tau: float) -> int:
    mask, _ = pseudo_label_gate(probs_weak, tau)
    return int(np.sum(mask))


def pseudo_label_loss(probs_weak: np.ndarray, probs_strong: np.ndarray, tau: float) -> float:
    """Mean over the batch of gate * H(onehot(argmax p_weak), p_strong).

    The pseudo-label is a constant: no gradient is attributed to the weak
    branch (see model.backward, which mirrors this term).
    """
    probs_weak = np.atleast_2d(probs_weak)
    probs_strong = np.atleast_2d(probs_strong)
    if probs_weak.shape != probs_strong.shape:
        raise ValueError("weak/strong probability batches must have matching shapes")
    if probs_weak.shape[0] == 0:
        return 0.0
    mask, labels = pseudo_label_gate(probs_weak, tau)
    return float(np.mean(mask * ce_rows(labels, probs_strong)))


def source_ce(labels: np.ndarray, probs: np.ndarray) -> float:
    """Mean cross-entropy of labeled source predictions."""
    probs = np.atleast_2d(probs)
    if probs.shape[0] == 0:
        return 0.0
    return float(np.mean(ce_rows(labels, probs)))


def weighted_source_ce(labels: np.ndarray, probs: np.ndarray, weights: np.ndarray) -> float:
    """Mean of w_i * H(y_i, p_i); with all weights 1 this is bit-identical to
    source_ce (identical per-row values and reduction order)."""
    probs = np.atleast_2d(probs)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != probs.shape[0]:
        raise ValueError("one weight per batch example required")
    if probs.shape[0] == 0:
        return 0.0
    return float(np.mean(weights * ce_rows(labels, probs)))


def labeled_target_ce(labels: np.ndarray, probs: np.ndarray) -> float:
    """Mean cross-entropy on labeled target examples (active after T2)."""
    return source_ce(labels, probs)


def unlabeled_entropy(probs_weak: np.ndarray) -> float:
    """Mean prediction entropy of weak-augmented unlabeled targets."""
    probs_weak = np.atleast_2d(probs_weak)
    if probs_weak.shape[0] == 0:
        return 0.0
    return float(np.mean(entropy(probs_weak)))


def focal_source_ce(labels: np.ndarray, probs: np.ndarray, gamma: float = 2.0) -> float:
    """Mean (1 - p_y)^gamma * (-log p_y); gamma=0 recovers source_ce."""
    probs = np.atleast_2d(probs)
    if probs.shape[0] == 0:
        return 0.0
    labels = np.asarray(labels, dtype=np.int64)
    p_y = probs[np.arange(probs.shape[0]), labels]
    return float(np.mean((1.0 - p_y) ** gamma * -np.log(np.maximum(p_y, LOG_EPS))))


def time_gates(t: float, t1: float, t2: float) -> tuple[bool, bool, bool]:
    """Indicator gates (plain source, weighted source, labeled target).

    Exactly one source branch is active at any t: plain strictly before T1,
    weighted from T1 on. Labeled targets join strictly after T2.
    """
    return t < t1, t >= t1, t > t2


@dataclass
class LossComponents:
    """Raw candidate term values before time gating."""

    l_p: float = 0.0
    l_s: float = 0.0
    l_s_w: float = 0.0
    l_lt: float = 0.0
    l_ult: float = 0.0
    pseudo_count: int = 0


def gated_l1(t: float, t1: float, t2: float, parts: LossComponents) -> LossBreakdown:
    """Compose the non-adversarial objective for iteration t.

    Inactive terms come out exactly 0 and flagged inactive; l1 is the sum of
    the active non-entropy terms.
    """
    gate_plain, gate_weighted, gate_lt = time_gates(t, t1, t2)
    out = LossBreakdown(
        l_p=parts.l_p,
        l_s=parts.l_s if gate_plain else 0.0,
        l_s_w=parts.l_s_w if gate_weighted else 0.0,
        l_lt=parts.l_lt if gate_lt else 0.0,
        l_ult=parts.l_ult,
        pseudo_active=True,
        source_active=gate_plain,
        weighted_source_active=gate_weighted,
        lt_active=gate_lt,
        ult_active=True,
        source_style="plain" if gate_plain else "weighted",
        pseudo_count=parts.pseudo_count,
    )
    out.l1 = out.l_p + out.l_s + out.l_s_w + out.l_lt
    return out
