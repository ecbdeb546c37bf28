"""Weak and strong stochastic perturbations for vector samples, and the
augmented labeled-target set used for class-accuracy measurement.

Weak = small isotropic jitter. Strong = per-coordinate scaling, larger
jitter, then coordinate dropout. Both preserve labels by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledSplit
from .numerics import SeededRng


@dataclass
class AugmentPolicy:
    sigma_weak: float = 0.05
    sigma_strong: float = 0.25
    p_drop: float = 0.15
    scale_lo: float = 0.7
    scale_hi: float = 1.3

    def __post_init__(self):
        # sigma_strong >= sigma_weak (equality admits the identity policy used
        # by tests; real policies keep the strong side strictly larger).
        if not 0.0 <= self.sigma_weak <= self.sigma_strong:
            raise ValueError("need 0 <= sigma_weak <= sigma_strong")
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must lie in [0, 1)")
        if not 0.0 < self.scale_lo <= 1.0 <= self.scale_hi:
            raise ValueError("scale range must satisfy 0 < lo <= 1 <= hi")


def weak(x: np.ndarray, policy: AugmentPolicy, rng: SeededRng) -> np.ndarray:
    """x + N(0, sigma_weak^2 I); accepts a vector or a (B, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    return x + policy.sigma_weak * rng.normal(size=x.shape)


def strong(x: np.ndarray, policy: AugmentPolicy, rng: SeededRng) -> np.ndarray:
    """Per-coordinate uniform scale, then jitter, then coordinate dropout."""
    x = np.asarray(x, dtype=np.float64)
    scale = rng.uniform(policy.scale_lo, policy.scale_hi, size=x.shape)
    out = x * scale + policy.sigma_strong * rng.normal(size=x.shape)
    keep = rng.random(size=x.shape) >= policy.p_drop
    return out * keep


@dataclass
class AugmentedLabeledTargets:
    """Labeled targets together with their weak/strong augmented copies.

    Size is n_t * (1 + n_weak + n_strong); every row keeps its originator's
    label and original sample position.
    """

    x: np.ndarray
    y: np.ndarray
    origin: np.ndarray  # row position in the source LabeledSplit

    def __len__(self) -> int:
        return self.x.shape[0]


def build_lt_a(lt: LabeledSplit, policy: AugmentPolicy, n_weak: int, n_strong: int, rng: SeededRng) -> AugmentedLabeledTargets:
    if len(lt) == 0:
        raise ValueError("labeled target split is empty")
    if n_weak < 0 or n_strong < 0:
        raise ValueError("copy counts must be nonnegative")
    blocks = [lt.x]
    for _ in range(n_weak):
        blocks.append(weak(lt.x, policy, rng))
    for _ in range(n_strong):
        blocks.append(strong(lt.x, policy, rng))
    reps = 1 + n_weak + n_strong
    labels = lt.y  # counted read; augmentation preserves labels
    return AugmentedLabeledTargets(
        x=np.concatenate(blocks, axis=0),
        y=np.tile(labels, reps),
        origin=np.tile(np.arange(len(lt)), reps),
    )
