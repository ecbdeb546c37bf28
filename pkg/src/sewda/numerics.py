"""Deterministic math kernel: stabilized softmax / entropy / cross-entropy,
cosine similarity, splittable seeded RNG streams, and a central-difference
gradient oracle.

All kernels are pure functions over float64 arrays and validate shapes on
every call. Batched inputs use the last axis as the distribution axis.
"""

from __future__ import annotations

import hashlib
from typing import Callable, Iterable

import numpy as np

# Floor for log arguments; keeps cross-entropy/entropy finite on saturated
# probabilities without visibly perturbing well-conditioned values.
LOG_EPS = 1e-12

# Norms below this are treated as zero in cosine similarity.
NORM_EPS = 1e-12

_zero_norm_events = 0


def zero_norm_count() -> int:
    """Number of cosine-similarity calls that hit a (near-)zero norm so far."""
    return _zero_norm_events


def reset_zero_norm_count() -> None:
    global _zero_norm_events
    _zero_norm_events = 0


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def softmax(logits) -> np.ndarray:
    """Stabilized softmax along the last axis.

    Accepts a vector or a batch of rows; never produces NaN for finite input.
    """
    z = _as_float_array(logits, "logits")
    if z.shape[-1] == 0:
        raise ValueError("softmax over dimension 0")
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _check_probs(p: np.ndarray) -> None:
    if np.any(p < -LOG_EPS):
        raise ValueError("probabilities must be nonnegative")
    sums = np.sum(p, axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-8):
        raise ValueError("probabilities must sum to 1 along the last axis")


def cross_entropy(target_onehot, probs):
    """-sum_k y_k log p_k with the log argument clamped at LOG_EPS.

    Vector inputs give a scalar; (B, K) inputs give a length-B array.
    """
    y = _as_float_array(target_onehot, "target")
    p = _as_float_array(probs, "probs")
    if y.shape != p.shape:
        raise ValueError(f"shape mismatch: target {y.shape} vs probs {p.shape}")
    _check_probs(p)
    ce = -np.sum(y * np.log(np.maximum(p, LOG_EPS)), axis=-1)
    return float(ce) if ce.ndim == 0 else ce


def entropy(probs):
    """Shannon entropy along the last axis, with 0*log 0 = 0."""
    p = _as_float_array(probs, "probs")
    if p.shape[-1] == 0:
        raise ValueError("entropy over dimension 0")
    _check_probs(p)
    h = -np.sum(p * np.log(np.maximum(p, LOG_EPS)), axis=-1)
    return float(h) if h.ndim == 0 else h


def cosine_similarity(u, v) -> float:
    """u.v / (|u||v|); returns 0 when either norm is below NORM_EPS.

    The zero-norm fallback keeps similarity queries well-defined for collapsed
    features; occurrences are tallied in zero_norm_count() as a debug signal.
    """
    global _zero_norm_events
    a = _as_float_array(u, "u")
    b = _as_float_array(v, "v")
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cosine_similarity needs equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < NORM_EPS or nb < NORM_EPS:
        _zero_norm_events += 1
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def colwise_cosine_similarity(mat, v) -> np.ndarray:
    """Cosine similarity of each column of `mat` (d, n) against vector `v` (d,).

    Zero-norm columns (or a zero-norm query) yield similarity 0, counted per
    occurrence like cosine_similarity.
    """
    global _zero_norm_events
    m = _as_float_array(mat, "mat")
    q = _as_float_array(v, "v")
    if m.ndim != 2 or q.ndim != 1 or m.shape[0] != q.shape[0]:
        raise ValueError(f"column/vector dimension mismatch: {m.shape} vs {q.shape}")
    col_norms = np.linalg.norm(m, axis=0)
    q_norm = np.linalg.norm(q)
    sims = np.zeros(m.shape[1])
    if q_norm < NORM_EPS:
        _zero_norm_events += m.shape[1]
        return sims
    ok = col_norms >= NORM_EPS
    _zero_norm_events += int(np.sum(~ok))
    sims[ok] = (m[:, ok].T @ q) / (col_norms[ok] * q_norm)
    return sims


def one_hot(index: int, k: int) -> np.ndarray:
    if not 0 <= index < k:
        raise ValueError(f"class index {index} out of range for K={k}")
    y = np.zeros(k)
    y[index] = 1.0
    return y


def one_hot_rows(indices, k: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise ValueError("class index out of range")
    rows = np.zeros((idx.shape[0], k))
    rows[np.arange(idx.shape[0]), idx] = 1.0
    return rows


def finite_diff_gradient(objective: Callable[[np.ndarray], float], params, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient oracle: (f(x+e) - f(x-e)) / 2e per coordinate.

    `objective` must be deterministic in `params` (freeze any RNG state before
    calling). Intended as the independent check for analytic gradients.
    """
    theta = np.array(params, dtype=np.float64)
    flat = theta.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = objective(theta)
        flat[i] = orig - eps
        f_minus = objective(theta)
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad.reshape(theta.shape)


def _tag_words(tags: Iterable) -> list[int]:
    words = []
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            words.append(int(tag) & 0xFFFFFFFFFFFFFFFF)
        elif isinstance(tag, str):
            digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
            words.append(int.from_bytes(digest, "little"))
        else:
            raise TypeError(f"rng stream tags must be int or str, got {type(tag)!r}")
    return words


class SeededRng:
    """Deterministic random stream with named, independent child streams.

    Identical seed and call sequence reproduce identical draws. Children are
    derived from (seed, tag path), so e.g. the augmentation stream is
    unaffected by how many draws batching consumed. Instances are
    single-owner; do not share one across concurrent consumers.
    """

    def __init__(self, seed: int, _words: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._words = tuple(_words)
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, *self._words]
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, *tags) -> "SeededRng":
        """Independent stream for (seed, existing tags, *tags)."""
        if not tags:
            raise ValueError("child() needs at least one tag")
        return SeededRng(self.seed, self._words + tuple(_tag_words(tags)))

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self.gen.normal(0.0, scale, size=size)

    def uniform(self, low: float, high: float, size=None):
        return self.gen.uniform(low, high, size=size)

    def random(self, size=None):
        return self.gen.random(size=size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, path={self._words})"
