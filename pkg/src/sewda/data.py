"""Synthetic source/target domain pairs with controllable shift, the four
training splits, and the dataset CSV format.

Source classes are Gaussian clusters on a circle in a low-dimensional
informative subspace, embedded in d_in dimensions with nuisance noise.
Target samples are fresh source-distribution draws pushed through a
rotate -> scale -> translate map, so the two domains share class semantics
but differ in marginal distribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import SeededRng

SPLIT_NAMES = ("ls", "lt", "ut", "val")

CSV_FIXED_COLUMNS = ("idx", "split", "domain", "label")


class DataFormatError(ValueError):
    """Raised for malformed dataset files or invariant violations."""


class LabelAccessError(RuntimeError):
    """Raised when training code touches labels it must not see."""


class LabeledSplit:
    """Feature/label/index arrays for one labeled split.

    Label reads go через the `y` property and are counted, so tests can assert
    that label-free training modes never touched them.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, idx: np.ndarray):
        self.x = np.asarray(x, dtype=np.float64)
        self._y = np.asarray(y, dtype=np.int64)
        self.idx = np.asarray(idx, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self._y.shape[0] or self._y.shape != self.idx.shape:
            raise DataFormatError("inconsistent split array shapes")
        self.label_reads = 0

    @property
    def y(self) -> np.ndarray:
        self.label_reads += 1
        return self._y

    def __len__(self) -> int:
        return self.x.shape[0]


class HiddenLabelSplit:
    """Unlabeled view of target data. True labels are retained for scoring but
    are not reachable as `.y`; evaluation reads them through a privileged
    accessor (evaluate.true_labels), which counts its reads."""

    def __init__(self, x: np.ndarray, y: np.ndarray, idx: np.ndarray):
        self.x = np.asarray(x, dtype=np.float64)
        self._hidden_y = np.asarray(y, dtype=np.int64)
        self.idx = np.asarray(idx, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self._hidden_y.shape[0] or self._hidden_y.shape != self.idx.shape:
            raise DataFormatError("inconsistent split array shapes")
        self.hidden_reads = 0

    @property
    def y(self):
        raise LabelAccessError("labels of the unlabeled target split are hidden from training code")

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class DatasetBundle:
    ls: LabeledSplit
    lt: LabeledSplit
    ut: HiddenLabelSplit
    val: LabeledSplit
    k: int
    d_in: int
    shots: int

    @property
    def n_source(self) -> int:
        return len(self.ls)


@dataclass
class GeneratorConfig:
    """Benchmark generator settings.

    `target_per_class` counts all target draws per class; `shots` of them go
    to the labeled split and `val_shots` to the held-out validation split,
    and the remainder forms the unlabeled split. The shift map acts on the
    informative subspace: rotation (degrees) in its first two axes, then
    per-axis scaling, then translation over all d_in coordinates.
    """

    k: int = 6
    d_in: int = 8
    informative_dims: int = 2
    source_per_class: int = 200
    target_per_class: int = 120
    shots: int = 3
    val_shots: int = 3
    rotation_deg: float = 50.0
    scale: tuple[float, ...] = (1.3, 0.8)
    translation: tuple[float, ...] = ()
    cluster_sigma: float = 0.8
    noise_sigma: float = 0.4
    centroid_radius: float = 4.0
    seed: int = 0

    def validate(self) -> None:
        if self.k < 2:
            raise ValueError("need at least two classes")
        if not 2 <= self.informative_dims <= self.d_in:
            raise ValueError("informative_dims must lie in [2, d_in]")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.val_shots < 1:
            raise ValueError("val_shots must be >= 1")
        if self.cluster_sigma <= 0:
            raise ValueError("cluster noise sigma must be > 0")
        if self.shots + self.val_shots > self.target_per_class:
            raise ValueError(
                f"shots ({self.shots}) + val_shots ({self.val_shots}) exceed "
                f"target_per_class ({self.target_per_class})"
            )
        if len(self.scale) not in (0, self.informative_dims):
            raise ValueError("scale must have one entry per informative dim")
        if len(self.translation) not in (0, self.d_in):
            raise ValueError("translation must have d_in entries when given")


def _centroids(cfg: GeneratorConfig, rng: SeededRng) -> np.ndarray:
    """Distinct class centroids in the informative plane.

    Positions are drawn in an annulus around the origin with a minimum
    pairwise separation, so classes are identifiable yet sit at different
    radii (a rotation shift then displaces them by different amounts, giving
    classes genuinely different adaptation difficulty). The separation bound
    relaxes geometrically if rejection sampling runs out of room.
    """
    r_lo, r_hi = 0.55 * cfg.centroid_radius, 1.45 * cfg.centroid_radius
    min_sep = max(3.0 * cfg.cluster_sigma, 0.45 * cfg.centroid_radius)
    while True:
        points: list[np.ndarray] = []
        for _ in range(cfg.k):
            placed = False
            for _attempt in range(200):
                radius = rng.uniform(r_lo, r_hi)
                angle = rng.uniform(0.0, 2.0 * math.pi)
                cand = np.array([radius * math.cos(angle), radius * math.sin(angle)])
                if all(np.linalg.norm(cand - p) >= min_sep for p in points):
                    points.append(cand)
                    placed = True
                    break
            if not placed:
                break
        if len(points) == cfg.k:
            break
        min_sep *= 0.85
    c = np.zeros((cfg.k, cfg.d_in))
    c[:, :2] = np.stack(points)
    return c


def _draw_class_samples(cfg: GeneratorConfig, centroid: np.ndarray, n: int, rng: SeededRng) -> np.ndarray:
    m = cfg.informative_dims
    x = np.tile(centroid, (n, 1))
    x[:, :m] += rng.normal(size=(n, m), scale=cfg.cluster_sigma)
    if cfg.d_in > m:
        x[:, m:] += rng.normal(size=(n, cfg.d_in - m), scale=cfg.noise_sigma)
    return x


def shift_map(cfg: GeneratorConfig, x: np.ndarray) -> np.ndarray:
    """Apply the domain shift: rotate (first two informative axes), then
    scale the informative axes, then translate."""
    out = np.array(x, dtype=np.float64)
    theta = math.radians(cfg.rotation_deg)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    out[:, :2] = out[:, :2] @ rot.T
    if cfg.scale:
        out[:, : cfg.informative_dims] *= np.asarray(cfg.scale)
    if cfg.translation:
        out += np.asarray(cfg.translation)
    return out


def generate(cfg: GeneratorConfig) -> DatasetBundle:
    """Deterministically generate the four splits for `cfg`."""
    cfg.validate()
    rng = SeededRng(cfg.seed).child("datagen")
    centroids = _centroids(cfg, rng)

    xs, ys = [], []
    for k in range(cfg.k):
        xs.append(_draw_class_samples(cfg, centroids[k], cfg.source_per_class, rng))
        ys.append(np.full(cfg.source_per_class, k))
    x_source = np.concatenate(xs)
    y_source = np.concatenate(ys)

    xt, yt = [], []
    for k in range(cfg.k):
        raw = _draw_class_samples(cfg, centroids[k], cfg.target_per_class, rng)
        xt.append(shift_map(cfg, raw))
        yt.append(np.full(cfg.target_per_class, k))
    x_target = np.concatenate(xt)
    y_target = np.concatenate(yt)

    n_s = x_source.shape[0]
    idx_source = np.arange(n_s)
    idx_target = n_s + np.arange(x_target.shape[0])

    lt_rows, val_rows, ut_rows = [], [], []
    for k in range(cfg.k):
        rows = np.nonzero(y_target == k)[0]
        lt_rows.append(rows[: cfg.shots])
        val_rows.append(rows[cfg.shots : cfg.shots + cfg.val_shots])
        ut_rows.append(rows[cfg.shots + cfg.val_shots :])
    lt_rows = np.concatenate(lt_rows)
    val_rows = np.concatenate(val_rows)
    ut_rows = np.concatenate(ut_rows)

    bundle = DatasetBundle(
        ls=LabeledSplit(x_source, y_source, idx_source),
        lt=LabeledSplit(x_target[lt_rows], y_target[lt_rows], idx_target[lt_rows]),
        ut=HiddenLabelSplit(x_target[ut_rows], y_target[ut_rows], idx_target[ut_rows]),
        val=LabeledSplit(x_target[val_rows], y_target[val_rows], idx_target[val_rows]),
        k=cfg.k,
        d_in=cfg.d_in,
        shots=cfg.shots,
    )
    validate_bundle(bundle)
    return bundle


def validate_bundle(bundle: DatasetBundle) -> None:
    """Enforce the bundle invariants; raises DataFormatError with the first
    violation found."""
    splits = {"ls": bundle.ls, "lt": bundle.lt, "ut": bundle.ut, "val": bundle.val}
    all_idx = np.concatenate([s.idx for s in splits.values()])
    if np.unique(all_idx).size != all_idx.size:
        raise DataFormatError("splits are not disjoint by sample index")
    for name, split in splits.items():
        if split.x.shape[1] != bundle.d_in:
            raise DataFormatError(f"split {name} has feature dimension {split.x.shape[1]}, expected {bundle.d_in}")
        if not np.all(np.isfinite(split.x)):
            raise DataFormatError(f"split {name} has non-finite features")
        labels = split._y if isinstance(split, LabeledSplit) else split._hidden_y
        if labels.size and (labels.min() < 0 or labels.max() >= bundle.k):
            raise DataFormatError(f"split {name} has labels outside 0..{bundle.k - 1}")

    source_counts = np.bincount(bundle.ls._y, minlength=bundle.k)
    missing = np.nonzero(source_counts == 0)[0]
    if missing.size:
        raise DataFormatError(f"class {missing[0]} has no source samples")
    lt_counts = np.bincount(bundle.lt._y, minlength=bundle.k)
    if not np.all(lt_counts == bundle.shots):
        bad = int(np.nonzero(lt_counts != bundle.shots)[0][0])
        raise DataFormatError(
            f"labeled target split must hold exactly {bundle.shots} samples per class; class {bad} has {lt_counts[bad]}"
        )
    target_labels = np.concatenate([bundle.lt._y, bundle.ut._hidden_y, bundle.val._y])
    target_classes = np.unique(target_labels)
    if target_classes.size != bundle.k:
        raise DataFormatError("target domain does not cover every class")


def save_csv(bundle: DatasetBundle, path) -> None:
    """Write the bundle in the documented CSV layout.

    Header: idx,split,domain,label,f0..f{d_in-1}. Unlabeled-target rows carry
    their hidden label so a round-trip preserves evaluability.
    """
    path = Path(path)
    header = list(CSV_FIXED_COLUMNS) + [f"f{j}" for j in range(bundle.d_in)]
    rows = []
    for split_name, split in (("ls", bundle.ls), ("lt", bundle.lt), ("ut", bundle.ut), ("val", bundle.val)):
        domain = "source" if split_name == "ls" else "target"
        labels = split._y if isinstance(split, LabeledSplit) else split._hidden_y
        for i in range(len(split)):
            rows.append(
                [int(split.idx[i]), split_name, domain, int(labels[i])] + [repr(float(v)) for v in split.x[i]]
            )
    rows.sort(key=lambda r: r[0])
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def load_csv(path) -> DatasetBundle:
    """Load a dataset CSV written in the documented layout and rebuild the
    four splits, enforcing the same invariants as generate()."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        for col in CSV_FIXED_COLUMNS:
            if col not in header:
                raise DataFormatError(f"{path}: missing column '{col}'")
        feat_cols = [c for c in header if c.startswith("f") and c[1:].isdigit()]
        d_in = len(feat_cols)
        if d_in == 0:
            raise DataFormatError(f"{path}: no feature columns f0..fN found")
        expected = list(CSV_FIXED_COLUMNS) + [f"f{j}" for j in range(d_in)]
        if header != expected:
            raise DataFormatError(f"{path}: header must be exactly {','.join(expected)}")

        per_split: dict[str, list] = {name: [] for name in SPLIT_NAMES}
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataFormatError(f"{path}:{line_no}: expected {len(expected)} fields, got {len(row)}")
            idx_s, split, domain, label_s = row[:4]
            if split not in SPLIT_NAMES:
                raise DataFormatError(f"{path}:{line_no}: unknown split '{split}'")
            if domain not in ("source", "target"):
                raise DataFormatError(f"{path}:{line_no}: unknown domain '{domain}'")
            if (split == "ls") != (domain == "source"):
                raise DataFormatError(f"{path}:{line_no}: split '{split}' is inconsistent with domain '{domain}'")
            try:
                idx = int(idx_s)
                label = int(label_s)
                feats = [float(v) for v in row[4:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line_no}: {exc}") from None
            per_split[split].append((idx, label, feats))

    for name in ("ls", "lt", "ut", "val"):
        if not per_split[name]:
            raise DataFormatError(f"{path}: split '{name}' has no rows")

    def arrays(name):
        rows = sorted(per_split[name], key=lambda r: r[0])
        idx = np.array([r[0] for r in rows], dtype=np.int64)
        y = np.array([r[1] for r in rows], dtype=np.int64)
        x = np.array([r[2] for r in rows], dtype=np.float64)
        return x, y, idx

    x_ls, y_ls, i_ls = arrays("ls")
    x_lt, y_lt, i_lt = arrays("lt")
    x_ut, y_ut, i_ut = arrays("ut")
    x_val, y_val, i_val = arrays("val")

    labels_all = np.concatenate([y_ls, y_lt, y_ut, y_val])
    if labels_all.min() < 0:
        raise DataFormatError(f"{path}: negative class id")
    k = int(labels_all.max()) + 1
    present = np.unique(labels_all)
    if present.size != k:
        missing = sorted(set(range(k)) - set(present.tolist()))
        raise DataFormatError(f"{path}: class ids are not contiguous, missing {missing}")

    lt_counts = np.bincount(y_lt, minlength=k)
    if np.any(lt_counts == 0):
        raise DataFormatError(f"{path}: class {int(np.argmin(lt_counts))} has no labeled target samples")
    shots = int(lt_counts[0])

    bundle = DatasetBundle(
        ls=LabeledSplit(x_ls, y_ls, i_ls),
        lt=LabeledSplit(x_lt, y_lt, i_lt),
        ut=HiddenLabelSplit(x_ut, y_ut, i_ut),
        val=LabeledSplit(x_val, y_val, i_val),
        k=k,
        d_in=d_in,
        shots=shots,
    )
    validate_bundle(bundle)
    return bundle

