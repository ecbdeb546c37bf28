"""The full training loop: self-training UDA from the start, similarity-based
source weighting once validation accuracy first converges (T1), labeled-target
supervision once it converges again (T2).

Every run is a deterministic function of its RunConfig: data generation,
parameter init, batching, and augmentation draw from independent streams
derived from the run seed, and weight recomputation uses streams keyed by
(seed, iteration) so it never perturbs the main draw sequence.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import AugmentPolicy, build_lt_a, strong, weak
from .bank import FeatureBank, momentum_update, new_bank, refresh_full
from .data import DatasetBundle, GeneratorConfig, generate, load_csv
from .evaluate import evaluate
from .losses import LossSpec, time_gates
from .model import (
    ModelParams,
    OptimizerState,
    TrainBatch,
    backward,
    features,
    init_params,
    save_checkpoint,
    sgd_step,
)
from .numerics import SeededRng
from .weighting import (
    WeightTable,
    class_accuracy,
    clamp_far_only,
    clamp_near_only,
    compute_weights,
    fixed_weights,
)

MODES = (
    "predguide",
    "s_plus_t",
    "uda_only",
    "no_weights",
    "fixed_weights",
    "near_only",
    "far_only",
    "focal",
)

# Modes that recompute a weight table every T_n iterations.
WEIGHT_COMPUTING_MODES = ("predguide", "fixed_weights", "near_only", "far_only")
# Modes that run the full phase schedule (source branch switches at T1).
ADAPTATION_MODES = WEIGHT_COMPUTING_MODES + ("no_weights", "focal")


class TrainingDiverged(RuntimeError):
    def __init__(self, t: int, diagnostic: dict):
        super().__init__(f"non-finite loss at iteration {t}")
        self.t = t
        self.diagnostic = diagnostic


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    data_csv: str | None = None
    data_seed: int | None = None  # None: dataset follows the run seed
    hidden: int = 32
    d_f: int = 16
    normalize_features: bool = False
    feature_temperature: float = 0.05
    lr: float = 0.01
    lr_decay: bool = False  # inverse decay lr * (1 + 1e-4 t)^-0.75; constant lr by default
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lam: float = 0.1
    tau: float = 0.9
    phi: float = 0.5
    gamma: float = 2.0
    m_s: float = 0.1
    iterations: int = 4000
    t_n: int = 200
    eval_every: int = 10
    patience: int = 50  # convergence window, counted in evaluations
    target_eval_every: int = 100
    batch_source: int = 16
    batch_unlabeled: int = 32  # twice the labeled batch by default
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    n_weak: int = 4
    n_strong: int = 4
    mode: str = "predguide"
    seed: int = 0
    t1: int | None = None  # pin instead of auto-detecting
    t2: int | None = None
    dump_weights: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("lr", "iterations", "t_n", "eval_every", "patience", "batch_source", "batch_unlabeled"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.m_s <= 1.0:
            raise ValueError("m_s must lie in [0, 1]")
        if self.phi < 0:
            raise ValueError("phi must be >= 0")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.t1 is not None and self.t2 is not None and self.t1 > self.t2:
            raise ValueError("pinned t1 must not exceed pinned t2")


class ConvergenceDetector:
    """Fires on the first evaluation whose no-improvement streak reaches the
    window ("accuracy has not increased for `window` evaluations")."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.best = -math.inf
        self.streak = 0

    def update(self, val_acc: float) -> bool:
        if val_acc > self.best:
            self.best = val_acc
            self.streak = 0
            return False
        self.streak += 1
        return self.streak >= self.window


def detect_convergence(detector: ConvergenceDetector, val_acc: float) -> bool:
    return detector.update(val_acc)


@dataclass
class RunResult:
    mode: str
    seed: int
    phi: float
    t1: int | None
    t2: int | None
    iterations: int
    final_accuracy: float
    per_class: list
    wall_clock_s: float
    params: ModelParams | None = field(default=None, repr=False)  # in-process convenience, not serialized

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "phi": self.phi,
            "t1": self.t1,
            "t2": self.t2,
            "iterations": self.iterations,
            "final_accuracy": self.final_accuracy,
            "per_class": self.per_class,
            "wall_clock_s": self.wall_clock_s,
        }


@dataclass
class TrainerState:
    cfg: RunConfig
    bundle: DatasetBundle
    params: ModelParams
    opt: OptimizerState
    bank: FeatureBank
    table: WeightTable
    rng_batch: SeededRng
    rng_aug: SeededRng
    pool_x: np.ndarray  # unlabeled features: D_ut plus labeled targets sans labels
    t: int = 0
    t1: int | None = None
    t2: int | None = None
    detector: ConvergenceDetector | None = None
    bank_refreshed: bool = False
    out_dir: Path | None = None
    last_batch: TrainBatch | None = None  # the batch the most recent step trained on
    last_spec: LossSpec | None = None


def load_bundle(cfg: RunConfig) -> DatasetBundle:
    if cfg.data_csv is not None:
        return load_csv(cfg.data_csv)
    seed = cfg.seed if cfg.data_seed is None else cfg.data_seed
    return generate(replace(cfg.generator, seed=seed))


def init_state(cfg: RunConfig, bundle: DatasetBundle | None = None, out_dir=None) -> TrainerState:
    cfg.validate()
    if bundle is None:
        bundle = load_bundle(cfg)
    rng = SeededRng(cfg.seed)
    params = init_params(
        bundle.d_in,
        cfg.hidden,
        cfg.d_f,
        bundle.k,
        rng.child("init"),
        normalize_features=cfg.normalize_features,
        feature_temperature=cfg.feature_temperature,
    )
    state = TrainerState(
        cfg=cfg,
        bundle=bundle,
        params=params,
        opt=OptimizerState(lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay),
        bank=new_bank(cfg.d_f, bundle.ls),
        table=WeightTable.neutral(len(bundle.ls)),
        rng_batch=rng.child("batch"),
        rng_aug=rng.child("augment"),
        pool_x=np.concatenate([bundle.ut.x, bundle.lt.x], axis=0),
        t1=cfg.t1,
        t2=cfg.t2,
        detector=ConvergenceDetector(cfg.patience),
        out_dir=Path(out_dir) if out_dir is not None else None,
    )
    return state


def _effective(threshold: int | None) -> float:
    return math.inf if threshold is None else threshold


def phase_of(t: int, t1: int | None, t2: int | None) -> int:
    if t < _effective(t1):
        return 1
    return 2 if t <= _effective(t2) else 3


def loss_spec_for(cfg: RunConfig, t: int, t1: int | None, t2: int | None) -> LossSpec:
    """Resolve mode and schedule into the active term set for iteration t."""
    if cfg.mode == "s_plus_t":
        return LossSpec(tau=cfg.tau, lam=0.0, gamma=cfg.gamma, source_mode="plain",
                        use_pseudo=False, use_ult=False, use_lt=True)
    if cfg.mode == "uda_only":
        return LossSpec(tau=cfg.tau, lam=cfg.lam, gamma=cfg.gamma, source_mode="plain",
                        use_pseudo=True, use_ult=True, use_lt=False)
    gate_plain, _, gate_lt = time_gates(t, _effective(t1), _effective(t2))
    if gate_plain:
        source_mode = "plain"
    else:
        source_mode = "focal" if cfg.mode == "focal" else "weighted"
    return LossSpec(tau=cfg.tau, lam=cfg.lam, gamma=cfg.gamma, source_mode=source_mode,
                    use_pseudo=True, use_ult=True, use_lt=gate_lt)


def _recompute_table(state: TrainerState) -> None:
    cfg = state.cfg
    t = state.t
    lt_a_rng = SeededRng(cfg.seed).child("lt_a", t)
    lt_a = build_lt_a(state.bundle.lt, cfg.augment, cfg.n_weak, cfg.n_strong, lt_a_rng)
    acc_vec = class_accuracy(state.params, lt_a, state.bundle.k)
    if not state.bank_refreshed:
        refresh_full(state.bank, state.params, state.bundle.ls)
        state.bank_refreshed = True
    if cfg.mode == "fixed_weights":
        table = fixed_weights(state.bank, state.params, state.bundle.lt, created_t=t)
        table.accuracy = acc_vec
    else:
        table = compute_weights(acc_vec, state.bank, state.params, state.bundle.lt, cfg.phi, created_t=t)
        if cfg.mode == "near_only":
            table = clamp_near_only(table)
        elif cfg.mode == "far_only":
            table = clamp_far_only(table)
    state.table = table
    if cfg.dump_weights and state.out_dir is not None:
        table.dump_csv(state.bundle.ls, state.out_dir / f"weights_t{t}.csv")


def step(state: TrainerState) -> dict:
    """Run one training iteration and return its metrics record.

    Exactly one optimizer step and one bank update happen per call; the
    weight table is recomputed iff the mode uses weights, t >= T1, and
    t is a multiple of T_n.
    """
    cfg = state.cfg
    t = state.t
    spec = loss_spec_for(cfg, t, state.t1, state.t2)

    recomputed = False
    if cfg.mode in WEIGHT_COMPUTING_MODES and t >= _effective(state.t1) and t % cfg.t_n == 0:
        _recompute_table(state)
        recomputed = True

    n_s = len(state.bundle.ls)
    pos_s = state.rng_batch.choice(n_s, min(cfg.batch_source, n_s))
    x_s = state.bundle.ls.x[pos_s]
    y_s = state.bundle.ls.y[pos_s]
    w_s = state.table.weights_for(pos_s) if spec.source_mode == "weighted" else None

    x_uw = x_us = None
    if spec.use_pseudo or spec.use_ult:
        n_pool = state.pool_x.shape[0]
        pos_u = state.rng_batch.choice(n_pool, min(cfg.batch_unlabeled, n_pool))
        x_u = state.pool_x[pos_u]
        x_uw = weak(x_u, cfg.augment, state.rng_aug)
        x_us = strong(x_u, cfg.augment, state.rng_aug)

    x_t = y_t = None
    if spec.use_lt:
        n_t = len(state.bundle.lt)
        pos_t = state.rng_batch.choice(n_t, min(cfg.batch_source, n_t))
        x_t = state.bundle.lt.x[pos_t]
        y_t = state.bundle.lt.y[pos_t]

    batch = TrainBatch(
        x_source=x_s,
        y_source=y_s,
        w_source=w_s,
        x_unlabeled_weak=x_uw,
        x_unlabeled_strong=x_us,
        x_target=x_t,
        y_target=y_t,
    )
    state.last_batch = batch
    state.last_spec = spec
    try:
        state.params.check_shapes()  # also rejects non-finite parameters
        breakdown, grads_f, grads_c = backward(state.params, batch, spec)
    except ValueError as exc:
        raise TrainingDiverged(t, {"t": t, "error": str(exc)}) from exc
    if not (math.isfinite(breakdown.l1) and math.isfinite(breakdown.l_ult)):
        raise TrainingDiverged(t, {"t": t, **breakdown.to_dict()})

    source_feats = features(state.params, x_s)  # pre-step features feed the bank
    if cfg.lr_decay:
        state.opt.lr = cfg.lr * (1.0 + 1e-4 * t) ** -0.75
    sgd_step(state.params, state.opt, grads_f, grads_c)
    momentum_update(state.bank, pos_s, source_feats, cfg.m_s)

    val_acc = None
    if (t + 1) % cfg.eval_every == 0:
        val_acc = evaluate(state.params, state.bundle.val, state.bundle.k).accuracy
        if state.t1 is None:
            if state.detector.update(val_acc):
                state.t1 = t + 1
                state.detector = ConvergenceDetector(cfg.patience)
        elif state.t2 is None and (t + 1) > state.t1:
            if state.detector.update(val_acc):
                state.t2 = t + 1
                state.detector = None

    target_acc = None
    if (t + 1) % cfg.target_eval_every == 0 or t + 1 == cfg.iterations:
        target_acc = evaluate(state.params, state.bundle.ut, state.bundle.k).accuracy

    record = {
        "t": t,
        "phase": phase_of(t, state.t1, state.t2),
        **breakdown.to_dict(),
        "weights_recomputed": recomputed,
        **state.table.stats(),
        "val_acc": val_acc,
        "target_acc": target_acc,
    }
    state.t += 1
    return record


def run(cfg: RunConfig, out_dir=None, bundle: DatasetBundle | None = None, quiet: bool = True) -> RunResult:
    """Execute a full run; optionally stream metrics.jsonl, result.json and a
    final params.json checkpoint into out_dir."""
    t_start = time.perf_counter()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    state = init_state(cfg, bundle=bundle, out_dir=out_path)

    metrics_fh = None
    try:
        if out_path is not None:
            metrics_fh = (out_path / "metrics.jsonl").open("w", encoding="utf-8", newline="\n")
        for _ in range(cfg.iterations):
            record = step(state)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(record) + "\n")
    except TrainingDiverged as exc:
        if out_path is not None:
            (out_path / "diverged.json").write_text(json.dumps(exc.diagnostic, indent=1), encoding="utf-8")
        raise
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    report = evaluate(state.params, state.bundle.ut, state.bundle.k)
    result = RunResult(
        mode=cfg.mode,
        seed=cfg.seed,
        phi=cfg.phi,
        t1=state.t1,
        t2=state.t2,
        iterations=cfg.iterations,
        final_accuracy=report.accuracy,
        per_class=report.per_class.tolist(),
        wall_clock_s=time.perf_counter() - t_start,
    )
    if out_path is not None:
        save_checkpoint(state.params, out_path / "params.json")
        (out_path / "result.json").write_text(json.dumps(result.to_dict(), indent=1), encoding="utf-8")
    if not quiet:
        print(
            f"[{cfg.mode} seed={cfg.seed} phi={cfg.phi:g}] acc={report.accuracy:.4f} "
            f"T1={state.t1} T2={state.t2} ({result.wall_clock_s:.1f}s)"
        )
    result.params = state.params
    return result
