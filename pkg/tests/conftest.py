import numpy as np
import pytest

from sewda.data import DatasetBundle, HiddenLabelSplit, LabeledSplit, GeneratorConfig
from sewda.model import init_params
from sewda.numerics import SeededRng
from sewda.trainer import RunConfig


def bundle_from_arrays(x_ls, y_ls, x_lt, y_lt, x_ut, y_ut, x_val, y_val, k):
    """Hand-built bundle with sequential disjoint indices."""
    x_ls, x_lt, x_ut, x_val = (np.asarray(a, dtype=float) for a in (x_ls, x_lt, x_ut, x_val))
    sizes = [len(x_ls), len(x_lt), len(x_ut), len(x_val)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    lt_counts = np.bincount(np.asarray(y_lt), minlength=k)
    return DatasetBundle(
        ls=LabeledSplit(x_ls, np.asarray(y_ls), np.arange(offsets[0], offsets[1])),
        lt=LabeledSplit(x_lt, np.asarray(y_lt), np.arange(offsets[1], offsets[2])),
        ut=HiddenLabelSplit(x_ut, np.asarray(y_ut), np.arange(offsets[2], offsets[3])),
        val=LabeledSplit(x_val, np.asarray(y_val), np.arange(offsets[3], offsets[4])),
        k=k,
        d_in=x_ls.shape[1],
        shots=int(lt_counts[0]),
    )


def toy_generator(seed=0, rotation=20.0, k=3):
    return GeneratorConfig(
        k=k,
        d_in=4,
        informative_dims=2,
        source_per_class=40,
        target_per_class=30,
        shots=3,
        val_shots=3,
        rotation_deg=rotation,
        scale=(1.0, 1.0),
        cluster_sigma=0.8,
        noise_sigma=0.4,
        centroid_radius=4.0,
        seed=seed,
    )


def toy_run_config(seed=0, mode="predguide", iterations=300, **overrides):
    cfg = RunConfig(
        generator=toy_generator(),
        hidden=16,
        d_f=8,
        iterations=iterations,
        t_n=50,
        eval_every=10,
        patience=3,
        target_eval_every=100,
        batch_source=8,
        batch_unlabeled=16,
        seed=seed,
        mode=mode,
    )
    for name, value in overrides.items():
        setattr(cfg, name, value)
    return cfg


@pytest.fixture
def small_params():
    return init_params(d_in=5, hidden=4, d_f=4, k=3, rng=SeededRng(7).child("init"))


@pytest.fixture
def rng():
    return SeededRng(123)
