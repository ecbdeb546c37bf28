"""Shared finite-difference gradient checking harness.

The scalar objective here recomposes each loss from plain forward passes and
the loss functions; it never touches the analytic backward path it is used
to verify.
"""

import numpy as np

from sewda.losses import (
    LossSpec,
    focal_source_ce,
    labeled_target_ce,
    pseudo_label_loss,
    source_ce,
    unlabeled_entropy,
    weighted_source_ce,
)
from sewda.model import (
    TrainBatch,
    backward,
    gradients_to_vector,
    init_params,
    params_to_vector,
    predict_probs,
    vector_to_params,
)
from sewda.numerics import SeededRng, finite_diff_gradient


def random_instance(seed, d_in=5, hidden=4, d_f=4, k=3, b_s=6, b_u=8, b_t=4, normalize=False):
    rng = SeededRng(seed)
    params = init_params(d_in, hidden, d_f, k, rng.child("init"), normalize_features=normalize)
    gen = rng.child("data")
    batch = TrainBatch(
        x_source=gen.normal(size=(b_s, d_in)),
        y_source=gen.integers(0, k, size=b_s),
        w_source=gen.uniform(0.5, 1.5, size=b_s),
        x_unlabeled_weak=gen.normal(size=(b_u, d_in)),
        x_unlabeled_strong=gen.normal(size=(b_u, d_in)),
        x_target=gen.normal(size=(b_t, d_in)),
        y_target=gen.integers(0, k, size=b_t),
    )
    return params, batch


def scalar_objective(vec, like, batch, spec: LossSpec, lam_sign: float) -> float:
    p = vector_to_params(vec, like)
    total = 0.0
    if spec.source_mode == "plain":
        total += source_ce(batch.y_source, predict_probs(p, batch.x_source))
    elif spec.source_mode == "weighted":
        total += weighted_source_ce(batch.y_source, predict_probs(p, batch.x_source), batch.w_source)
    elif spec.source_mode == "focal":
        total += focal_source_ce(batch.y_source, predict_probs(p, batch.x_source), spec.gamma)
    if spec.use_pseudo:
        total += pseudo_label_loss(
            predict_probs(p, batch.x_unlabeled_weak),
            predict_probs(p, batch.x_unlabeled_strong),
            spec.tau,
        )
    if spec.use_lt:
        total += labeled_target_ce(batch.y_target, predict_probs(p, batch.x_target))
    if spec.use_ult:
        total += lam_sign * spec.lam * unlabeled_entropy(predict_probs(p, batch.x_unlabeled_weak))
    return total


def max_gradient_error(params, batch, spec: LossSpec, eps=1e-5):
    """Worst (diff_norm, bound-relative ratio) over the two group objectives."""
    _, grads_f, grads_c = backward(params, batch, spec)
    vec0 = params_to_vector(params)
    worst = 0.0
    for grads, sign in ((grads_f, +1.0), (grads_c, -1.0)):
        fd = finite_diff_gradient(lambda v: scalar_objective(v, params, batch, spec, sign), vec0, eps=eps)
        ga = gradients_to_vector(grads)
        diff = float(np.linalg.norm(ga - fd))
        bound = max(1e-7, 1e-4 * max(np.linalg.norm(ga), np.linalg.norm(fd)))
        worst = max(worst, diff / bound)
    return worst


def assert_gradients_match(params, batch, spec: LossSpec, eps=1e-5):
    ratio = max_gradient_error(params, batch, spec, eps=eps)
    assert ratio <= 1.0, f"analytic vs finite-difference mismatch (ratio {ratio:.2f}) for {spec}"


TERM_SPECS = {
    "l_p": LossSpec(tau=0.2, source_mode="off", use_pseudo=True, use_ult=False, use_lt=False),
    "l_s": LossSpec(source_mode="plain", use_pseudo=False, use_ult=False, use_lt=False),
    "l_s_w": LossSpec(source_mode="weighted", use_pseudo=False, use_ult=False, use_lt=False),
    "l_lt": LossSpec(source_mode="off", use_pseudo=False, use_ult=False, use_lt=True),
    "l_ult": LossSpec(lam=1.0, source_mode="off", use_pseudo=False, use_ult=True, use_lt=False),
}

COMPOSITE_SPEC = LossSpec(tau=0.2, lam=0.1, source_mode="weighted", use_pseudo=True, use_ult=True, use_lt=True)
