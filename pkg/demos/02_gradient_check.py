"""Verify the hand-derived gradients against the central-difference oracle,
then show what the opposed-sign entropy update does to each parameter group.

Run: python demos/02_gradient_check.py
"""

import numpy as np

from sewda import LossSpec, SeededRng, TrainBatch, backward, init_params, predict_probs
from sewda.losses import unlabeled_entropy
from sewda.model import gradients_to_vector, params_to_vector, vector_to_params
from sewda.numerics import finite_diff_gradient


def make_instance(seed=0, d_in=5, k=3):
    rng = SeededRng(seed)
    params = init_params(d_in, 4, 4, k, rng.child("init"))
    gen = rng.child("data")
    batch = TrainBatch(
        x_source=gen.normal(size=(6, d_in)),
        y_source=gen.integers(0, k, size=6),
        w_source=gen.uniform(0.5, 1.5, size=6),
        x_unlabeled_weak=gen.normal(size=(8, d_in)),
        x_unlabeled_strong=gen.normal(size=(8, d_in)),
        x_target=gen.normal(size=(4, d_in)),
        y_target=gen.integers(0, k, size=4),
    )
    return params, batch


def main():
    params, batch = make_instance()
    spec = LossSpec(tau=0.2, lam=0.1, source_mode="weighted", use_pseudo=True, use_ult=True, use_lt=True)
    _, grads_f, grads_c = backward(params, batch, spec)

    def objective(vec, lam_sign):
        p = vector_to_params(vec, params)
        from sewda.losses import labeled_target_ce, pseudo_label_loss, weighted_source_ce

        value = weighted_source_ce(batch.y_source, predict_probs(p, batch.x_source), batch.w_source)
        value += pseudo_label_loss(
            predict_probs(p, batch.x_unlabeled_weak), predict_probs(p, batch.x_unlabeled_strong), spec.tau
        )
        value += labeled_target_ce(batch.y_target, predict_probs(p, batch.x_target))
        value += lam_sign * spec.lam * unlabeled_entropy(predict_probs(p, batch.x_unlabeled_weak))
        return value

    vec0 = params_to_vector(params)
    print(f"checking {vec0.size} parameters against central differences (eps=1e-5):")
    for name, grads, sign in (("extractor objective (+lam)", grads_f, +1.0), ("classifier objective (-lam)", grads_c, -1.0)):
        fd = finite_diff_gradient(lambda v: objective(v, sign), vec0)
        ga = gradients_to_vector(grads)
        rel = np.linalg.norm(ga - fd) / max(np.linalg.norm(ga), np.linalg.norm(fd))
        print(f"  {name:28s} relative error {rel:.2e}")

    print("\nopposed-sign entropy update (only the entropy term active):")
    ent_spec = LossSpec(lam=1.0, source_mode="off", use_pseudo=False, use_ult=True, use_lt=False)
    _, gf, gc = backward(params, batch, ent_spec)
    h0 = unlabeled_entropy(predict_probs(params, batch.x_unlabeled_weak))
    for label, grads, group in (("extractor step", gf, ("w1", "b1", "w2", "b2")), ("classifier step", gc, ("wc", "bc"))):
        stepped = params.copy()
        for field in group:
            getattr(stepped, field)[...] -= 1e-2 * getattr(grads, field)
        h1 = unlabeled_entropy(predict_probs(stepped, batch.x_unlabeled_weak))
        print(f"  {label:16s} entropy {h0:.4f} -> {h1:.4f} ({'down' if h1 < h0 else 'up'})")


if __name__ == "__main__":
    main()
