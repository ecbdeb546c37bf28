"""The source-example weighting machinery in isolation: warm up the feature
bank, measure per-class accuracy on augmented labeled targets, and inspect
the resulting per-sample weights.

Run: python demos/03_feature_bank_and_weights.py
"""

import numpy as np

from sewda import (
    AugmentPolicy,
    GeneratorConfig,
    SeededRng,
    build_lt_a,
    class_accuracy,
    class_weight_bounds,
    compute_weights,
    generate,
    init_params,
    new_bank,
    refresh_full,
)
from sewda.bank import class_similarities
from sewda.model import features


def main():
    bundle = generate(GeneratorConfig(seed=2))
    rng = SeededRng(2)
    params = init_params(bundle.d_in, 32, 16, bundle.k, rng.child("init"))

    bank = new_bank(16, bundle.ls)
    refresh_full(bank, params, bundle.ls)
    print(f"bank: {bank.s.shape[1]} columns x {bank.s.shape[0]} feature dims, all initialized")

    lt_a = build_lt_a(bundle.lt, AugmentPolicy(), n_weak=4, n_strong=4, rng=rng.child("lt_a"))
    acc = class_accuracy(params, lt_a, bundle.k)
    print(f"\naugmented labeled targets: {len(lt_a)} rows "
          f"({len(bundle.lt)} originals x (1 + 4 weak + 4 strong))")
    print("class-wise accuracy on them (untrained model, so near chance):")
    print("  " + "  ".join(f"a_{k}={acc.acc[k]:.2f}" for k in range(bundle.k)))

    phi = 0.5
    table = compute_weights(acc, bank, params, bundle.lt, phi)
    print(f"\nweight bounds per class (phi={phi}): 1 +- phi/exp(a_k)")
    for k in range(bundle.k):
        max_w, min_w = class_weight_bounds(float(acc.acc[k]), phi)
        print(f"  class {k}: a_k={acc.acc[k]:.2f} -> [{min_w:.3f}, {max_w:.3f}]")
    print(f"\ntable over {table.w.size} source samples: "
          f"min={table.w.min():.3f} mean={table.w.mean():.3f} max={table.w.max():.3f}")

    k = 0
    f_t = features(params, bundle.lt.x[np.nonzero(bundle.lt._y == k)[0][0]])
    cs = class_similarities(bank, k, f_t)
    print(f"\nclass {k}, first labeled target: similarity spans "
          f"[{cs.min_sim:.3f}, {cs.max_sim:.3f}] over {cs.sims.size} source samples")
    nearest = cs.positions[-3:][::-1]
    farthest = cs.positions[:3]
    print("  3 nearest  -> weights " + " ".join(f"{table.w[p]:.3f}" for p in nearest))
    print("  3 farthest -> weights " + " ".join(f"{table.w[p]:.3f}" for p in farthest))
    print("(near samples of a badly predicted class are pushed above 1, far ones below)")


if __name__ == "__main__":
    main()
