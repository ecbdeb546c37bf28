"""One full training run, watching the three phases switch on: plain source
loss until T1, weighted source loss from T1, labeled-target loss after T2.

Run: python demos/04_training_phases.py
"""

import json
import tempfile
from pathlib import Path

from sewda import GeneratorConfig, RunConfig, run


def main():
    cfg = RunConfig(
        generator=GeneratorConfig(k=3, d_in=4, source_per_class=40, target_per_class=30,
                                  rotation_deg=20.0, scale=(1.0, 1.0), seed=7),
        hidden=16, d_f=8, iterations=600, t_n=50, eval_every=10, patience=5,
        batch_source=8, batch_unlabeled=16, seed=7,
    )
    with tempfile.TemporaryDirectory() as td:
        result = run(cfg, out_dir=td)
        records = [json.loads(line) for line in (Path(td) / "metrics.jsonl").read_text().splitlines()]

    print(f"converged schedule: T1={result.t1} (weights on), T2={result.t2} (labeled targets on)")
    print(f"final target accuracy: {result.final_accuracy:.3f} over {result.iterations} iterations\n")

    print("   t  phase  l_p     l_s     l_s_w   l_lt    l_ult   active")
    marks = sorted({0, result.t1 - 1, result.t1, result.t2, result.t2 + 1, cfg.iterations - 1})
    for t in marks:
        r = records[t]
        active = [name for name, flag in (("src", r["source_active"]), ("w-src", r["weighted_source_active"]),
                                          ("lt", r["lt_active"]), ("ent", r["ult_active"]))
                  if flag]
        print(f"{r['t']:5d}  {r['phase']}      {r['l_p']:<7.4f} {r['l_s']:<7.4f} "
              f"{r['l_s_w']:<7.4f} {r['l_lt']:<7.4f} {r['l_ult']:<7.4f} {'+'.join(active)}")

    recomputes = [r["t"] for r in records if r["weights_recomputed"]]
    print(f"\nweight recomputes (every t_n={cfg.t_n} once past T1): {recomputes}")
    vals = [(r["t"], r["val_acc"]) for r in records if r["val_acc"] is not None]
    trace = "  ".join(f"{t}:{v:.2f}" for t, v in vals[:: max(1, len(vals) // 8)])
    print(f"validation accuracy trace: {trace}")


if __name__ == "__main__":
    main()
