"""Experiment runner: dataset generation, (sweep) training with JSONL metrics,
evaluation of saved checkpoints, and summary report tables.

Config files are TOML with typed sections (dataset / model / optimizer /
augment / train / sweep); unknown keys are a hard error so hyperparameter
typos cannot pass silently. The default output directory can be set with the
SEWDA_OUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .augment import AugmentPolicy
from .data import GeneratorConfig, generate, load_csv, save_csv
from .evaluate import evaluate, export_embeddings
from .model import load_checkpoint
from .trainer import MODES, RunConfig, TrainingDiverged, run

ENV_OUT_DIR = "SEWDA_OUT_DIR"

DEFAULT_SWEEP_CAP = 64


class ConfigError(ValueError):
    pass


_SECTION_KEYS = {
    "dataset": {
        "csv", "k", "d_in", "informative_dims", "source_per_class", "target_per_class",
        "shots", "val_shots", "rotation_deg", "scale", "translation", "cluster_sigma",
        "noise_sigma", "centroid_radius", "seed",
    },
    "model": {"hidden", "feature_dim", "normalize_features", "feature_temperature"},
    "optimizer": {"lr", "lr_decay", "momentum", "weight_decay"},
    "augment": {"sigma_weak", "sigma_strong", "p_drop", "scale_lo", "scale_hi", "n_weak", "n_strong"},
    "train": {
        "mode", "seed", "data_seed", "iterations", "t_n", "lambda", "tau", "phi", "gamma",
        "m_s", "eval_every", "patience", "target_eval_every", "batch_source",
        "batch_unlabeled", "t1", "t2", "dump_weights",
    },
    "sweep": {"phi", "seeds", "modes", "max_runs"},
}


def _check_keys(doc: dict, path: str) -> None:
    unknown_sections = set(doc) - set(_SECTION_KEYS)
    if unknown_sections:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown_sections)}")
    for section, body in doc.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        bad = set(body) - _SECTION_KEYS[section]
        if bad:
            raise ConfigError(f"{path}: unknown key(s) {sorted(bad)} in [{section}]")


def load_config(path) -> tuple[RunConfig, dict]:
    """Parse a TOML config into a RunConfig plus the raw sweep table."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_keys(doc, str(path))

    ds = dict(doc.get("dataset", {}))
    csv_path = ds.pop("csv", None)
    gen_kwargs = dict(ds)
    if "scale" in gen_kwargs:
        gen_kwargs["scale"] = tuple(gen_kwargs["scale"])
    if "translation" in gen_kwargs:
        gen_kwargs["translation"] = tuple(gen_kwargs["translation"])
    try:
        generator = GeneratorConfig(**gen_kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: [dataset] {exc}") from None

    mdl = doc.get("model", {})
    opt = doc.get("optimizer", {})
    aug_raw = dict(doc.get("augment", {}))
    n_weak = aug_raw.pop("n_weak", 4)
    n_strong = aug_raw.pop("n_strong", 4)
    policy = AugmentPolicy(**aug_raw)
    tr = dict(doc.get("train", {}))
    lam = tr.pop("lambda", 0.1)

    cfg = RunConfig(
        generator=generator,
        data_csv=str(csv_path) if csv_path is not None else None,
        hidden=mdl.get("hidden", 32),
        d_f=mdl.get("feature_dim", 16),
        normalize_features=mdl.get("normalize_features", False),
        feature_temperature=mdl.get("feature_temperature", 0.05),
        lr=opt.get("lr", 0.01),
        lr_decay=opt.get("lr_decay", False),
        momentum=opt.get("momentum", 0.9),
        weight_decay=opt.get("weight_decay", 0.0005),
        lam=lam,
        augment=policy,
        n_weak=n_weak,
        n_strong=n_strong,
        **tr,
    )
    cfg.validate()
    return cfg, doc.get("sweep", {})


def _default_out_dir(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(ENV_OUT_DIR, "runs"))


def run_name(mode: str, phi: float, seed: int) -> str:
    return f"{mode}_phi{phi:g}_seed{seed}"


def _execute_run(args: tuple[RunConfig, str, bool]) -> tuple[str, str]:
    cfg, run_dir, quiet = args
    try:
        result = run(cfg, out_dir=run_dir, quiet=quiet)
        return run_name(cfg.mode, cfg.phi, cfg.seed), f"acc={result.final_accuracy:.4f}"
    except TrainingDiverged as exc:
        return run_name(cfg.mode, cfg.phi, cfg.seed), f"DIVERGED at t={exc.t}"


def sweep_configs(base: RunConfig, sweep: dict) -> list[RunConfig]:
    modes = sweep.get("modes", [base.mode])
    phis = sweep.get("phi", [base.phi])
    seeds = sweep.get("seeds", [base.seed])
    cap = sweep.get("max_runs", DEFAULT_SWEEP_CAP)
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"unknown sweep mode {mode!r}")
    combos = list(itertools.product(modes, phis, seeds))
    if len(combos) > cap:
        raise ConfigError(f"sweep would launch {len(combos)} runs, above the cap of {cap}")
    return [replace(base, mode=m, phi=float(p), seed=int(s)) for m, p, s in combos]


def cmd_generate(args) -> int:
    cfg, _ = load_config(args.config)
    if cfg.data_csv is not None:
        raise ConfigError("generate needs generator settings, but [dataset].csv points at a file")
    gen = cfg.generator if args.seed is None else replace(cfg.generator, seed=args.seed)
    bundle = generate(gen)
    save_csv(bundle, args.out)
    if not args.quiet:
        total = len(bundle.ls) + len(bundle.lt) + len(bundle.ut) + len(bundle.val)
        print(f"wrote {total} rows ({len(bundle.ls)} ls / {len(bundle.lt)} lt / "
              f"{len(bundle.ut)} ut / {len(bundle.val)} val) to {args.out}")
    return 0


def cmd_train(args) -> int:
    base, sweep = load_config(args.config)
    if args.seed is not None:
        base = replace(base, seed=args.seed)
    if args.mode is not None:
        base = replace(base, mode=args.mode)
    if args.phi is not None:
        base = replace(base, phi=args.phi)
    configs = sweep_configs(base, sweep)
    out_root = _default_out_dir(args.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    pending = []
    for cfg in configs:
        run_dir = out_root / run_name(cfg.mode, cfg.phi, cfg.seed)
        if (run_dir / "result.json").exists():
            if not args.quiet:
                print(f"skip {run_dir.name} (result.json exists)")
            continue
        pending.append((cfg, str(run_dir), True))

    failures = 0
    if args.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_execute_run, pending))
    else:
        outcomes = [_execute_run(item) for item in pending]
    for name, summary in outcomes:
        if "DIVERGED" in summary:
            failures += 1
        if not args.quiet:
            print(f"{name}: {summary}")
    return 1 if failures else 0


def cmd_evaluate(args) -> int:
    params = load_checkpoint(args.checkpoint)
    bundle = load_csv(args.data)
    split = {"ls": bundle.ls, "lt": bundle.lt, "ut": bundle.ut, "val": bundle.val}[args.split]
    report = evaluate(params, split, bundle.k)
    text = json.dumps(report.to_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if not args.quiet:
        print(text)
    return 0


def cmd_export_embeddings(args) -> int:
    params = load_checkpoint(args.checkpoint)
    bundle = load_csv(args.data)
    export_embeddings(params, bundle, args.out)
    if not args.quiet:
        print(f"wrote embeddings for {len(bundle.ls) + len(bundle.lt) + len(bundle.ut) + len(bundle.val)} "
              f"samples to {args.out}")
    return 0


def _collect_rows(run_dirs) -> tuple[list[dict], int]:
    rows = []
    failures = 0
    for d in run_dirs:
        d = Path(d)
        row = {"run": d.name, "mode": "?", "phi": float("nan"), "seed": -1,
               "accuracy": float("nan"), "t1": None, "t2": None, "status": "failed"}
        try:
            doc = json.loads((d / "result.json").read_text(encoding="utf-8"))
            row.update(
                mode=doc["mode"], phi=float(doc["phi"]), seed=int(doc["seed"]),
                accuracy=float(doc["final_accuracy"]), t1=doc["t1"], t2=doc["t2"], status="ok",
            )
        except (OSError, KeyError, ValueError, json.JSONDecodeError):
            failures += 1
        rows.append(row)
    rows.sort(key=lambda r: (r["mode"], r["phi"], r["seed"]))
    return rows, failures


def report_table(run_dirs) -> tuple[list[dict], list[dict], int]:
    """Detail rows plus (mode, phi)-grouped mean rows."""
    rows, failures = _collect_rows(run_dirs)
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if row["status"] == "ok":
            groups.setdefault((row["mode"], row["phi"]), []).append(row["accuracy"])
    means = [
        {"mode": mode, "phi": phi, "n": len(accs), "mean_accuracy": sum(accs) / len(accs)}
        for (mode, phi), accs in sorted(groups.items())
    ]
    return rows, means, failures


def cmd_report(args) -> int:
    rows, means, failures = report_table(args.run_dirs)
    lines = []
    if args.format == "markdown":
        lines.append("| run | mode | phi | seed | accuracy | t1 | t2 | status |")
        lines.append("|---|---|---|---|---|---|---|---|")
        for r in rows:
            lines.append(
                f"| {r['run']} | {r['mode']} | {r['phi']:g} | {r['seed']} | "
                f"{r['accuracy']:.4f} | {r['t1']} | {r['t2']} | {r['status']} |"
            )
        lines.append("")
        lines.append("| mode | phi | n | mean accuracy |")
        lines.append("|---|---|---|---|")
        for m in means:
            lines.append(f"| {m['mode']} | {m['phi']:g} | {m['n']} | {m['mean_accuracy']:.4f} |")
    else:
        lines.append("run,mode,phi,seed,accuracy,t1,t2,status")
        for r in rows:
            lines.append(
                f"{r['run']},{r['mode']},{r['phi']:g},{r['seed']},{r['accuracy']:.6f},{r['t1']},{r['t2']},{r['status']}"
            )
        lines.append("group,mode,phi,n,mean_accuracy")
        for m in means:
            lines.append(f"mean,{m['mode']},{m['phi']:g},{m['n']},{m['mean_accuracy']:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(text)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sewda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a dataset CSV from generator settings")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run one training run or a sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None, help=f"run directory root (default ${ENV_OUT_DIR} or ./runs)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("ls", "lt", "ut", "val"), default="ut")
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize run directories into one table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out", default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-embeddings", help="dump model features for all splits to CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
