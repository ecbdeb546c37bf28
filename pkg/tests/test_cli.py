import json
from pathlib import Path

import numpy as np
import pytest

from sewda.cli import ConfigError, load_config, main, report_table, run_name, sweep_configs
from sewda.data import load_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMOKE = str(CONFIGS / "smoke.toml")


def write_config(tmp_path, body, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return str(path)


class TestConfigParsing:
    def test_smoke_config_loads(self):
        cfg, sweep = load_config(SMOKE)
        assert cfg.mode == "predguide" and cfg.iterations == 300
        assert cfg.generator.k == 3
        assert sweep == {}

    def test_unknown_key_is_hard_error(self, tmp_path):
        path = write_config(tmp_path, "[train]\nmode='predguide'\nlearning_rate=0.5\n")
        with pytest.raises(ConfigError, match="learning_rate"):
            load_config(path)

    def test_unknown_section_is_hard_error(self, tmp_path):
        path = write_config(tmp_path, "[训练]\nfoo=1\n".replace("训练", "misc"))
        with pytest.raises(ConfigError, match="misc"):
            load_config(path)

    def test_lambda_key_maps_to_lam(self, tmp_path):
        path = write_config(tmp_path, "[train]\nlambda=0.25\n")
        cfg, _ = load_config(path)
        assert cfg.lam == 0.25

    def test_sweep_cross_product_and_cap(self):
        cfg, _ = load_config(SMOKE)
        configs = sweep_configs(cfg, {"modes": ["predguide", "s_plus_t"], "seeds": [0, 1, 2]})
        assert len(configs) == 6
        with pytest.raises(ConfigError, match="cap"):
            sweep_configs(cfg, {"seeds": list(range(100))})


class TestGenerate:
    def test_round_trip_through_cli(self, tmp_path):
        out = tmp_path / "data.csv"
        assert main(["generate", "--config", SMOKE, "--out", str(out), "--quiet"]) == 0
        bundle = load_csv(out)
        assert bundle.k == 3 and len(bundle.lt) == 9

    def test_deterministic_per_seed(self, tmp_path):
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        main(["generate", "--config", SMOKE, "--out", str(a), "--quiet", "--seed", "4"])
        main(["generate", "--config", SMOKE, "--out", str(b), "--quiet", "--seed", "4"])
        main(["generate", "--config", SMOKE, "--out", str(c), "--quiet", "--seed", "5"])
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() != c.read_bytes()

    def test_row_count_matches_config_arithmetic(self, tmp_path):
        out = tmp_path / "data.csv"
        main(["generate", "--config", SMOKE, "--out", str(out), "--quiet"])
        rows = out.read_text().strip().splitlines()
        assert len(rows) == 1 + 3 * 40 + 3 * 30  # header + source + target


class TestTrainAndReport:
    def train_two_modes(self, tmp_path):
        out_dir = tmp_path / "runs"
        code = main([
            "train", "--config", SMOKE, "--out-dir", str(out_dir), "--quiet",
        ])
        assert code == 0
        return out_dir

    def test_single_run_layout(self, tmp_path):
        out_dir = self.train_two_modes(tmp_path)
        run_dir = out_dir / run_name("predguide", 0.5, 0)
        assert (run_dir / "metrics.jsonl").exists()
        assert (run_dir / "result.json").exists()
        assert (run_dir / "params.json").exists()

    def test_rerun_skips_completed(self, tmp_path):
        out_dir = self.train_two_modes(tmp_path)
        run_dir = out_dir / run_name("predguide", 0.5, 0)
        stamp = (run_dir / "result.json").stat().st_mtime_ns
        assert main(["train", "--config", SMOKE, "--out-dir", str(out_dir), "--quiet"]) == 0
        assert (run_dir / "result.json").stat().st_mtime_ns == stamp

    def test_mode_sweep_creates_run_dirs(self, tmp_path):
        cfg_body = Path(SMOKE).read_text() + "\n[sweep]\nmodes=['predguide','s_plus_t']\n"
        path = write_config(tmp_path, cfg_body)
        out_dir = tmp_path / "runs"
        assert main(["train", "--config", path, "--out-dir", str(out_dir), "--quiet"]) == 0
        assert (out_dir / run_name("predguide", 0.5, 0) / "result.json").exists()
        assert (out_dir / run_name("s_plus_t", 0.5, 0) / "result.json").exists()

    def test_report_single_run(self, tmp_path, capsys):
        out_dir = self.train_two_modes(tmp_path)
        run_dir = out_dir / run_name("predguide", 0.5, 0)
        assert main(["report", str(run_dir)]) == 0
        text = capsys.readouterr().out
        assert "predguide" in text and "mean" in text

    def test_report_hand_fixture_means(self, tmp_path):
        for seed, acc in ((0, 0.5), (1, 0.7), (2, 0.9)):
            d = tmp_path / f"predguide_phi0.5_seed{seed}"
            d.mkdir()
            (d / "result.json").write_text(json.dumps({
                "mode": "predguide", "seed": seed, "phi": 0.5, "t1": 10, "t2": 20,
                "iterations": 100, "final_accuracy": acc, "per_class": [], "wall_clock_s": 1.0,
            }))
        rows, means, failures = report_table([str(tmp_path / f"predguide_phi0.5_seed{s}") for s in (0, 1, 2)])
        assert failures == 0
        assert len(rows) == 3
        assert means[0]["mean_accuracy"] == pytest.approx(0.7)
        assert means[0]["n"] == 3

    def test_report_missing_result_marks_failed(self, tmp_path, capsys):
        empty = tmp_path / "empty_run"
        empty.mkdir()
        assert main(["report", str(empty)]) == 1
        assert "failed" in capsys.readouterr().out

    def test_cli_override_flags(self, tmp_path):
        out_dir = tmp_path / "runs"
        assert main([
            "train", "--config", SMOKE, "--out-dir", str(out_dir), "--quiet",
            "--mode", "s_plus_t", "--seed", "7", "--phi", "0.25",
        ]) == 0
        assert (out_dir / run_name("s_plus_t", 0.25, 7) / "result.json").exists()


class TestEvaluateAndEmbeddings:
    def prepared(self, tmp_path):
        data = tmp_path / "data.csv"
        main(["generate", "--config", SMOKE, "--out", str(data), "--quiet"])
        out_dir = tmp_path / "runs"
        main(["train", "--config", SMOKE, "--out-dir", str(out_dir), "--quiet"])
        ckpt = out_dir / run_name("predguide", 0.5, 0) / "params.json"
        return data, ckpt

    def test_evaluate_subcommand(self, tmp_path, capsys):
        data, ckpt = self.prepared(tmp_path)
        out = tmp_path / "report.json"
        assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(data),
                     "--split", "ut", "--out", str(out), "--quiet"]) == 0
        doc = json.loads(out.read_text())
        assert 0.0 <= doc["accuracy"] <= 1.0
        assert np.asarray(doc["confusion"]).sum() == doc["n"]

    def test_export_embeddings_subcommand(self, tmp_path):
        data, ckpt = self.prepared(tmp_path)
        out = tmp_path / "emb.csv"
        assert main(["export-embeddings", "--checkpoint", str(ckpt), "--data", str(data),
                     "--out", str(out), "--quiet"]) == 0
        header = out.read_text().splitlines()[0]
        assert header.startswith("idx,split,label,pred,correct,f0")

    def test_missing_config_is_clean_error(self, tmp_path, capsys):
        assert main(["train", "--config", str(tmp_path / "nope.toml"), "--quiet"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_env_var_sets_default_out_dir(self, tmp_path, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv("SEWDA_OUT_DIR", str(target))
        monkeypatch.chdir(tmp_path)
        assert main(["train", "--config", SMOKE, "--quiet"]) == 0
        assert (target / run_name("predguide", 0.5, 0) / "result.json").exists()

    def test_training_from_csv_dataset(self, tmp_path):
        data = tmp_path / "data.csv"
        main(["generate", "--config", SMOKE, "--out", str(data), "--quiet"])
        cfg_body = "\n".join([
            "[dataset]", f"csv = '{data}'",
            "[model]", "hidden = 16", "feature_dim = 8",
            "[train]", "iterations = 120", "t_n = 50", "eval_every = 10",
            "patience = 3", "batch_source = 8", "batch_unlabeled = 16",
        ])
        path = write_config(tmp_path, cfg_body)
        out_dir = tmp_path / "runs"
        assert main(["train", "--config", path, "--out-dir", str(out_dir), "--quiet"]) == 0
        doc = json.loads((out_dir / run_name("predguide", 0.5, 0) / "result.json").read_text())
        assert 0.0 <= doc["final_accuracy"] <= 1.0

    def test_markdown_report_format(self, tmp_path, capsys):
        d = tmp_path / "predguide_phi0.5_seed0"
        d.mkdir()
        (d / "result.json").write_text(json.dumps({
            "mode": "predguide", "seed": 0, "phi": 0.5, "t1": 10, "t2": 20,
            "iterations": 100, "final_accuracy": 0.75, "per_class": [], "wall_clock_s": 1.0,
        }))
        assert main(["report", str(d), "--format", "markdown"]) == 0
        out = capsys.readouterr().out
        assert "| run | mode |" in out and "| 0.7500 |" in out
