import json

import numpy as np
import pytest

from sewda.model import params_to_vector
from sewda.trainer import (
    ConvergenceDetector,
    TrainingDiverged,
    detect_convergence,
    init_state,
    loss_spec_for,
    phase_of,
    run,
    step,
)

from conftest import toy_run_config
from gradcheck import scalar_objective


class TestConvergenceDetector:
    def test_strictly_increasing_never_fires(self):
        det = ConvergenceDetector(window=3)
        assert not any(det.update(a) for a in np.linspace(0.1, 0.9, 50))

    def test_constant_accuracy_fires_on_sixth_evaluation(self):
        det = ConvergenceDetector(window=5)
        fires = [detect_convergence(det, 0.5) for _ in range(6)]
        assert fires == [False, False, False, False, False, True]

    def test_hand_trace_fires_three_after_last_improvement(self):
        det = ConvergenceDetector(window=3)
        fires = [det.update(a) for a in (0.5, 0.6, 0.6, 0.59, 0.6)]
        # last strict improvement on the 2nd evaluation; fires on the 5th
        assert fires == [False, False, False, False, True]

    def test_ties_do_not_reset_the_streak(self):
        det = ConvergenceDetector(window=2)
        assert [det.update(a) for a in (0.7, 0.7, 0.7)] == [False, False, True]


class TestLossSpecSchedule:
    def cfg(self, mode="predguide"):
        return toy_run_config(mode=mode)

    def test_phase1_uses_plain_source(self):
        spec = loss_spec_for(self.cfg(), t=10, t1=100, t2=200)
        assert spec.source_mode == "plain" and spec.use_pseudo and spec.use_ult and not spec.use_lt

    def test_phase2_uses_weighted_source(self):
        spec = loss_spec_for(self.cfg(), t=100, t1=100, t2=200)
        assert spec.source_mode == "weighted" and not spec.use_lt

    def test_phase3_adds_labeled_targets(self):
        spec = loss_spec_for(self.cfg(), t=201, t1=100, t2=200)
        assert spec.source_mode == "weighted" and spec.use_lt

    def test_unset_thresholds_stay_in_phase1(self):
        spec = loss_spec_for(self.cfg(), t=10_000, t1=None, t2=None)
        assert spec.source_mode == "plain" and not spec.use_lt

    def test_s_plus_t_reduction(self):
        for t in (0, 50, 500):
            spec = loss_spec_for(self.cfg("s_plus_t"), t=t, t1=100, t2=200)
            assert spec.source_mode == "plain"
            assert spec.use_lt and not spec.use_pseudo and not spec.use_ult and spec.lam == 0.0

    def test_uda_only_reduction(self):
        spec = loss_spec_for(self.cfg("uda_only"), t=500, t1=100, t2=200)
        assert spec.source_mode == "plain" and not spec.use_lt and spec.use_pseudo and spec.use_ult

    def test_focal_mode_switches_at_t1(self):
        assert loss_spec_for(self.cfg("focal"), t=10, t1=100, t2=200).source_mode == "plain"
        assert loss_spec_for(self.cfg("focal"), t=150, t1=100, t2=200).source_mode == "focal"

    def test_phase_of(self):
        assert phase_of(5, 10, 20) == 1
        assert phase_of(10, 10, 20) == 2
        assert phase_of(20, 10, 20) == 2
        assert phase_of(21, 10, 20) == 3
        assert phase_of(1_000_000, None, None) == 1


class TestStep:
    def test_two_identical_states_stay_identical(self):
        cfg = toy_run_config(iterations=50)
        s1, s2 = init_state(cfg), init_state(cfg)
        for _ in range(20):
            r1, r2 = step(s1), step(s2)
            assert r1 == r2
        np.testing.assert_array_equal(params_to_vector(s1.params), params_to_vector(s2.params))

    def test_gate_flip_at_pinned_t1(self):
        cfg = toy_run_config(t1=5, t2=10, patience=1000)
        state = init_state(cfg)
        records = [step(state) for _ in range(12)]
        for rec in records:
            if rec["t"] < 5:
                assert rec["source_active"] and not rec["weighted_source_active"]
            else:
                assert rec["weighted_source_active"] and not rec["source_active"]
            assert rec["lt_active"] == (rec["t"] > 10)

    def test_weight_recompute_schedule(self):
        cfg = toy_run_config(t1=7, t2=1000, t_n=5, patience=1000, iterations=40)
        state = init_state(cfg)
        recomputes = [rec["t"] for rec in (step(state) for _ in range(40)) if rec["weights_recomputed"]]
        assert recomputes == [10, 15, 20, 25, 30, 35]
        assert all(t >= 7 and t % 5 == 0 for t in recomputes)
        assert state.table.created_t == 35

    def test_lr_decay_flag_shrinks_the_rate(self):
        cfg = toy_run_config(lr_decay=True, iterations=100)
        state = init_state(cfg)
        for _ in range(100):
            step(state)
        assert state.opt.lr == pytest.approx(0.01 * (1 + 1e-4 * 99) ** -0.75)
        assert state.opt.lr < 0.01

    def test_exactly_one_bank_update_per_step(self):
        cfg = toy_run_config()
        state = init_state(cfg)
        step(state)
        # bank columns touched equal the sampled source batch rows
        assert int(state.bank.initialized.sum()) <= cfg.batch_source
        assert int(state.bank.initialized.sum()) > 0

    def test_descent_sanity_on_own_batch(self):
        cfg = toy_run_config(iterations=100)
        state = init_state(cfg)
        deltas = []
        for _ in range(100):
            before = params_to_vector(state.params).copy()
            step(state)
            after = params_to_vector(state.params)
            batch, spec = state.last_batch, state.last_spec
            f0 = scalar_objective(before, state.params, batch, spec, +1.0)
            f1 = scalar_objective(after, state.params, batch, spec, +1.0)
            deltas.append(f1 - f0)
        assert np.mean(deltas) < 0.0


class TestRun:
    def test_smoke_run_detects_phases_and_learns(self):
        res = run(toy_run_config(seed=3, iterations=300))
        assert res.t1 is not None and res.t2 is not None and res.t1 < res.t2 <= 300
        assert res.final_accuracy > 1.0 / 3.0

    def test_metrics_stream_deterministic(self, tmp_path):
        cfg = toy_run_config(seed=5, iterations=120)
        run(cfg, out_dir=tmp_path / "a")
        run(cfg, out_dir=tmp_path / "b")
        assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()
        assert (tmp_path / "a" / "params.json").read_bytes() == (tmp_path / "b" / "params.json").read_bytes()

    def test_phi_zero_matches_no_weights(self, tmp_path):
        base = dict(seed=11, iterations=200)
        run(toy_run_config(mode="predguide", phi=0.0, **base), out_dir=tmp_path / "pg")
        run(toy_run_config(mode="no_weights", **base), out_dir=tmp_path / "nw")
        pg = [json.loads(line) for line in (tmp_path / "pg" / "metrics.jsonl").read_text().splitlines()]
        nw = [json.loads(line) for line in (tmp_path / "nw" / "metrics.jsonl").read_text().splitlines()]
        for a, b in zip(pg, nw):
            for key in ("l_p", "l_s", "l_s_w", "l_lt", "l_ult", "l1"):
                assert abs(a[key] - b[key]) <= 1e-9
        assert (tmp_path / "pg" / "params.json").read_bytes() == (tmp_path / "nw" / "params.json").read_bytes()

    def test_uda_only_never_reads_labeled_target_labels(self):
        cfg = toy_run_config(mode="uda_only", iterations=80)
        state = init_state(cfg)
        for _ in range(80):
            step(state)
        assert state.bundle.lt.label_reads == 0

    def test_predguide_reads_labeled_target_labels(self):
        cfg = toy_run_config(mode="predguide", iterations=80, t1=10, t2=60, t_n=20)
        state = init_state(cfg)
        for _ in range(80):
            step(state)
        assert state.bundle.lt.label_reads > 0

    def test_s_plus_t_never_activates_adaptation_terms(self, tmp_path):
        run(toy_run_config(mode="s_plus_t", iterations=60), out_dir=tmp_path)
        records = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
        for rec in records:
            assert not rec["pseudo_active"] and not rec["ult_active"]
            assert rec["lt_active"] and rec["source_active"]
            assert rec["l_p"] == 0.0 and rec["l_ult"] == 0.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_loss_aborts_with_diagnostic(self, tmp_path):
        cfg = toy_run_config(lr=1e18, iterations=200, patience=1000)
        with pytest.raises(TrainingDiverged):
            run(cfg, out_dir=tmp_path)
        diag = json.loads((tmp_path / "diverged.json").read_text())
        assert "t" in diag

    def test_pinned_thresholds_respected(self, tmp_path):
        cfg = toy_run_config(t1=30, t2=60, iterations=90, t_n=15)
        res = run(cfg, out_dir=tmp_path)
        assert res.t1 == 30 and res.t2 == 60
        records = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
        assert [r["t"] for r in records if r["weights_recomputed"]] == [30, 45, 60, 75]

    def test_invalid_mode_rejected(self):
        cfg = toy_run_config()
        cfg.mode = "bogus"
        with pytest.raises(ValueError):
            run(cfg)

    def test_clamped_ablation_modes_constrain_tables(self):
        for mode, check in (
            ("near_only", lambda w: np.all(w >= 1.0)),
            ("far_only", lambda w: np.all(w <= 1.0)),
            ("fixed_weights", lambda w: set(np.round(w, 12)) <= {0.5, 1.0, 1.5}),
        ):
            cfg = toy_run_config(mode=mode, iterations=40, t1=10, t2=1000, t_n=10)
            state = init_state(cfg)
            for _ in range(40):
                step(state)
            assert state.table.created_t >= 10
            assert check(state.table.w), mode

    def test_focal_mode_runs_and_switches_style(self, tmp_path):
        run(toy_run_config(mode="focal", iterations=60, t1=20, t2=40), out_dir=tmp_path)
        records = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
        assert all(r["source_style"] == "plain" for r in records if r["t"] < 20)
        assert all(r["source_style"] == "focal" for r in records if r["t"] >= 20)
        assert not any(r["weights_recomputed"] for r in records)

    def test_dump_weights_writes_audit_csvs(self, tmp_path):
        cfg = toy_run_config(iterations=50, t1=10, t2=1000, t_n=20, dump_weights=True)
        run(cfg, out_dir=tmp_path)
        dumps = sorted(tmp_path.glob("weights_t*.csv"))
        assert [p.name for p in dumps] == ["weights_t20.csv", "weights_t40.csv"]
        lines = dumps[0].read_text().splitlines()
        assert lines[0] == "idx,class,similarity,weight"
        assert len(lines) == 1 + 3 * 40  # one row per source sample
