import json

import numpy as np
import pytest
from helpers import random_union

from lpud.cli import main
from lpud.config import DatasetConfig, ExcitationConfig, ExperimentConfig, ModelConfig, desk_preset, full_preset, load_config
from lpud.errors import ConfigurationError
from lpud.harness import (
    PURPOSE,
    SUMMARY_HEADER,
    TRACE_HEADER,
    aggregate,
    prepare_models,
    read_csv,
    rng_for,
    run_experiment,
    run_trial,
    seed_int,
    simulate_observation,
)
from lpud.rir import RoomScenario
from lpud.signal import MultichannelSignal
from lpud.subspace import AffineSubspaceModel, SubspaceUnion


def tiny_config(**changes):
    base = dict(
        scenario=RoomScenario(rir_length=128),
        dataset=DatasetConfig(G=30, L=32),
        model=ModelConfig(n_clusters=2, local_dim=4, global_dim=8, n_eigenfilters=3),
        excitation=ExcitationConfig(duration_s=0.2),
        n_trials=2,
        snr_db=(10.0,),
    )
    base.update(changes)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_models():
    cfg = tiny_config()
    return cfg, prepare_models(cfg)


class TestObservation:
    def test_infinite_snr(self):
        rng = np.random.default_rng(0)
        x = MultichannelSignal(rng.standard_normal((1, 400)), 8000)
        y, d, var = simulate_observation(rng.standard_normal((1, 50, 2)), x, np.inf, 1)
        assert np.array_equal(y.data, d.data) and var == 0.0

    def test_full_length_convolution(self):
        rng = np.random.default_rng(1)
        rirs = rng.standard_normal((1, 40, 2))
        x = MultichannelSignal(rng.standard_normal((1, 300)), 8000)
        _, d, _ = simulate_observation(rirs, x, np.inf, 0)
        for q in range(2):
            np.testing.assert_allclose(d.data[q], np.convolve(x.data[0], rirs[0, :, q])[:300], atol=1e-10)

    def test_empirical_snr(self):
        rng = np.random.default_rng(2)
        x = MultichannelSignal(rng.standard_normal((1, 100_000)), 8000)
        y, d, _ = simulate_observation(rng.standard_normal((1, 64, 2)), x, 0.0, 3)
        snr = 10 * np.log10(np.sum(d.data ** 2) / np.sum((y.data - d.data) ** 2))
        assert abs(snr) <= 0.2

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        rirs, x = rng.standard_normal((1, 16, 1)), MultichannelSignal(rng.standard_normal((1, 100)), 8000)
        a, _, _ = simulate_observation(rirs, x, 5.0, 11)
        b, _, _ = simulate_observation(rirs, x, 5.0, 11)
        assert np.array_equal(a.data, b.data)

    def test_errors(self):
        x = MultichannelSignal(np.zeros((1, 100)), 8000)
        with pytest.raises(ConfigurationError):
            simulate_observation(np.ones((1, 10, 1)), x, 0.0, 0)
        with pytest.raises(ConfigurationError):
            simulate_observation(np.ones((1, 200, 1)), MultichannelSignal(np.ones((1, 100)), 8000), 0.0, 0)


class TestSeeds:
    def test_streams_are_disjoint_and_stable(self):
        assert len(set(PURPOSE.values())) == len(PURPOSE)
        a = rng_for(0, "position", 1).standard_normal(4)
        assert np.array_equal(a, rng_for(0, "position", 1).standard_normal(4))
        assert not np.array_equal(a, rng_for(0, "position", 2).standard_normal(4))
        assert not np.array_equal(a, rng_for(0, "excitation", 1).standard_normal(4))
        assert seed_int(5, "noise", 0, 1) != seed_int(5, "noise", 0, 0)

    def test_enabling_algorithms_does_not_shift_draws(self, tiny_models):
        cfg, models = tiny_models
        full = run_trial(cfg, 0, models)
        base = run_trial(cfg.replace(algorithms=("baseline",)), 0, models)
        np.testing.assert_array_equal(full.source_position, base.source_position)
        np.testing.assert_array_equal(full.mismatch["baseline"], base.mismatch["baseline"])


class TestRunTrial:
    def test_result_shapes(self, tiny_models):
        cfg, models = tiny_models
        res = run_trial(cfg, 0, models)
        M = cfg.n_blocks
        assert res.n_blocks == M
        assert set(res.mismatch) == {"baseline", "gpud", "lpud"}
        assert set(res.erle) == {"baseline", "gpud", "lpud", "oracle"}
        assert res.selected["lpud"].shape == (M,)
        assert res.estimates["lpud"].shape == (M, 2)
        assert res.switched["lpud"][0]
        assert np.all(res.selected["gpud"] == 0)

    def test_deterministic(self, tiny_models):
        cfg, models = tiny_models
        a, b = run_trial(cfg, 1, models), run_trial(cfg, 1, models)
        for k in a.mismatch:
            assert np.array_equal(a.mismatch[k], b.mismatch[k])
        assert a.erle == b.erle and a.seeds == b.seeds

    def test_baseline_only_skips_models(self):
        cfg = tiny_config(algorithms=("baseline",))
        models = prepare_models(cfg)
        assert models.unions == {} and models.dataset is None
        res = run_trial(cfg, 0, models)
        assert list(res.mismatch) == ["baseline"] and res.selected == {}

    def test_test_position_not_in_training_set(self, tiny_models):
        cfg, models = tiny_models
        res = run_trial(cfg, 0, models)
        dist = np.linalg.norm(models.dataset.source_positions - res.source_position, axis=1)
        assert dist.min() > 0

    def test_identity_union_matches_baseline(self):
        cfg = tiny_config(algorithms=("baseline", "lpud"))
        R = 1 * cfg.dataset.L * cfg.scenario.n_mics
        rng = np.random.default_rng(0)
        models = [AffineSubspaceModel(rng.standard_normal(R), np.eye(R), np.linspace(1, 0.1, R), R + 1)
                  for _ in range(2)]
        prepared = prepare_models(cfg, unions={"lpud": SubspaceUnion(models, 1, cfg.dataset.L, 2)})
        res = run_trial(cfg, 0, prepared)
        np.testing.assert_allclose(res.mismatch["lpud"], res.mismatch["baseline"], rtol=1e-8, atol=1e-12)

    def test_k_clipped_to_model_dimension(self):
        cfg = tiny_config(algorithms=("lpud",))
        union = random_union(np.random.default_rng(1), 2, 1, cfg.dataset.L, 2, 2)
        prepared = prepare_models(cfg, unions={"lpud": union})
        assert prepared.banks["lpud"].K == (2, 2)


class TestExperiment:
    def test_outputs_and_schema(self, tiny_models, tmp_path):
        cfg, models = tiny_models
        cfg = cfg.replace(snr_db=(-5.0, 20.0))
        results = run_experiment(cfg, models, tmp_path)
        assert len(results) == 4
        assert sorted(p.name for p in (tmp_path / "trials").iterdir()) == [
            "trial_snr+20_000.csv", "trial_snr+20_001.csv", "trial_snr-5_000.csv", "trial_snr-5_001.csv"]
        for name in ("summary.csv", "mismatch_trace.csv"):
            assert (tmp_path / name).read_text().startswith("# lpud-csv/1\n")
        summary = read_csv(tmp_path / "summary.csv")
        assert list(summary[0]) == SUMMARY_HEADER
        keys = [(r["snr_db"], r["algorithm"], r["phase"]) for r in summary]
        assert len(keys) == len(set(keys)) == 2 * 4 * 2
        trace = read_csv(tmp_path / "mismatch_trace.csv")
        assert list(trace[0]) == TRACE_HEADER
        assert len(trace) == 2 * 3 * cfg.n_blocks
        trial = read_csv(tmp_path / "trials" / "trial_snr-5_000.csv")
        assert {"E_1", "E_2", "selected", "switched"} <= set(trial[0])
        assert compile((tmp_path / "plot_results.py").read_text(), "plot_results.py", "exec")

    def test_single_trial_aggregate_equals_trial(self, tiny_models):
        cfg, models = tiny_models
        cfg = cfg.replace(n_trials=1)
        res = run_trial(cfg, 0, models)
        trace_rows, summary_rows = aggregate([res], cfg)
        lpud_rows = [r for r in trace_rows if r[2] == "lpud"]
        np.testing.assert_allclose([r[5] for r in lpud_rows], 10 * np.log10(res.mismatch["lpud"]))
        ss = next(r for r in summary_rows if r[2] == "baseline" and r[3] == "ss")
        assert ss[4] == pytest.approx(10 * np.log10(res.erle["baseline"]["ss"]))
        assert ss[6] == pytest.approx(10 * np.log10(res.mismatch_avg["baseline"]["ss"]))

    def test_parallel_matches_serial(self, tiny_models, tmp_path):
        cfg, models = tiny_models
        run_experiment(cfg, models, tmp_path / "a")
        run_experiment(cfg.replace(n_jobs=2), models, tmp_path / "b")
        for name in ("summary.csv", "mismatch_trace.csv", "trials/trial_snr+10_001.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestConfig:
    def test_presets(self):
        d, p = desk_preset(), full_preset()
        assert (d.scenario.rir_length, d.dataset.L, d.dataset.G, d.model.n_clusters) == (1024, 512, 500, 8)
        assert (d.model.local_dim, d.model.n_eigenfilters, d.n_trials, d.n_samples) == (20, 5, 10, 80000)
        assert (p.scenario.rir_length, p.dataset.L, p.dataset.G, p.n_trials) == (4096, 1024, 5000, 50)
        assert (p.model.n_clusters, p.model.local_dim, p.model.global_dim) == (40, 50, 550)

    def test_json_round_trip(self, tmp_path):
        cfg = tiny_config(seed=7)
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert load_config(path) == cfg

    @pytest.mark.parametrize("where", [None, "model", "scenario", "filter"])
    def test_unknown_keys_rejected(self, tmp_path, where):
        d = tiny_config().to_dict()
        (d if where is None else d[where])["bogus"] = 1
        path = tmp_path / "c.json"
        path.write_text(json.dumps(d))
        with pytest.raises(ConfigurationError, match="bogus"):
            load_config(path)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            tiny_config(n_trials=0)
        with pytest.raises(ConfigurationError):
            tiny_config(algorithms=("rls",))
        with pytest.raises(ConfigurationError):
            tiny_config(excitation=ExcitationConfig(duration_s=0.005))


class TestCli:
    def test_full_pipeline(self, tmp_path, capsys):
        cfg = tiny_config(n_trials=1)
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps(cfg.to_dict()))
        assert main(["simulate-rirs", str(conf), "--out-dir", str(tmp_path / "ds")]) == 0
        assert (tmp_path / "ds" / "manifest.json").exists()
        assert main(["learn", str(conf), "--dataset", str(tmp_path / "ds"), "--out-dir", str(tmp_path / "m")]) == 0
        assert (tmp_path / "m" / "lpud" / "manifest.json").exists()
        assert main(["run", str(conf), "--models", str(tmp_path / "m"), "--trial", "0",
                     "--out-dir", str(tmp_path / "r")]) == 0
        assert (tmp_path / "r" / "trial_snr+10_000.csv").exists()
        assert main(["experiment", str(conf), "--models", str(tmp_path / "m"), "--seed", "0",
                     "--out-dir", str(tmp_path / "e")]) == 0
        assert (tmp_path / "e" / "summary.csv").exists()
        out = capsys.readouterr().out
        assert "lpud" in out and "mismatch" in out

    def test_learned_models_match_on_the_fly(self, tmp_path):
        cfg = tiny_config(n_trials=1)
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps(cfg.to_dict()))
        main(["learn", str(conf), "--out-dir", str(tmp_path / "m")])
        main(["run", str(conf), "--models", str(tmp_path / "m"), "--out-dir", str(tmp_path / "a")])
        main(["run", str(conf), "--out-dir", str(tmp_path / "b")])
        name = "trial_snr+10_000.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_preset_prints_json(self, capsys):
        assert main(["preset", "desk"]) == 0
        assert json.loads(capsys.readouterr().out)["dataset"]["L"] == 512

    def test_bad_config_exit_code(self, tmp_path, capsys):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"unknown": 1}))
        assert main(["run", str(conf)]) == 2
        assert "unknown" in capsys.readouterr().err
