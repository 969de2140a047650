import dataclasses
import filecmp
import json
import os

import pytest
import torch

from lta.cli import main as cli_main
from lta.datagen import GrammarConfig
from lta.h3m import H3MConfig, h3m_train
from lta.harness import (CheckpointError, ExperimentConfig, HarnessError,
                         config_from_dict, config_hash, config_to_dict,
                         load_h3m, load_icvae, prepare_windows, run_pipeline,
                         save_h3m, save_icvae)
from lta.icvae import ICVAEConfig, icvae_train
from lta.taxonomy import build_context_bags

TINY_GRAMMAR = dict(num_intentions=3, num_verbs=6, num_nouns=9,
                    noun_bag_size=3, noun_shared=1, feature_dim=8,
                    num_frames=6, video_len_min=10, video_len_max=12,
                    num_videos=20, seed=17)


def tiny_config(**kw):
    defaults = dict(
        grammar=GrammarConfig(**TINY_GRAMMAR),
        n=3, z=4, k=2, seed=17, train_windows=60, eval_windows=20,
        h3m=H3MConfig(phase1_epochs=1, phase2_epochs=1),
        icvae=ICVAEConfig(d=4, enc_layers=1, dec_layers=1, heads=1,
                          ff_mult=2, epochs=1),
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def trained():
    config = tiny_config()
    train, ds = prepare_windows(config, "train", config.train_windows,
                                with_features=True)
    eval_ex, _ = prepare_windows(config, "eval", config.eval_windows,
                                 with_features=True)
    sizes = (len(ds.vocabulary.verbs), len(ds.vocabulary.nouns),
             len(ds.vocabulary.intentions))
    bags = build_context_bags(ds.records,
                              num_intentions=config.grammar.num_intentions)
    h3m_model, _ = h3m_train(train, *sizes, config=config.h3m,
                             seed=config.seed)
    icvae_model, _ = icvae_train(train, *sizes, config=config.icvae,
                                 seed=config.seed)
    return config, h3m_model, icvae_model, eval_ex, bags


class TestConfig:
    def test_hash_stable_under_key_reordering(self):
        config = tiny_config()
        doc = config_to_dict(config)
        scrambled = json.loads(json.dumps(doc, sort_keys=True))
        reordered = dict(reversed(list(scrambled.items())))
        assert config_hash(config_from_dict(reordered)) == config_hash(config)

    def test_distinct_configs_distinct_hashes(self):
        a = tiny_config()
        b = tiny_config(seed=18)
        assert config_hash(a) != config_hash(b)

    def test_unknown_top_level_key(self):
        doc = config_to_dict(tiny_config())
        doc["typo"] = 1
        with pytest.raises(HarnessError) as e:
            config_from_dict(doc)
        assert e.value.code == "unknown_config_key"

    def test_unknown_nested_key(self):
        doc = config_to_dict(tiny_config())
        doc["icvae"]["typo"] = 1
        with pytest.raises(HarnessError) as e:
            config_from_dict(doc)
        assert e.value.code == "unknown_config_key"

    def test_roundtrip(self):
        config = tiny_config()
        assert config_from_dict(config_to_dict(config)) == config

    def test_bad_nzk(self):
        with pytest.raises(HarnessError):
            tiny_config(n=0)


class TestCheckpoints:
    def test_h3m_roundtrip_bit_exact(self, trained, tmp_path):
        config, h3m_model, _, _, _ = trained
        path = str(tmp_path / "h3m.pt")
        save_h3m(h3m_model, config, path)
        loaded, header = load_h3m(path)
        for key, value in h3m_model.state_dict().items():
            assert torch.equal(loaded.state_dict()[key], value)
        assert header["config_hash"] == config_hash(config)
        assert header["T"] == config.grammar.num_frames
        assert header["N"] == config.n

    def test_icvae_roundtrip_bit_exact(self, trained, tmp_path):
        config, _, icvae_model, _, _ = trained
        path = str(tmp_path / "icvae.pt")
        save_icvae(icvae_model, config, path)
        loaded, header = load_icvae(path)
        for key, value in icvae_model.state_dict().items():
            assert torch.equal(loaded.state_dict()[key], value)
        assert header["Z"] == config.z
        assert header["no_intention"] is False

    def test_model_mismatch(self, trained, tmp_path):
        config, _, icvae_model, _, _ = trained
        path = str(tmp_path / "icvae.pt")
        save_icvae(icvae_model, config, path)
        with pytest.raises(CheckpointError) as e:
            load_h3m(path)
        assert e.value.code == "model_mismatch"

    def test_corrupt_file(self, tmp_path):
        path = str(tmp_path / "bad.pt")
        with open(path, "wb") as f:
            f.write(b"not a checkpoint")
        with pytest.raises(CheckpointError) as e:
            load_icvae(path)
        assert e.value.code == "corrupt"


class TestPrepareWindows:
    def test_exact_target_count(self):
        config = tiny_config()
        windows, _ = prepare_windows(config, "train", 25, with_features=False)
        assert len(windows) == 25

    def test_prefix_stable_in_target(self):
        config = tiny_config()
        small, _ = prepare_windows(config, "train", 10, with_features=False)
        big, _ = prepare_windows(config, "train", 40, with_features=False)
        assert big[:10] == small

    def test_splits_disjoint(self):
        config = tiny_config()
        train, _ = prepare_windows(config, "train", 10, with_features=False)
        evals, _ = prepare_windows(config, "eval", 10, with_features=False)
        train_videos = {ex.example_id.split(":")[0] for ex in train}
        eval_videos = {ex.example_id.split(":")[0] for ex in evals}
        assert train_videos.isdisjoint(eval_videos)


class TestRunPipeline:
    def test_empty_eval_rejected(self, trained):
        config, _, icvae_model, _, _ = trained
        with pytest.raises(HarnessError) as e:
            run_pipeline([], icvae_model, config, oracle_obs=True)
        assert e.value.code == "empty_eval"

    def test_missing_h3m_rejected(self, trained):
        config, _, icvae_model, eval_ex, _ = trained
        with pytest.raises(HarnessError) as e:
            run_pipeline(eval_ex, icvae_model, config)
        assert e.value.code == "missing_model"

    def test_n_mismatch_rejected(self, trained):
        config, h3m_model, icvae_model, eval_ex, _ = trained
        bad = dataclasses.replace(config, n=4)
        with pytest.raises(HarnessError) as e:
            run_pipeline(eval_ex, icvae_model, bad, h3m_model=h3m_model)
        assert e.value.code == "n_mismatch"

    def test_oracle_report_shape(self, trained):
        config, _, icvae_model, eval_ex, bags = trained
        report = run_pipeline(eval_ex, icvae_model, config, oracle_obs=True,
                              bags=bags)
        assert report.n_examples == len(eval_ex)
        for mode in ("verb", "noun", "action"):
            assert 0.0 <= report.ed20[mode] <= 1.0
            assert len(report.curves[mode]) == config.z
        assert report.config["oracle_obs"] is True
        assert report.accuracy is None

    def test_predicted_report_has_accuracy_table(self, trained):
        config, h3m_model, icvae_model, eval_ex, bags = trained
        report = run_pipeline(eval_ex, icvae_model, config,
                              h3m_model=h3m_model, bags=bags)
        assert report.accuracy is not None
        for split in report.accuracy.values():
            assert set(split) == {"n", "verb_top1", "verb_top5",
                                  "noun_top1", "noun_top5"}

    def test_byte_identical_reports(self, trained):
        config, _, icvae_model, eval_ex, bags = trained
        a = run_pipeline(eval_ex, icvae_model, config, oracle_obs=True,
                         bags=bags)
        b = run_pipeline(eval_ex, icvae_model, config, oracle_obs=True,
                         bags=bags)
        assert a.to_json().encode() == b.to_json().encode()


def run_cli(*argv):
    return cli_main(list(argv))


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    grammar_path = root / "grammar.json"
    grammar_path.write_text(json.dumps(TINY_GRAMMAR))
    experiment = {
        "grammar": TINY_GRAMMAR, "n": 3, "z": 4, "k": 2, "seed": 17,
        "h3m": {"phase1_epochs": 1, "phase2_epochs": 0},
        "icvae": {"d": 4, "enc_layers": 1, "dec_layers": 1, "heads": 1,
                  "ff_mult": 2, "epochs": 1},
    }
    config_path = root / "experiment.json"
    config_path.write_text(json.dumps(experiment))
    data_dir = root / "data"
    code = run_cli("synth-gen", "--config", str(grammar_path),
                   "--out", str(data_dir))
    assert code == 0
    return root, str(grammar_path), str(config_path), str(data_dir)


class TestCLI:
    def test_unknown_flag_exit_2(self):
        assert run_cli("synth-gen", "--out", "/tmp/x", "--bogus") == 2

    def test_unknown_subcommand_exit_2(self):
        assert run_cli("frobnicate") == 2

    def test_outdir_refused_without_overwrite(self, cli_workspace):
        _, grammar_path, _, data_dir = cli_workspace
        assert run_cli("synth-gen", "--config", grammar_path,
                       "--out", data_dir) == 1

    def test_outdir_reused_with_overwrite(self, cli_workspace, capsys):
        _, grammar_path, _, data_dir = cli_workspace
        assert run_cli("synth-gen", "--config", grammar_path,
                       "--out", data_dir, "--overwrite") == 0

    def test_synth_gen_deterministic(self, cli_workspace, tmp_path):
        _, grammar_path, _, data_dir = cli_workspace
        other = tmp_path / "again"
        assert run_cli("synth-gen", "--config", grammar_path,
                       "--out", str(other)) == 0
        for name in ("annotations.json", "manifest.json", "vocab.json"):
            assert filecmp.cmp(os.path.join(data_dir, name),
                               other / name, shallow=False)
        features = sorted(os.listdir(os.path.join(data_dir, "features")))
        assert features == sorted(os.listdir(other / "features"))
        for name in features[:20]:
            assert filecmp.cmp(os.path.join(data_dir, "features", name),
                               other / "features" / name, shallow=False)

    def test_full_flow(self, cli_workspace):
        root, _, config_path, data_dir = cli_workspace
        h3m_dir, icvae_dir = str(root / "h3m"), str(root / "icvae")
        assert run_cli("train-h3m", "--config", config_path,
                       "--data", data_dir, "--out", h3m_dir) == 0
        assert run_cli("train-icvae", "--config", config_path,
                       "--data", data_dir, "--out", icvae_dir) == 0
        pred_path = str(root / "pred.jsonl")
        assert run_cli("predict", "--h3m", os.path.join(h3m_dir, "h3m.pt"),
                       "--icvae", os.path.join(icvae_dir, "icvae.pt"),
                       "--data", data_dir, "--out", pred_path, "--k", "2") == 0
        with open(pred_path) as f:
            rows = [json.loads(line) for line in f]
        assert rows
        for row in rows:
            assert set(row) == {"example_id", "intention", "candidates"}
            assert len(row["candidates"]) == 2
            assert all(len(c) == 4 for c in row["candidates"])
        report_path = str(root / "report.json")
        assert run_cli("evaluate", "--pred", pred_path, "--truth", data_dir,
                       "--report", report_path) == 0
        with open(report_path) as f:
            report = json.load(f)
        assert set(report) >= {"ed20", "curves", "ooc", "n_examples"}
        assert report["n_examples"] == len(rows)

    def test_predict_oracle_obs_without_h3m(self, cli_workspace):
        root, _, config_path, data_dir = cli_workspace
        icvae_ckpt = os.path.join(str(root / "icvae"), "icvae.pt")
        pred_path = str(root / "pred_oracle.jsonl")
        assert run_cli("predict", "--icvae", icvae_ckpt, "--data", data_dir,
                       "--out", pred_path, "--oracle-obs") == 0
        assert os.path.exists(pred_path)

    def test_predict_requires_h3m_without_oracle(self, cli_workspace):
        root, _, _, data_dir = cli_workspace
        icvae_ckpt = os.path.join(str(root / "icvae"), "icvae.pt")
        assert run_cli("predict", "--icvae", icvae_ckpt, "--data", data_dir,
                       "--out", str(root / "nope.jsonl")) == 1

    def test_missing_checkpoint_reports_error(self, cli_workspace, capsys):
        root, _, _, data_dir = cli_workspace
        code = run_cli("predict", "--icvae", str(root / "missing.pt"),
                       "--data", data_dir, "--out", str(root / "x.jsonl"),
                       "--oracle-obs")
        assert code == 1
        assert "error:" in capsys.readouterr().err
