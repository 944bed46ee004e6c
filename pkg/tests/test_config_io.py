import json
import sys

import numpy as np
import pytest

from loadmdn.config import CLI_VARIANTS, ConfigError, RunConfig, apply_overrides, from_mapping, load_config
from loadmdn.data import build_features, ingest_load_csv, split_chronological, resample_hourly, UKSMEC_SCHEMA
from loadmdn.ensemble import predict_samples, train_ensemble
from loadmdn.io import (ArtifactError, check_compatible, load_model, read_dataset, read_history, read_manifest,
                        read_params, save_model, write_dataset, write_history, write_params)
from loadmdn.training import ModelSpec, TrainConfig, train

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def test_defaults_and_variant_mapping():
    cfg = RunConfig()
    assert cfg.variant == "det-mdn" and cfg.seed == 0 and cfg.n_members == 1
    assert RunConfig(variant="bay-mdn-devi").n_members == 5
    assert RunConfig(variant="bay-mdn-devi").model_spec().variant == "bay-mdn"
    assert RunConfig(variant="gauss-homo").model_spec().n_components == 1
    assert set(CLI_VARIANTS) == {"gauss-homo", "gauss-hete", "det-mdn", "bay-mdn-vi", "bay-mdn-de", "bay-mdn-devi"}


def test_train_config_carries_seed_and_hyper_parameters():
    t = RunConfig(seed=7).train_config()
    assert (t.seed, t.lr, t.batch_size, t.patience) == (7, 1e-3, 512, 50)


@pytest.mark.parametrize("doc", [{"colour": 1}, {"model": {"depth": 3}}, {"optim": {}}, {"seed": "x"},
                                 {"model": {"hidden_sizes": 3}}, {"train": {"batch_size": 1.5}},
                                 {"data": {"skip_invalid": 1}}, {"variant": "qrnn"}, {"train": {"n_members": -1}}])
def test_bad_documents_rejected(doc):
    with pytest.raises(ConfigError):
        from_mapping(doc)


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('variant = "gauss-hete"\nseed = 3\n[model]\nhidden_sizes = [16, 16]\n[train]\nlr = 0.01\n')
    cfg = load_config(path, {"seed": 11, "train.lr": None, "model.psi": 0.3})
    assert cfg.variant == "gauss-hete" and cfg.seed == 11
    assert cfg.model.hidden_sizes == [16, 16] and cfg.train.lr == 0.01 and cfg.model.psi == 0.3
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"nope.lr": 1})
    with pytest.raises(ConfigError):
        apply_overrides(cfg, {"variant": "qrnn"})


def test_malformed_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("seed = = 1\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(path)


def test_config_echo_round_trips(tmp_path):
    cfg = load_config(None, {"variant": "bay-mdn-vi", "seed": 4, "predict.n_samples": 200})
    path = cfg.write(tmp_path)
    with open(path, "rb") as fh:
        assert from_mapping(tomllib.load(fh)) == cfg
    assert load_config(path) == cfg


def _fixture_set(path):
    return split_chronological(build_features(resample_hourly(ingest_load_csv(path, "MAC000002", UKSMEC_SCHEMA))))


def test_dataset_round_trip_is_exact(tmp_path, uksmec_csv):
    d = _fixture_set(uksmec_csv)
    write_dataset(d, tmp_path / "ds")
    back = read_dataset(tmp_path / "ds")
    np.testing.assert_array_equal(back.inputs, d.inputs)
    np.testing.assert_array_equal(back.targets, d.targets)
    np.testing.assert_array_equal(back.timestamps, d.timestamps)
    np.testing.assert_array_equal(back.split, d.split)
    assert back.feature_names == d.feature_names and back.household_id == "MAC000002"
    assert back.y_scaler == d.y_scaler
    assert read_dataset(tmp_path / "ds" / "dataset.csv").n_features == 45


def test_dataset_schema_mismatch(tmp_path, small_synthetic):
    write_dataset(small_synthetic, tmp_path)
    csv_path = tmp_path / "dataset.csv"
    csv_path.write_text(csv_path.read_text().replace("schema_version=1", "schema_version=9", 1))
    with pytest.raises(ArtifactError, match="schema"):
        read_dataset(tmp_path)
    with pytest.raises(FileNotFoundError, match="missing"):
        read_dataset(tmp_path / "missing")


def test_params_and_history_round_trip(tmp_path, small_synthetic):
    m = train(ModelSpec("bay-mdn", hidden_sizes=(4,)), small_synthetic, TrainConfig(max_epochs=3, patience=2))
    write_params(m, tmp_path / "p.json")
    spec, params = read_params(tmp_path / "p.json")
    assert spec == m.spec and params.keys() == m.params.keys()
    for k in params:
        np.testing.assert_array_equal(params[k], m.params[k])
    write_history(m.history, tmp_path / "h.tsv")
    assert read_history(tmp_path / "h.tsv") == m.history


def test_params_rejects_other_formats(tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"format": "other", "version": 1}))
    with pytest.raises(ArtifactError):
        read_params(p)
    p.write_text("{not json")
    with pytest.raises(ArtifactError, match="malformed"):
        read_params(p)


def test_model_round_trip_predicts_identically(tmp_path, small_synthetic):
    e = train_ensemble(ModelSpec("det-mdn", hidden_sizes=(4,)), small_synthetic, TrainConfig(max_epochs=3, patience=2), 2)
    save_model(e, tmp_path, "bay-mdn-de")
    man = read_manifest(tmp_path)
    assert man["variant"] == "bay-mdn-de" and len(man["members"]) == 2
    back = load_model(tmp_path)
    x = small_synthetic.part("test").inputs
    np.testing.assert_array_equal(predict_samples(back, x, 20, seed=1).samples,
                                  predict_samples(e, x, 20, seed=1).samples)
    assert [m.history for m in back.members] == [m.history for m in e.members]


def test_compatibility_checks(tmp_path, small_synthetic, uksmec_csv):
    m = train(ModelSpec("gauss-homo", hidden_sizes=(2,)), small_synthetic, TrainConfig(max_epochs=2, patience=1))
    save_model(m, tmp_path)
    man = read_manifest(tmp_path)
    check_compatible(man, small_synthetic)
    with pytest.raises(ArtifactError, match="features"):
        check_compatible(man, _fixture_set(uksmec_csv))
    with pytest.raises(ArtifactError, match="schema"):
        check_compatible(dict(man, dataset_schema_version=2), small_synthetic)
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "none")
