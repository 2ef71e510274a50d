"""Run-configuration parsing and strictness."""

import json

import pytest

from taskspace import config as cf
from taskspace.errors import ConfigError


def _write(tmp_path, obj):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(obj))
    return str(path)


def test_defaults_without_file():
    cfg = cf.load_run_config(None)
    assert cfg.method == "taskemb"
    assert cfg.store == "store"
    assert cfg.extractor.epochs == 3


def test_full_config_roundtrip(tmp_path):
    path = _write(tmp_path, {
        "surrogate": {"vocab_size": 16, "width": 8, "layers": 1, "heads": 2,
                      "ff_width": 16, "max_len": 16, "num_classes": 4, "seq_out_len": 4},
        "extractor": {"epochs": 1, "seed": 5},
        "method": "tupate",
        "pool": {"cap_per_source": 7, "pool_id": "p"},
        "families": [{"family_id": "parity", "seed": 2, "vocab_size": 16,
                      "num_classes": 4, "train_size": 16, "test_size": 8}],
        "store": str(tmp_path / "store"),
        "seed": 3,
    })
    cfg = cf.load_run_config(path)
    assert cfg.surrogate.width == 8
    assert cfg.extractor.epochs == 1
    assert cfg.method == "tupate"
    assert cfg.pool.cap_per_source == 7
    assert cfg.family_by_id("parity").seed == 2
    with pytest.raises(ConfigError):
        cfg.family_by_id("pair-match")
    # to_json mirrors what was parsed
    assert cfg.to_json()["method"] == "tupate"


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        cf.load_run_config(_write(tmp_path, {"methodd": "taskemb"}))
    with pytest.raises(ConfigError, match="unknown"):
        cf.load_run_config(_write(tmp_path, {"extractor": {"epoch": 1}}))
    with pytest.raises(ConfigError):
        cf.load_run_config(_write(tmp_path, {"families": [{"family_id": "nope"}]}))


def test_bad_method_and_bad_file(tmp_path):
    with pytest.raises(ConfigError):
        cf.load_run_config(_write(tmp_path, {"method": "pca"}))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        cf.load_run_config(str(bad))
    with pytest.raises(ConfigError):
        cf.load_run_config(str(tmp_path / "missing.json"))


def test_overrides_win(tmp_path):
    path = _write(tmp_path, {"method": "taskemb", "seed": 1})
    cfg = cf.load_run_config(path, overrides={"method": "tupate", "seed": None})
    assert cfg.method == "tupate"
    assert cfg.seed == 1  # None overrides are dropped


def test_store_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv(cf.STORE_ENV, str(tmp_path / "envstore"))
    cfg = cf.load_run_config(None)
    assert cfg.store == str(tmp_path / "envstore")
