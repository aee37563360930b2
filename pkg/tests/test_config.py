import hashlib
import json

import pytest
import yaml

from config.defaults import TRAINING_DEFAULTS
from config.loader import ConfigError, RunConfig, SEED_LIMIT, load_config, parse_override
from utils.manifest import config_hash, write_manifest


def test_override_values_are_typed():
    assert parse_override("training.lr=0.01") == (("training", "lr"), 0.01)
    assert parse_override("model.flags.cnn=false") == (("model", "flags", "cnn"), False)
    assert parse_override("evaluation.sweep_counts=[3, 6]") == (("evaluation", "sweep_counts"), [3, 6])
    assert parse_override("data.grid=runs/a.csv") == (("data", "grid"), "runs/a.csv")
    for bad in ("training.lr", "=3", "training..lr=1", "training.lr=[1"):
        with pytest.raises(ConfigError):
            parse_override(bad)


def test_defaults_survive_partial_files(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"training": {"lr": 0.01}}))
    config = load_config(path, ["training.epochs=3"])
    assert config["training"]["lr"] == 0.01
    assert config["training"]["epochs"] == 3
    assert config["training"]["batch_size"] == TRAINING_DEFAULTS["batch_size"]


def test_unknown_sections_and_keys(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({"optimizer": {"lr": 1.0}}))
    with pytest.raises(ConfigError, match="optimizer"):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(None, ["logging.level=debug"])
    with pytest.raises(ConfigError, match="pinn"):
        load_config(None, ["baselines.pinn.depth=3"])
    path.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_reference_config_resolves(tmp_path):
    config = RunConfig(command="train", out=tmp_path).resolve()
    assert config["sampling"]["collocation"] == 256
    assert config["physics"]["residual_scales"] == [0.0002, 1.0]
    assert config["scenario"]["sensors"]["count"] == 11


def test_seed_reaches_every_random_stream(tmp_path):
    config = RunConfig(command="train", out=tmp_path, seed=42).resolve()
    assert config["training"]["seed"] == config["model"]["seed"] == 42
    assert config["baselines"]["pinn"]["seed"] == 42
    with pytest.raises(ConfigError):
        RunConfig(command="train", out=tmp_path, seed=SEED_LIMIT)
    with pytest.raises(ConfigError):
        RunConfig(command="train", out=tmp_path, seed=-1)


def test_manifest_hashes_outputs(tmp_path):
    artifact = tmp_path / "report.json"
    artifact.write_text("{}\n")
    config = load_config()
    path = write_manifest(tmp_path, "evaluate", config, [artifact], seed=5)
    manifest = json.loads(path.read_text())
    assert manifest["outputs"] == {"report.json": hashlib.sha256(b"{}\n").hexdigest()}
    assert manifest["config_sha256"] == config_hash(config)
    assert manifest["seed"] == 5 and manifest["command"] == "evaluate"
    assert write_manifest(tmp_path, "evaluate", load_config(), [artifact], seed=5).read_text() == path.read_text()
