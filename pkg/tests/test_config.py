"""Tests for presets, the YAML config file and run config resolution."""

import pytest
import yaml

from lesets.config import (
    PRESETS,
    TARGET_PRESETS,
    RunConfig,
    load_config,
    resolve_run_config,
)
from lesets.model import DeepSetsModel, LESetsModel, ModelConfig


def _write_yaml(tmp_path, data, name="lesets.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestPresets:
    """Tuned presets per target."""

    def test_youngs(self):
        assert PRESETS["youngs"] == ModelConfig("GraphConv", 2, 3, 32, True)

    def test_bulk(self):
        assert PRESETS["bulk"] == ModelConfig("CGConv", 3, 3, 32, False)

    def test_rws(self):
        assert PRESETS["rws"] == ModelConfig("CGConv", 2, 3, 32, False)

    def test_every_target_has_a_preset(self):
        assert set(TARGET_PRESETS.values()) == set(PRESETS)


class TestLoadConfig:
    """Tests for load_config()."""

    def test_explicit_path(self, tmp_path):
        path = _write_yaml(tmp_path, {"run": {"target": "rws"}, "train": {"max_epochs": 7}})
        assert load_config(path) == {"run": {"target": "rws"}, "train": {"max_epochs": 7}}

    def test_explicit_path_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "missing.yaml")

    def test_no_file_found(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("HOME", str(tmp_path))
        assert load_config() == {}

    def test_working_directory_default(self, tmp_path, monkeypatch):
        _write_yaml(tmp_path, {"run": {"seed": 4}})
        monkeypatch.chdir(tmp_path)
        assert load_config() == {"run": {"seed": 4}}

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        assert load_config(path) == {}

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ValueError, match="unknown section"):
            load_config(_write_yaml(tmp_path, {"plots": {"dpi": 300}}))

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bad config"):
            load_config(path)

    def test_section_not_a_mapping(self, tmp_path):
        with pytest.raises(ValueError, match="must be a mapping"):
            load_config(_write_yaml(tmp_path, {"train": [1, 2]}))

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("run: [unclosed\n", encoding="utf-8")
        with pytest.raises(ValueError, match="bad config"):
            load_config(path)


class TestResolveRunConfig:
    """Precedence: flags, then config file, then preset, then defaults."""

    def test_preset_follows_target(self):
        config = resolve_run_config(target="bulk_modulus")
        assert config.preset == "bulk"
        assert config.model == PRESETS["bulk"]

    def test_target_follows_preset(self):
        assert resolve_run_config(preset="youngs").target == "youngs_modulus"

    def test_no_target(self):
        with pytest.raises(ValueError, match="no target given"):
            resolve_run_config({})

    def test_unknown_target(self):
        with pytest.raises(ValueError, match="unknown target"):
            resolve_run_config(target="hardness")

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            resolve_run_config(preset="shear")

    def test_file_overrides_preset(self):
        config = resolve_run_config({"run": {"target": "rws"}, "model": {"hidden_dim": 16, "use_att": True}})
        assert config.model.hidden_dim == 16
        assert config.model.use_att is True
        assert config.model.conv_operator == "CGConv"

    def test_flags_override_file(self, tmp_path):
        file_config = {"run": {"target": "rws", "seed": 3, "out": "from_file", "threads": 2}}
        config = resolve_run_config(file_config, target="bulk_modulus", seed=5, out=tmp_path, threads=1)
        assert config.target == "bulk_modulus"
        assert config.seed == 5
        assert config.model.seed == 5
        assert config.train.seed == 5
        assert config.out == tmp_path
        assert config.threads == 1

    def test_file_values_used_without_flags(self):
        config = resolve_run_config({"run": {"target": "rws", "seed": 3, "threads": 2}})
        assert (config.seed, config.threads) == (3, 2)

    def test_train_overrides_beat_file(self):
        config = resolve_run_config(
            {"run": {"target": "rws"}, "train": {"max_epochs": 50, "batch_size": 8}},
            train_overrides={"max_epochs": 4},
        )
        assert config.train.max_epochs == 4
        assert config.train.batch_size == 8

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown key"):
            resolve_run_config({"run": {"target": "rws"}, "train": {"epochs": 3}})

    def test_defaults(self):
        config = resolve_run_config(target="rws")
        assert config.model_kind == "lesets"
        assert str(config.out) == "output"
        assert config.data is None
        assert config.train.max_epochs == 500


class TestRunConfig:
    """Tests for RunConfig."""

    def test_model_factory_seeds_models(self):
        factory = resolve_run_config(target="youngs_modulus").model_factory(node_dim=29)
        a, b = factory(1), factory(1)
        assert isinstance(a, LESetsModel)
        assert a.config.seed == 1
        assert all((a.state_dict()[k] == b.state_dict()[k]).all() for k in a.state_dict())

    def test_deepsets_factory(self):
        factory = resolve_run_config(target="rws", model_kind="deepsets").model_factory(node_dim=29)
        assert isinstance(factory(0), DeepSetsModel)

    def test_invalid_model_kind(self):
        with pytest.raises(ValueError, match="unknown model"):
            resolve_run_config(target="rws", model_kind="transformer")

    def test_to_dict_is_yaml_safe(self, tmp_path):
        config = resolve_run_config(target="rws", data=tmp_path / "d.csv")
        data = config.to_dict()
        assert yaml.safe_load(yaml.safe_dump(data)) == data
        assert data["data"].endswith("d.csv")

    def test_threads_validated(self):
        with pytest.raises(ValueError):
            RunConfig(target="rws", preset="rws", model=PRESETS["rws"], threads=0)
