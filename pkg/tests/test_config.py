import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from promptseg.config import (
    LossConfig,
    OptimizerConfig,
    RunConfig,
    ScheduleConfig,
    build_run_config,
    config_snapshot,
    load_run_config,
)
from promptseg.errors import ConfigError


def minimal_raw(**extra):
    raw = {"data": {"taxonomy": "tax.txt",
                    "manifests": {"car": {"train": "car_train.txt"}}}}
    raw.update(extra)
    return raw


def write_config(tmp_path, raw):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(raw))
    return p


# -- dataclass validation ---------------------------------------------------------

def test_section_defaults():
    assert LossConfig().ce_weight == 1.0
    assert LossConfig().lovasz_weight == 1.0
    assert OptimizerConfig().backbone_lr == 5e-5
    assert OptimizerConfig().head_lr == 8e-4
    assert OptimizerConfig().weight_decay == 0.005
    assert OptimizerConfig().betas == (0.9, 0.999)
    assert ScheduleConfig().pct_start == 0.1
    assert ScheduleConfig().div_factor == 25.0
    assert ScheduleConfig().final_div_factor == 1e4


def test_section_validation():
    with pytest.raises(ConfigError):
        LossConfig(ce_weight=-1)
    with pytest.raises(ConfigError):
        OptimizerConfig(betas=(0.9, 1.0))
    with pytest.raises(ConfigError):
        OptimizerConfig(head_lr=0)
    with pytest.raises(ConfigError):
        ScheduleConfig(pct_start=1.0)
    with pytest.raises(ConfigError):
        ScheduleConfig(div_factor=0)


def test_run_defaults():
    cfg = build_run_config(minimal_raw())
    assert cfg.epochs == 50
    assert cfg.batch_size == 4
    assert cfg.alignment == "DA"
    assert cfg.precision == "f32"
    assert cfg.voxel_size == 0.1
    assert cfg.max_points == 4096
    assert cfg.model.stage_channels == (32, 64, 128)
    assert cfg.model.stage_depths == (1, 1, 1)
    assert cfg.model.patch_size == 64
    assert cfg.model.num_heads == 2
    assert cfg.conditions == ("car",)


def test_run_validation():
    with pytest.raises(ConfigError, match="alignment"):
        build_run_config(minimal_raw(alignment="XX"))
    with pytest.raises(ConfigError, match="precision"):
        build_run_config(minimal_raw(precision="f16"))
    with pytest.raises(ConfigError, match="augment"):
        build_run_config(minimal_raw(augment="rotate"))
    with pytest.raises(ConfigError, match="epochs"):
        build_run_config(minimal_raw(epochs=0))
    with pytest.raises(ConfigError, match="split"):
        build_run_config({"data": {"taxonomy": "t",
                                   "manifests": {"car": {"trian": "x"}}}})
    with pytest.raises(ConfigError, match="data"):
        build_run_config({})


def test_unknown_keys_named():
    with pytest.raises(ConfigError, match="epohcs"):
        build_run_config(minimal_raw(epohcs=3))
    with pytest.raises(ConfigError, match=r"loss.*ce_wieght"):
        build_run_config(minimal_raw(loss={"ce_wieght": 1.0}))
    with pytest.raises(ConfigError, match=r"model.*depth"):
        build_run_config(minimal_raw(model={"depth": 3}))
    with pytest.raises(ConfigError, match=r"data.*extra"):
        build_run_config({"data": {"taxonomy": "t", "manifests":
                                   {"car": {"train": "x"}}, "extra": 1}})


def test_model_voxel_size_comes_from_top_level():
    cfg = build_run_config(minimal_raw(voxel_size=0.25))
    assert cfg.model.voxel_size == 0.25
    assert cfg.voxel_size == 0.25
    with pytest.raises(ConfigError, match="model"):
        build_run_config(minimal_raw(model={"voxel_size": 0.5}))


def test_model_errors_become_config_errors():
    with pytest.raises(ConfigError, match="model"):
        build_run_config(minimal_raw(model={"curve": "diagonal"}))
    with pytest.raises(ConfigError, match="model"):
        build_run_config(minimal_raw(model={"stage_channels": [33]}))


def test_la_requires_existing_table(tmp_path, tiny_table_path):
    with pytest.raises(ConfigError, match="embedding_table"):
        build_run_config(minimal_raw(alignment="LA"))
    with pytest.raises(ConfigError, match="does not exist"):
        build_run_config(minimal_raw(alignment="LA",
                                     embedding_table="nowhere.ppte"),
                         base_dir=tmp_path)
    cfg = build_run_config(minimal_raw(alignment="LA",
                                       embedding_table=str(tiny_table_path)))
    assert cfg.embedding_table == tiny_table_path


def test_relative_paths_resolved_against_config_dir(tmp_path):
    path = write_config(tmp_path, minimal_raw())
    cfg = load_run_config(path)
    assert cfg.taxonomy == tmp_path / "tax.txt"
    assert cfg.manifest_path("car", "train") == tmp_path / "car_train.txt"
    assert cfg.manifest_path("car", "val") is None
    assert cfg.manifest_path("spot", "train") is None
    assert cfg.output_dir == tmp_path / "runs/default"


def test_absolute_paths_kept(tmp_path):
    raw = minimal_raw()
    raw["data"]["taxonomy"] = "/abs/tax.txt"
    cfg = build_run_config(raw, base_dir=tmp_path)
    assert str(cfg.taxonomy) == "/abs/tax.txt"


def test_overrides_replace_top_level(tmp_path):
    path = write_config(tmp_path, minimal_raw(seed=1, epochs=9))
    cfg = load_run_config(path, overrides={"seed": 5, "epochs": None})
    assert cfg.seed == 5
    assert cfg.epochs == 9  # None override ignored


def test_empty_and_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        load_run_config(p)
    p.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_run_config(p)
    p.write_text("a: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_run_config(p)


def test_multi_platform_conditions_ordered(tmp_path):
    raw = minimal_raw()
    raw["data"]["manifests"] = {
        "car": {"train": "a", "val": "b"},
        "alice": {"train": "c"},
        "spot": {"train": "d", "test": "e"},
    }
    cfg = build_run_config(raw, base_dir=tmp_path)
    assert cfg.conditions == ("car", "alice", "spot")


def test_snapshot_is_json_serializable(tmp_path, tiny_table_path):
    cfg = build_run_config(minimal_raw(alignment="LA",
                                       embedding_table=str(tiny_table_path),
                                       seed=3),
                           base_dir=tmp_path)
    snap = config_snapshot(cfg)
    blob = json.dumps(snap, sort_keys=True)
    back = json.loads(blob)
    assert back["seed"] == 3
    assert back["alignment"] == "LA"
    assert back["model"]["stage_channels"] == [32, 64, 128]
    assert back["manifests"]["car"]["train"].endswith("car_train.txt")


def test_committed_example_config_parses():
    example = Path(__file__).resolve().parents[1] / "configs" / "run_example.yaml"
    with open(example, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    cfg = build_run_config(raw, base_dir=example.parent)
    assert cfg.conditions == ("car", "alice", "spot")
    assert cfg.taxonomy.is_file()
    assert cfg.model.stage_channels == (32, 64, 128)
