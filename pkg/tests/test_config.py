import json

import pytest

from vapformer.config import from_dict, load_config, reference_config, to_dict
from vapformer.errors import ConfigError


def test_reference_roundtrip():
    cfg = reference_config()
    assert from_dict(to_dict(cfg)) == cfg


def test_empty_document_yields_reference():
    assert from_dict({}) == reference_config()


def test_unknown_top_level_key_named():
    with pytest.raises(ConfigError, match="optimiser"):
        from_dict({"optimiser": {}})


def test_unknown_nested_key_named_with_path():
    with pytest.raises(ConfigError, match=r"model\.visual\.patchsize"):
        from_dict({"model": {"visual": {"patchsize": 4}}})


def test_type_errors_are_specific():
    with pytest.raises(ConfigError, match=r"train\.lr"):
        from_dict({"train": {"lr": "fast"}})
    with pytest.raises(ConfigError, match=r"data\.train"):
        from_dict({"data": {"train": 1.5}})


def test_visual_geometry_validated():
    with pytest.raises(ConfigError):
        from_dict({"model": {"visual": {"patch_size": 5}}})  # 5 does not divide 32


def test_odd_visual_prompt_count_rejected():
    with pytest.raises(ConfigError, match=r"prompts\.visual"):
        from_dict({"model": {"prompts": {"visual": 3}}})


def test_malformed_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed JSON"):
        load_config(path)


def test_partial_override_keeps_other_defaults(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"train": {"epochs_pretrain": 2}}))
    cfg = load_config(path)
    ref = reference_config()
    assert cfg.train.epochs_pretrain == 2
    assert cfg.train.lr == ref.train.lr
    assert cfg.model == ref.model


def test_volume_shape_flows_into_visual_config():
    cfg = from_dict({"data": {"volume_shape": [16, 16, 16]}, "model": {"visual": {"patch_size": 4}}})
    assert cfg.model.visual.volume_shape == (16, 16, 16)
    assert cfg.model.visual.stage_grids()[0] == (4, 4, 4)
