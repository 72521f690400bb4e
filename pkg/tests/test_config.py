import json
from dataclasses import asdict, replace

import pytest

from config import settings
from src.core.errors import ConfigError
from src.decoders.config import variant_name
from src.pipeline.config import (
    RunConfig,
    apply_variant,
    config_hash,
    dump_default_config,
    load_run_config,
    validate_run_config,
)


def test_defaults_follow_settings():
    cfg = RunConfig()
    assert cfg.open_vocab.lambda_seen == 0.2
    assert cfg.open_vocab.lambda_novel == 0.45
    assert cfg.postprocess.score_threshold == 0.25
    assert cfg.postprocess.overlap_keep == 0.8
    assert variant_name(cfg.decoder) == "decoupled_fusion_things"
    assert cfg.train_tasks() == ["panoptic"]
    assert replace(cfg, task="hierarchical").train_tasks() == ["panoptic", "referring", "part"]


def test_settings_defaults_all_feed_a_config_field():
    cfg = RunConfig()
    assert set(settings.OPEN_VOCAB_DEFAULTS) <= set(asdict(cfg.open_vocab))
    assert all(getattr(cfg.open_vocab, k) == v for k, v in settings.OPEN_VOCAB_DEFAULTS.items())
    assert cfg.postprocess.to_dict() == settings.POSTPROCESS_DEFAULTS
    assert not hasattr(settings, "DEVICE")


def test_partial_document_fills_defaults():
    cfg = validate_run_config({"seed": 7, "training": {"iterations": 3}, "decoder": {"d": 32}})
    assert cfg.seed == 7
    assert cfg.training.iterations == 3
    assert cfg.training.batch_size == RunConfig().training.batch_size
    assert cfg.decoder.d == 32


@pytest.mark.parametrize("record, field", [
    ({"task": "captioning"}, "task"),
    ({"postprocess": {"overlap_keep": 1.5}}, "postprocess"),
    ({"training": {"thing_matcher": "greedy"}}, "training"),
    ({"decoder": {"layers": 0}}, "decoder"),
    ({"metrics": ["pq", "fid"]}, "metrics"),
    ({"unexpected": 1}, "unexpected"),
])
def test_schema_violations_raise_config_error(record, field):
    with pytest.raises(ConfigError) as info:
        validate_run_config(record)
    assert field in info.value.errors


def test_cross_field_errors_surface_as_config_error():
    with pytest.raises(ConfigError):
        validate_run_config({"decoder": {"d": 30, "heads": 4}})
    with pytest.raises(ConfigError):
        validate_run_config({"decoder": {"decoupled": False, "early_fusion_things": True,
                                         "early_fusion_stuff": False}})


def test_load_run_config_checks_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(broken)

    dangling = tmp_path / "dangling.json"
    dangling.write_text(json.dumps({"data": {"train_manifest": str(tmp_path / "nope.json")}}))
    with pytest.raises(ConfigError) as info:
        load_run_config(dangling)
    assert "data.train_manifest" in info.value.errors

    manifest = tmp_path / "train.json"
    manifest.write_text("{}")
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"data": {"train_manifest": str(manifest)}, "run_name": "tiny"}))
    assert load_run_config(good).run_name == "tiny"


def test_dump_default_config_round_trips(tmp_path):
    path = tmp_path / "default.json"
    text = dump_default_config(path)
    assert json.loads(path.read_text()) == json.loads(text)
    assert config_hash(load_run_config(path)) == config_hash(RunConfig())


def test_config_hash_is_stable_and_sensitive():
    assert config_hash(RunConfig()) == config_hash(RunConfig())
    assert len(config_hash(RunConfig())) == 64
    assert config_hash(replace(RunConfig(), seed=1)) != config_hash(RunConfig())


def test_apply_variant():
    cfg = apply_variant(RunConfig(), "unified")
    assert not cfg.decoder.decoupled and not cfg.decoder.early_fusion_things
    assert cfg.training == RunConfig().training
    with pytest.raises(ConfigError):
        apply_variant(RunConfig(), "fused_everything")
