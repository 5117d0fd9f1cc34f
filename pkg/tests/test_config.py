"""Configuration defaults, scaling helper, and per-dataset presets."""
from __future__ import annotations

import pytest

from convrec.config import (
    DEFAULT_GREETING,
    ENV_PREFIX,
    LAMBDA_PRESETS,
    EngineConfig,
    ModelConfig,
    TrainConfig,
)


def test_model_defaults_follow_published_settings():
    config = ModelConfig()
    assert config.embed_dim == 128
    assert config.rgcn_layers == 1
    assert config.turn_dim == 128
    assert config.attention_dim == 128
    assert config.intent_hidden == 128
    assert config.max_depth == 2
    assert config.branching_cap == 3
    assert config.select_threshold == 0.5
    assert config.link_threshold == 0.9


def test_train_defaults_follow_published_settings():
    config = TrainConfig()
    assert config.learning_rate == 1e-3
    assert config.batch_size == 36
    assert config.epochs == 30
    assert config.weight_decay == 1e-2
    assert config.negative_samples == 50
    assert (config.lambda1, config.lambda2) == (1.0, 1.0)
    assert config.val_fraction == 0.1


def test_scaled_shrinks_every_embedding_dimension():
    config = ModelConfig(seed=3).scaled(32)
    assert config.embed_dim == 32
    assert config.turn_dim == 32
    assert config.attention_dim == 32
    assert config.intent_hidden == 32
    assert config.seed == 3
    # structural knobs are not dimensions and stay put
    assert config.hash_dim == 4096
    assert config.max_depth == 2
    assert config.branching_cap == 3


def test_lambda_presets():
    assert LAMBDA_PRESETS == {"redial": (1.0, 1.0), "gorecdial": (1.0, 0.1)}
    tuned = TrainConfig().with_lambda_preset("GoRecDial")
    assert (tuned.lambda1, tuned.lambda2) == (1.0, 0.1)
    assert tuned.batch_size == TrainConfig().batch_size
    with pytest.raises(KeyError):
        TrainConfig().with_lambda_preset("unknown-dataset")


def test_with_lambda_preset_returns_a_copy():
    base = TrainConfig()
    tuned = base.with_lambda_preset("gorecdial")
    assert (base.lambda1, base.lambda2) == (1.0, 1.0)
    assert tuned is not base
    assert tuned.model == base.model


def test_model_config_dict_roundtrip():
    config = ModelConfig(seed=7).scaled(24)
    assert ModelConfig.from_dict(config.to_dict()) == config


def test_train_config_to_dict_nests_model():
    d = TrainConfig(model=ModelConfig(seed=2)).to_dict()
    assert d["model"]["seed"] == 2
    assert d["batch_size"] == 36


def test_engine_defaults():
    config = EngineConfig()
    assert config.port == 8040
    assert config.top_k == 10
    assert config.session_timeout == 1800.0
    assert config.max_message_bytes == 4096
    assert config.greeting == DEFAULT_GREETING
    assert config.checkpoint_path is None
    assert config.static_dir is None


def test_env_prefix():
    assert ENV_PREFIX == "CONVREC"
