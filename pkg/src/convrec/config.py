"""Configuration objects for model dimensions, training, and serving.

Field defaults are the published full-scale settings; tests and the synthetic
fixture shrink the dimensions through ``ModelConfig`` overrides.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict


# Per-dataset weights for the depth-1/depth-2 walker losses.
LAMBDA_PRESETS: dict[str, tuple[float, float]] = {
    "redial": (1.0, 1.0),
    "gorecdial": (1.0, 0.1),
}

# Environment variable prefix used by the CLI for option overrides,
# e.g. CONVREC_TRAIN_LEARNING_RATE=1e-4 convrec train ...
ENV_PREFIX = "CONVREC"

# Opening system line; the synthetic corpus uses the same text so that a
# served dialog's first round matches the training distribution.
DEFAULT_GREETING = "Hello! Looking for a movie tonight?"


@dataclass
class ModelConfig:
    """Dimensions and structural knobs shared by training and serving."""

    embed_dim: int = 128          # graph embedding size d, also the LSTM hidden size
    rgcn_layers: int = 1          # graph-convolution depth
    hash_dim: int = 4096          # hashing bag-of-words buckets in the default turn encoder
    turn_dim: int = 128           # turn-encoder output size (LSTM input)
    attention_dim: int = 128      # hidden size of the portrait self-attention
    intent_hidden: int = 128      # hidden size of the intent classifier MLP
    max_depth: int = 2            # reasoning-tree depth bound
    branching_cap: int = 3        # max children kept per expanded node
    select_threshold: float = 0.5 # strict lower bound for node selection
    link_threshold: float = 0.9   # fuzzy entity-linking similarity threshold
    seed: int = 0

    def scaled(self, dim: int) -> "ModelConfig":
        """Copy with every embedding-sized dimension set to ``dim`` (test scale)."""
        return ModelConfig(
            embed_dim=dim,
            rgcn_layers=self.rgcn_layers,
            hash_dim=self.hash_dim,
            turn_dim=dim,
            attention_dim=dim,
            intent_hidden=dim,
            max_depth=self.max_depth,
            branching_cap=self.branching_cap,
            select_threshold=self.select_threshold,
            link_threshold=self.link_threshold,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class TrainConfig:
    """Optimization hyperparameters; defaults follow the published recipe."""

    learning_rate: float = 1e-3
    batch_size: int = 36
    epochs: int = 30
    weight_decay: float = 1e-2
    seed: int = 0
    negative_samples: int = 50    # negatives per recommendation turn at depth 1
    lambda1: float = 1.0          # depth-1 walker loss weight
    lambda2: float = 1.0          # depth-2 walker loss weight
    val_fraction: float = 0.1     # held-out dialog fraction (split by dialog, seeded)
    model: ModelConfig = field(default_factory=ModelConfig)

    def with_lambda_preset(self, dataset: str) -> "TrainConfig":
        lam1, lam2 = LAMBDA_PRESETS[dataset.lower()]
        out = TrainConfig(**{**asdict(self), "model": self.model})
        out.lambda1, out.lambda2 = lam1, lam2
        return out

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EngineConfig:
    """Everything the serving engine needs to come up."""

    entities_path: str = "entities.jsonl"
    edges_path: str = "edges.jsonl"
    checkpoint_path: str | None = None   # None: fresh seeded parameters (demo mode)
    templates_path: str | None = None    # None: built-in template set
    model: ModelConfig = field(default_factory=ModelConfig)
    host: str = "127.0.0.1"
    port: int = 8040
    top_k: int = 10                      # recommendations returned per turn
    session_timeout: float = 1800.0      # idle seconds before a session expires
    max_message_bytes: int = 4096
    greeting: str = DEFAULT_GREETING
    static_dir: str | None = None        # built web client, served at /
    transcript_path: str | None = None   # optional JSONL dump of finished sessions
    seed: int = 0
