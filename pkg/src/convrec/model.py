"""The full trainable model: every parameter group plus the forward helpers
shared by training, evaluation, and serving.

Checkpoints store named parameter arrays with metadata describing the
config and graph signature so a reloaded model refuses mismatched graphs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .config import ModelConfig
from .encoders import (HashingVectorizer, LstmParams, PortraitParams,
                       RgcnParams, lstm_step, portrait, rgcn_forward,
                       zero_state)
from .kg import KnowledgeGraph, MentionSet
from .numerics import Tensor
from .policy import IntentParams, WalkerParams


def compose_round(system_text: str | None, user_text: str | None) -> str:
    """One encoder input per dialog round; partial rounds keep what exists."""
    parts = [t for t in (system_text, user_text) if t]
    return " ".join(parts)


@dataclass
class Model:
    graph: KnowledgeGraph
    config: ModelConfig
    vectorizer: HashingVectorizer
    w_proj: Tensor               # (turn_dim, hash_dim), bias-free on purpose
    rgcn: RgcnParams
    lstm: LstmParams
    portrait_params: PortraitParams
    intent: IntentParams
    walker: WalkerParams
    # optional per-candidate side features, projected additively into h_e
    feature_table: np.ndarray | None = None    # (num_entities, d_feat)
    w_feat: Tensor | None = None               # (d_feat, embed_dim)

    # -- construction -------------------------------------------------------

    @staticmethod
    def build(graph: KnowledgeGraph, config: ModelConfig,
              feature_table: np.ndarray | None = None) -> "Model":
        rng = np.random.default_rng(config.seed)
        vectorizer = HashingVectorizer(config.hash_dim)
        w_proj = Tensor(nm.fan_in_uniform(rng, (config.turn_dim, config.hash_dim)),
                        requires_grad=True, name="proj.w")
        rgcn = RgcnParams.init(rng, graph, config.embed_dim, config.rgcn_layers)
        lstm = LstmParams.init(rng, config.turn_dim, config.embed_dim)
        portrait_params = PortraitParams.init(rng, config.embed_dim,
                                              config.attention_dim)
        intent = IntentParams.init(rng, config.embed_dim, config.intent_hidden)
        walker = WalkerParams.init(rng, config.embed_dim)
        w_feat = None
        if feature_table is not None:
            if feature_table.shape[0] != graph.num_entities:
                raise nm.ShapeError("feature table must cover every entity row")
            w_feat = Tensor(nm.fan_in_uniform(rng, (feature_table.shape[1],
                                                    config.embed_dim)),
                            requires_grad=True, name="feat.w")
        return Model(graph=graph, config=config, vectorizer=vectorizer,
                     w_proj=w_proj, rgcn=rgcn, lstm=lstm,
                     portrait_params=portrait_params, intent=intent,
                     walker=walker, feature_table=feature_table, w_feat=w_feat)

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {self.w_proj.name: self.w_proj}
        out.update(self.rgcn.tensors())
        out.update(self.lstm.tensors())
        out.update(self.portrait_params.tensors())
        out.update(self.intent.tensors())
        out.update(self.walker.tensors())
        if self.w_feat is not None:
            out[self.w_feat.name] = self.w_feat
        return out

    # -- forward helpers -----------------------------------------------------

    def embeddings(self) -> Tensor:
        """Entity embedding table h, side features folded in when present."""
        h = rgcn_forward(self.graph, self.rgcn)
        if self.feature_table is not None and self.w_feat is not None:
            h = nm.add(h, nm.matmul(nm.as_tensor(self.feature_table),
                                    self.w_feat))
        return h

    def encode_turn(self, text: str) -> Tensor:
        vec = nm.as_tensor(self.vectorizer(text))
        return nm.matmul(self.w_proj, vec)

    def new_state(self) -> tuple[Tensor, Tensor]:
        return zero_state(self.config.embed_dim)

    def step_state(self, state: tuple[Tensor, Tensor],
                   round_text: str) -> tuple[Tensor, Tensor]:
        """Advance the dialog state by one round; the new h is u_t."""
        return lstm_step(self.lstm, self.encode_turn(round_text), state)

    def portrait_of(self, mentions: MentionSet,
                    h_all: Tensor) -> Tensor:
        ids = mentions.ids_sorted()
        if not ids:
            return portrait(None, self.portrait_params)[0]
        rows = np.array([self.graph.index_of[e] for e in ids], dtype=np.int64)
        return portrait(nm.gather_rows(h_all, rows), self.portrait_params)[0]

    # -- persistence ---------------------------------------------------------

    def graph_signature(self) -> dict:
        return {
            "num_entities": self.graph.num_entities,
            "num_edges": self.graph.num_edges,
            "relations": sorted(self.graph.relations),
        }

    def save(self, path) -> None:
        meta = {
            "config": self.config.to_dict(),
            "graph": self.graph_signature(),
        }
        nm.save_params(path, self.params(), meta)

    @staticmethod
    def load(path, graph: KnowledgeGraph,
             feature_table: np.ndarray | None = None) -> "Model":
        arrays, meta = nm.load_params(path)
        config = ModelConfig.from_dict(meta["config"])
        model = Model.build(graph, config, feature_table=feature_table)
        if meta.get("graph") != model.graph_signature():
            raise nm.ValidationError(
                "checkpoint was trained against a different graph")
        params = model.params()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise nm.ValidationError(
                f"checkpoint parameter mismatch: missing={missing} extra={extra}")
        for name, tensor in params.items():
            if arrays[name].shape != tensor.data.shape:
                raise nm.ShapeError(
                    f"checkpoint shape mismatch for {name}: "
                    f"{arrays[name].shape} vs {tensor.data.shape}")
            tensor.data = arrays[name]
        return model
