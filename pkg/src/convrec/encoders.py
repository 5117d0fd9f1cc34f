"""Dialog-side representations: graph embeddings, turn encoding, dialog
state, and the user portrait.

All forward functions operate on :class:`~convrec.numerics.Tensor` so
gradients flow end to end; parameter containers are plain dataclasses of
tensors with seeded init helpers.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .kg import KnowledgeGraph, tokenize
from .numerics import Tensor


# ---------------------------------------------------------------------------
# turn encoding
# ---------------------------------------------------------------------------

def stable_token_bucket(token: str, dim: int) -> int:
    """Process-independent hash bucket for a token (md5, not PYTHONHASHSEED)."""
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % dim


class HashingVectorizer:
    """Default turn-encoder seam: bag of hashed word counts, l2-normalized.

    Pure and deterministic; any callable mapping text to a fixed-length
    float vector with a ``dim`` attribute can replace it.
    """

    def __init__(self, dim: int = 4096):
        self.dim = dim

    def __call__(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            vec[stable_token_bucket(token, self.dim)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


# ---------------------------------------------------------------------------
# graph embeddings
# ---------------------------------------------------------------------------

@dataclass
class RgcnLayer:
    w_rel: dict[str, Tensor]   # relation -> (d_in, d_out)
    w_self: Tensor             # (d_in, d_out)


@dataclass
class RgcnParams:
    h0: Tensor                 # (num_entities, d_in) trainable features
    layers: list[RgcnLayer]

    @staticmethod
    def init(rng: np.random.Generator, graph: KnowledgeGraph,
             dim: int, num_layers: int = 1) -> "RgcnParams":
        h0 = Tensor(nm.fan_in_uniform(rng, (graph.num_entities, dim), fan_in=dim),
                    requires_grad=True, name="rgcn.h0")
        layers = []
        for layer_idx in range(num_layers):
            w_rel = {
                rel: Tensor(nm.fan_in_uniform(rng, (dim, dim)),
                            requires_grad=True,
                            name=f"rgcn.l{layer_idx}.rel.{rel}")
                for rel in sorted(graph.relations)
            }
            w_self = Tensor(nm.fan_in_uniform(rng, (dim, dim)),
                            requires_grad=True, name=f"rgcn.l{layer_idx}.self")
            layers.append(RgcnLayer(w_rel=w_rel, w_self=w_self))
        return RgcnParams(h0=h0, layers=layers)

    def tensors(self) -> dict[str, Tensor]:
        out = {self.h0.name: self.h0}
        for layer in self.layers:
            for w in layer.w_rel.values():
                out[w.name] = w
            out[layer.w_self.name] = layer.w_self
        return out


def rgcn_forward(graph: KnowledgeGraph, params: RgcnParams) -> Tensor:
    """Relational message passing over the loaded graph.

    Row ``graph.index_of[e]`` of the result is the embedding of entity ``e``
    after every layer: relu(sum_r sum_{e' in N_e^r} W_r h_{e'} / |N_e^r|
    + W_0 h_e), where N_e^r are the forward neighbors of e under r. Each
    edge is touched exactly once per relation term.
    """
    h = params.h0
    index_of = graph.index_of
    for layer in params.layers:
        total = nm.matmul(h, layer.w_self)
        for rel in sorted(layer.w_rel):
            heads, tails = graph.relation_edges(rel)
            if not heads:
                continue
            head_rows = np.array([index_of[e] for e in heads], dtype=np.int64)
            tail_rows = np.array([index_of[e] for e in tails], dtype=np.int64)
            counts = np.bincount(head_rows, minlength=graph.num_entities)
            coef = (1.0 / counts[head_rows]).reshape(-1, 1)
            msg = nm.matmul(nm.gather_rows(h, tail_rows), layer.w_rel[rel])
            msg = nm.mul(msg, nm.as_tensor(coef))
            total = nm.add(total, nm.segment_sum(msg, head_rows,
                                                 graph.num_entities))
        h = nm.relu(total)
    return h


# ---------------------------------------------------------------------------
# dialog state
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """One matrix and bias per gate: input, forget, output, cell proposal."""

    w_xi: Tensor
    w_hi: Tensor
    b_i: Tensor
    w_xf: Tensor
    w_hf: Tensor
    b_f: Tensor
    w_xo: Tensor
    w_ho: Tensor
    b_o: Tensor
    w_xc: Tensor
    w_hc: Tensor
    b_c: Tensor

    @staticmethod
    def init(rng: np.random.Generator, d_in: int, d_hidden: int) -> "LstmParams":
        def weight(name: str, rows: int, cols: int) -> Tensor:
            return Tensor(nm.fan_in_uniform(rng, (rows, cols)),
                          requires_grad=True, name=f"lstm.{name}")

        def bias(name: str) -> Tensor:
            return Tensor(np.zeros(d_hidden), requires_grad=True,
                          name=f"lstm.{name}")

        return LstmParams(
            w_xi=weight("w_xi", d_hidden, d_in), w_hi=weight("w_hi", d_hidden, d_hidden),
            b_i=bias("b_i"),
            w_xf=weight("w_xf", d_hidden, d_in), w_hf=weight("w_hf", d_hidden, d_hidden),
            b_f=bias("b_f"),
            w_xo=weight("w_xo", d_hidden, d_in), w_ho=weight("w_ho", d_hidden, d_hidden),
            b_o=bias("b_o"),
            w_xc=weight("w_xc", d_hidden, d_in), w_hc=weight("w_hc", d_hidden, d_hidden),
            b_c=bias("b_c"),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {t.name: t for t in (
            self.w_xi, self.w_hi, self.b_i, self.w_xf, self.w_hf, self.b_f,
            self.w_xo, self.w_ho, self.b_o, self.w_xc, self.w_hc, self.b_c)}

    @property
    def hidden_size(self) -> int:
        return self.b_i.shape[0]


def zero_state(d_hidden: int) -> tuple[Tensor, Tensor]:
    """(h, c) at dialog start."""
    return nm.as_tensor(np.zeros(d_hidden)), nm.as_tensor(np.zeros(d_hidden))


def lstm_step(params: LstmParams, x: Tensor,
              state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
    """Standard LSTM recurrence; returns the next (h, c)."""
    h_prev, c_prev = state
    gate_i = nm.sigmoid(nm.add(nm.add(nm.matmul(params.w_xi, x),
                                      nm.matmul(params.w_hi, h_prev)), params.b_i))
    gate_f = nm.sigmoid(nm.add(nm.add(nm.matmul(params.w_xf, x),
                                      nm.matmul(params.w_hf, h_prev)), params.b_f))
    gate_o = nm.sigmoid(nm.add(nm.add(nm.matmul(params.w_xo, x),
                                      nm.matmul(params.w_ho, h_prev)), params.b_o))
    proposal = nm.tanh(nm.add(nm.add(nm.matmul(params.w_xc, x),
                                     nm.matmul(params.w_hc, h_prev)), params.b_c))
    c_next = nm.add(nm.mul(gate_f, c_prev), nm.mul(gate_i, proposal))
    h_next = nm.mul(gate_o, nm.tanh(c_next))
    return h_next, c_next


# ---------------------------------------------------------------------------
# user portrait
# ---------------------------------------------------------------------------

@dataclass
class PortraitParams:
    w_a1: Tensor   # (d_embed, d_attn), applied as rows @ w_a1
    w_a2: Tensor   # (d_attn,)

    @staticmethod
    def init(rng: np.random.Generator, d_embed: int, d_attn: int) -> "PortraitParams":
        return PortraitParams(
            w_a1=Tensor(nm.fan_in_uniform(rng, (d_embed, d_attn), fan_in=d_embed),
                        requires_grad=True, name="portrait.w_a1"),
            w_a2=Tensor(nm.fan_in_uniform(rng, (d_attn,), fan_in=d_attn),
                        requires_grad=True, name="portrait.w_a2"),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {self.w_a1.name: self.w_a1, self.w_a2.name: self.w_a2}

    @property
    def embed_size(self) -> int:
        return self.w_a1.shape[0]


def portrait(mentioned: Tensor | None,
             params: PortraitParams) -> tuple[Tensor, np.ndarray]:
    """Self-attention pool over mentioned-entity embeddings.

    ``mentioned`` holds one embedding per row; returns (p_t, attention
    weights). An empty mention set yields the zero vector and no weights,
    the minimal-information state before anything has surfaced.
    """
    if mentioned is None or mentioned.shape[0] == 0:
        return nm.as_tensor(np.zeros(params.embed_size)), np.zeros(0)
    beta = nm.matmul(nm.tanh(nm.matmul(mentioned, params.w_a1)), params.w_a2)
    alpha = nm.softmax(beta, axis=-1)
    pooled = nm.matmul(alpha, mentioned)
    return pooled, alpha.data.copy()
