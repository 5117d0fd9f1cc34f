"""Intent classification and the reasoning walk over the graph.

A turn's context (u_t, p_t) drives a 3-way intent decision, then walker
cells grow a tree: depth-1 candidates come from the intent (all candidates,
all classes, or the mention set) and deeper candidates from 1-hop
neighborhoods. Selection keeps scores strictly above the threshold, capped
per node, descending score with ascending-id tie-break.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import numerics as nm
from .config import ModelConfig
from .kg import EntityKind, KnowledgeGraph, MentionSet
from .numerics import Tensor


class Intent(IntEnum):
    RECOMMEND = 0
    QUERY = 1
    CHAT = 2

    @property
    def label(self) -> str:
        return _INTENT_LABELS[self]


_INTENT_LABELS = {Intent.RECOMMEND: "Recommend",
                  Intent.QUERY: "Query",
                  Intent.CHAT: "Chat"}
_BY_LABEL = {label: intent for intent, label in _INTENT_LABELS.items()}


def intent_from_label(label: str) -> Intent:
    try:
        return _BY_LABEL[label]
    except KeyError:
        raise ValueError(f"unknown intent label {label!r}")


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class IntentParams:
    w1: Tensor   # (hidden, d_u)
    b1: Tensor   # (hidden,)
    w2: Tensor   # (3, hidden)
    b2: Tensor   # (3,)

    @staticmethod
    def init(rng: np.random.Generator, d_u: int, hidden: int) -> "IntentParams":
        return IntentParams(
            w1=Tensor(nm.fan_in_uniform(rng, (hidden, d_u)),
                      requires_grad=True, name="intent.w1"),
            b1=Tensor(np.zeros(hidden), requires_grad=True, name="intent.b1"),
            w2=Tensor(nm.fan_in_uniform(rng, (3, hidden)),
                      requires_grad=True, name="intent.w2"),
            b2=Tensor(np.zeros(3), requires_grad=True, name="intent.b2"),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.w1, self.b1, self.w2, self.b2)}


@dataclass
class WalkerParams:
    """Per-intent gate vectors over [h_e; u_t; p_t] and root embeddings."""

    gates: dict[Intent, Tensor]   # each (3 * d,)
    roots: dict[Intent, Tensor]   # each (d,)

    @staticmethod
    def init(rng: np.random.Generator, d: int) -> "WalkerParams":
        gates = {}
        roots = {}
        for intent in Intent:
            tag = intent.label.lower()
            gates[intent] = Tensor(nm.fan_in_uniform(rng, (3 * d,)),
                                   requires_grad=True, name=f"walker.gate.{tag}")
            roots[intent] = Tensor(nm.fan_in_uniform(rng, (d,), fan_in=d),
                                   requires_grad=True, name=f"walker.root.{tag}")
        return WalkerParams(gates=gates, roots=roots)

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for intent in Intent:
            out[self.gates[intent].name] = self.gates[intent]
            out[self.roots[intent].name] = self.roots[intent]
        return out


# ---------------------------------------------------------------------------
# intent classification
# ---------------------------------------------------------------------------

def intent_logits(u: Tensor, params: IntentParams) -> Tensor:
    hidden = nm.relu(nm.add(nm.matmul(params.w1, u), params.b1))
    return nm.add(nm.matmul(params.w2, hidden), params.b2)


def classify_intent(u: Tensor, params: IntentParams) -> tuple[Intent, Tensor]:
    """(selected intent, probability triple); lowest index wins ties."""
    probs = nm.softmax(intent_logits(u, params), axis=-1)
    return Intent(int(np.argmax(probs.data))), probs


# ---------------------------------------------------------------------------
# walker cell
# ---------------------------------------------------------------------------

def walker_cell(h_node: Tensor, u: Tensor, p: Tensor,
                cand_matrix: Tensor, gate: Tensor) -> tuple[Tensor, Tensor]:
    """Scores for each candidate row given the node and dialog context.

    gamma = sigmoid(gate . [h_node; u; p]); c = gamma*u + (1-gamma)*p;
    score_j = sigmoid(cand_matrix[j] . c). Returns (scores, gamma).
    """
    gamma = nm.sigmoid(nm.dot(gate, nm.concat([h_node, u, p])))
    blend = nm.add(nm.mul(gamma, u),
                   nm.mul(nm.sub(nm.as_tensor(1.0), gamma), p))
    scores = nm.sigmoid(nm.matmul(cand_matrix, blend))
    return scores, gamma


def context_blend(h_node: Tensor, u: Tensor, p: Tensor, gate: Tensor) -> Tensor:
    """The gated context vector c_t alone (used for full-set ranking)."""
    gamma = nm.sigmoid(nm.dot(gate, nm.concat([h_node, u, p])))
    return nm.add(nm.mul(gamma, u),
                  nm.mul(nm.sub(nm.as_tensor(1.0), gamma), p))


def select(candidate_ids: list[int], scores: np.ndarray,
           threshold: float, cap: int) -> list[tuple[int, float]]:
    """Entities scoring strictly above threshold, best first, capped.

    Order: descending score, ascending id on ties.
    """
    picked = [(float(s), eid) for eid, s in zip(candidate_ids, scores)
              if float(s) > threshold]
    picked.sort(key=lambda pair: (-pair[0], pair[1]))
    return [(eid, score) for score, eid in picked[:cap]]


# ---------------------------------------------------------------------------
# candidate sets
# ---------------------------------------------------------------------------

def candidate_set(intent: Intent, node_entity: int | None,
                  graph: KnowledgeGraph, mentions: MentionSet,
                  ancestors: frozenset[int] = frozenset()) -> list[int]:
    """Depth-0 candidates come from the intent; deeper ones from the graph.

    Ancestor entities (the node itself included) are excluded at depth >= 1
    so the walk never doubles back; mentioned entities stay eligible.
    """
    if node_entity is None:
        if intent is Intent.RECOMMEND:
            return graph.by_kind(EntityKind.CANDIDATE)
        if intent is Intent.QUERY:
            return graph.by_kind(EntityKind.CLASS)
        return mentions.ids_sorted()
    return [e for e in graph.neighbors_all(node_entity) if e not in ancestors]


# ---------------------------------------------------------------------------
# tree expansion
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    entity_id: int
    depth: int
    score: float
    children: list["TreeNode"] = field(default_factory=list)
    parent: "TreeNode | None" = None

    def ancestors(self) -> frozenset[int]:
        ids = {self.entity_id}
        node = self.parent
        while node is not None:
            ids.add(node.entity_id)
            node = node.parent
        return frozenset(ids)


@dataclass
class ReasoningTree:
    intent: Intent
    roots: list[TreeNode] = field(default_factory=list)

    @property
    def intent_name(self) -> str:
        return self.intent.label

    def nodes(self) -> list[TreeNode]:
        out: list[TreeNode] = []

        def visit(node: TreeNode) -> None:
            out.append(node)
            for child in node.children:
                visit(child)

        for root in self.roots:
            visit(root)
        return out

    def depth(self) -> int:
        return max((n.depth for n in self.nodes()), default=0)

    def entity_ids(self) -> list[int]:
        return [n.entity_id for n in self.nodes()]

    def level(self, depth: int) -> list[TreeNode]:
        return [n for n in self.nodes() if n.depth == depth]

    def trace(self) -> dict:
        """JSON-ready structural trace: nodes in pre-order with parent index."""
        ordered = self.nodes()
        position = {id(node): idx for idx, node in enumerate(ordered)}
        return {
            "intent": self.intent_name,
            "nodes": [
                {
                    "entity": node.entity_id,
                    "parent": None if node.parent is None
                    else position[id(node.parent)],
                    "depth": node.depth,
                    "score": node.score,
                }
                for node in ordered
            ],
        }


def expand_tree(graph: KnowledgeGraph, h_all: Tensor, intent: Intent,
                u: Tensor, p: Tensor, mentions: MentionSet,
                walker: WalkerParams, config: ModelConfig) -> ReasoningTree:
    """Grow the reasoning tree breadth-first from the intent root.

    Each level's selections come from one walker-cell application per
    frontier node with intent-specific shared parameters; expansion stops
    when a level selects nothing or max depth is reached. An entity picked
    by two frontier nodes at the same level keeps its first (highest-scored)
    parent. Pure with respect to ``mentions``: marking surfaced entities is
    the caller's job.
    """
    gate = walker.gates[intent]
    tree = ReasoningTree(intent=intent)
    frontier: list[TreeNode] = []

    root_candidates = candidate_set(intent, None, graph, mentions)
    for eid, score in _walk_one(graph, h_all, walker.roots[intent], u, p,
                                root_candidates, gate, config):
        node = TreeNode(entity_id=eid, depth=1, score=score)
        tree.roots.append(node)
        frontier.append(node)

    depth = 1
    while frontier and depth < config.max_depth:
        next_frontier: list[TreeNode] = []
        level_taken: set[int] = set()
        for parent in frontier:
            h_parent = nm.gather_rows(
                h_all, np.array([graph.index_of[parent.entity_id]]))
            h_parent = nm.tsum(h_parent, axis=0)
            cands = candidate_set(intent, parent.entity_id, graph, mentions,
                                  parent.ancestors())
            for eid, score in _walk_one(graph, h_all, h_parent, u, p,
                                        cands, gate, config):
                if eid in level_taken:
                    continue
                child = TreeNode(entity_id=eid, depth=depth + 1,
                                 score=score, parent=parent)
                parent.children.append(child)
                next_frontier.append(child)
                level_taken.add(eid)
        frontier = next_frontier
        depth += 1
    return tree


def _walk_one(graph: KnowledgeGraph, h_all: Tensor, h_node: Tensor,
              u: Tensor, p: Tensor, candidate_ids: list[int],
              gate: Tensor, config: ModelConfig) -> list[tuple[int, float]]:
    if not candidate_ids:
        return []
    rows = np.array([graph.index_of[e] for e in candidate_ids], dtype=np.int64)
    scores, _ = walker_cell(h_node, u, p, nm.gather_rows(h_all, rows), gate)
    return select(candidate_ids, scores.data,
                  config.select_threshold, config.branching_cap)


def rank_recommendations(graph: KnowledgeGraph, h_all: Tensor, u: Tensor,
                         p: Tensor, walker: WalkerParams) -> list[tuple[int, float]]:
    """Every candidate entity ordered by score desc, ascending-id ties.

    One matrix-vector product over the stacked candidate embeddings.
    """
    candidate_ids = graph.by_kind(EntityKind.CANDIDATE)
    if not candidate_ids:
        return []
    blend = context_blend(walker.roots[Intent.RECOMMEND], u, p,
                          walker.gates[Intent.RECOMMEND])
    rows = np.array([graph.index_of[e] for e in candidate_ids], dtype=np.int64)
    scores = nm.sigmoid(nm.matmul(nm.gather_rows(h_all, rows), blend)).data
    ids = np.array(candidate_ids, dtype=np.int64)
    order = np.lexsort((ids, -scores))
    return [(int(ids[i]), float(scores[i])) for i in order]
