"""Conversational recommendation over a typed knowledge graph.

Per dialog turn the engine classifies an intent, expands a scored
reasoning tree over the graph, serializes it as a bracketed dialog act,
and realizes a response; training optimizes all of it jointly on
annotated dialogs.
"""
from .acts import ActNode, DialogAct, parse, serialize, tree_to_act
from .config import EngineConfig, ModelConfig, TrainConfig
from .engine import Engine
from .kg import (Edge, Entity, EntityKind, KnowledgeGraph, MentionSet,
                 Provenance, load_graph)
from .model import Model
from .policy import Intent, ReasoningTree, expand_tree, rank_recommendations
from .training import Dialog, Turn, evaluate, load_corpus, train

__all__ = [
    "ActNode", "DialogAct", "parse", "serialize", "tree_to_act",
    "EngineConfig", "ModelConfig", "TrainConfig", "Engine",
    "Edge", "Entity", "EntityKind", "KnowledgeGraph", "MentionSet",
    "Provenance", "load_graph", "Model", "Intent", "ReasoningTree",
    "expand_tree", "rank_recommendations", "Dialog", "Turn", "evaluate",
    "load_corpus", "train",
]

__version__ = "0.1.0"
