"""Shared fixtures: a small movie knowledge graph and a tiny model."""
from __future__ import annotations

import pytest

from convrec.config import ModelConfig
from convrec.kg import Edge, Entity, EntityKind, KnowledgeGraph
from convrec.model import Model

GENRE, ACTOR_CLASS, DIRECTOR_CLASS, TIME_CLASS = 0, 1, 2, 3
ACTION, ROMANCE, HORROR = 4, 5, 6
ARNOLD, CAMERON, EIGHTIES = 7, 8, 9
TERMINATOR, TITANIC, DIE_HARD, SHINING, IT = 10, 11, 12, 13, 14
NINETIES = 15


def build_movie_graph() -> KnowledgeGraph:
    entities = [
        Entity(GENRE, "Genre", EntityKind.CLASS),
        Entity(ACTOR_CLASS, "Actor", EntityKind.CLASS),
        Entity(DIRECTOR_CLASS, "Director", EntityKind.CLASS),
        Entity(TIME_CLASS, "Time", EntityKind.CLASS),
        Entity(ACTION, "Action", EntityKind.ATTRIBUTE),
        Entity(ROMANCE, "Romance", EntityKind.ATTRIBUTE),
        Entity(HORROR, "Horror", EntityKind.ATTRIBUTE),
        Entity(ARNOLD, "Arnold Schwarzenegger", EntityKind.ATTRIBUTE),
        Entity(CAMERON, "James Cameron", EntityKind.ATTRIBUTE),
        Entity(EIGHTIES, "1980s", EntityKind.ATTRIBUTE),
        Entity(TERMINATOR, "The Terminator", EntityKind.CANDIDATE,
               aliases=("Terminator",)),
        Entity(TITANIC, "Titanic", EntityKind.CANDIDATE),
        Entity(DIE_HARD, "Die Hard", EntityKind.CANDIDATE),
        Entity(SHINING, "The Shining", EntityKind.CANDIDATE,
               aliases=("Shining",)),
        Entity(IT, "It", EntityKind.CANDIDATE),
        Entity(NINETIES, "1990s", EntityKind.ATTRIBUTE),
    ]
    edges = [
        Edge(ACTION, "instance_of", GENRE),
        Edge(ROMANCE, "instance_of", GENRE),
        Edge(HORROR, "instance_of", GENRE),
        Edge(ARNOLD, "instance_of", ACTOR_CLASS),
        Edge(CAMERON, "instance_of", DIRECTOR_CLASS),
        Edge(EIGHTIES, "instance_of", TIME_CLASS),
        Edge(NINETIES, "instance_of", TIME_CLASS),
        Edge(TERMINATOR, "has_genre", ACTION),
        Edge(TERMINATOR, "stars", ARNOLD),
        Edge(TERMINATOR, "directed_by", CAMERON),
        Edge(TERMINATOR, "released_in", EIGHTIES),
        Edge(TITANIC, "has_genre", ROMANCE),
        Edge(TITANIC, "directed_by", CAMERON),
        Edge(TITANIC, "released_in", NINETIES),
        Edge(DIE_HARD, "has_genre", ACTION),
        Edge(DIE_HARD, "released_in", EIGHTIES),
        Edge(SHINING, "has_genre", HORROR),
        Edge(SHINING, "released_in", EIGHTIES),
        Edge(IT, "has_genre", HORROR),
    ]
    return KnowledgeGraph(entities, edges)


@pytest.fixture()
def movie_graph() -> KnowledgeGraph:
    return build_movie_graph()


@pytest.fixture()
def tiny_model(movie_graph) -> Model:
    return Model.build(movie_graph, ModelConfig(seed=1).scaled(16))
