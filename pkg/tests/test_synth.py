"""Synthetic world and dialog corpus used for desk-scale training."""
from __future__ import annotations

import json

import pytest

from convrec.kg import EntityKind, load_graph
from convrec.nlg import TemplateSet, realize
from convrec.policy import Intent
from convrec.synth import build_corpus, build_world, write_dataset
from convrec.training import act_from_gold, load_corpus


@pytest.fixture(scope="module")
def world():
    return build_world(0)


@pytest.fixture(scope="module")
def corpus(world):
    return build_corpus(world, num_dialogs=8, seed=0)


# ---------------------------------------------------------------------------
# world
# ---------------------------------------------------------------------------


def test_world_entity_counts(world):
    assert len(world.entities) == 178
    kinds = [e.kind for e in world.entities]
    assert kinds.count(EntityKind.CLASS) == 5
    assert kinds.count(EntityKind.ATTRIBUTE) == 53
    assert kinds.count(EntityKind.CANDIDATE) == 120
    assert len(world.movie_ids) == 120
    assert sorted(world.class_ids.values()) == [0, 1, 2, 3, 4]


def test_world_edge_counts(world):
    # one instance_of edge per attribute plus five facts per movie
    assert len(world.edges) == 53 + 120 * 5
    assert world.graph.num_edges == len(world.edges)


def test_every_attribute_links_to_its_class(world):
    for attr_ids, class_name in ((world.genre_ids, "Genre"),
                                 (world.subject_ids, "Subject"),
                                 (world.director_ids, "Director"),
                                 (world.actor_ids, "Actor"),
                                 (world.time_ids, "Time")):
        for attr in attr_ids:
            assert world.graph.neighbors(attr, "instance_of") \
                == [world.class_ids[class_name]]


def test_genre_subject_assignment_is_bijective(world):
    pairs = set()
    for i, movie in enumerate(world.movie_ids):
        attrs = world.movie_attrs[movie]
        assert attrs["has_genre"] == world.genre_ids[i // 20]
        assert attrs["has_subject"] == world.subject_ids[i % 20]
        pairs.add((attrs["has_genre"], attrs["has_subject"]))
    assert len(pairs) == 120


def test_movie_facts_match_graph(world):
    for movie, attrs in world.movie_attrs.items():
        for relation, attr in attrs.items():
            assert world.graph.neighbors(movie, relation) == [attr]


def test_movie_titles_have_bare_alias(world):
    first = world.graph.entities[world.movie_ids[0]]
    assert first.name.startswith("The ")
    assert first.aliases == (first.name.removeprefix("The "),)


def test_world_is_seeded(world):
    same = build_world(0)
    assert same.edges == world.edges
    other = build_world(1)
    # the genre/subject grid is fixed; the cast assignments are drawn
    assert other.movie_attrs != world.movie_attrs
    for movie in world.movie_ids:
        assert other.movie_attrs[movie]["has_genre"] \
            == world.movie_attrs[movie]["has_genre"]


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


def test_dialog_script_shape(world, corpus):
    assert len(corpus) == 8
    for dialog in corpus:
        assert len(dialog.turns) == 11
        for i, turn in enumerate(dialog.turns):
            assert turn.role == ("system" if i % 2 == 0 else "user")
        intents = [t.intent for t in dialog.system_turns()]
        assert intents == [Intent.CHAT, Intent.QUERY, Intent.RECOMMEND,
                           Intent.RECOMMEND, Intent.RECOMMEND, Intent.CHAT]


def test_recommendation_turns_carry_consistent_gold(world, corpus):
    for dialog in corpus:
        for turn in dialog.system_turns():
            if turn.intent is not Intent.RECOMMEND:
                continue
            assert len(turn.tree) == 1
            movie, children = turn.tree[0]
            attrs = world.movie_attrs[movie]
            assert children == [attrs["has_genre"], attrs["has_subject"]]
            assert turn.entities == [movie, *children]
            assert world.graph.entities[movie].name in turn.text


def test_recommendation_text_matches_realized_gold_act(world, corpus):
    templates = TemplateSet()
    for d, dialog in enumerate(corpus):
        rec_turns = [t for t in dialog.system_turns()
                     if t.intent is Intent.RECOMMEND]
        for r, turn in enumerate(rec_turns):
            act = act_from_gold(turn, world.graph)
            assert turn.text == realize(act, templates, seed=3 * d + r)


def test_user_asks_link_the_stated_preferences(world, corpus):
    for dialog in corpus:
        ask = dialog.turns[3]          # first preference statement
        movie = dialog.turns[4].tree[0][0]
        attrs = world.movie_attrs[movie]
        assert attrs["has_genre"] in ask.entities
        assert attrs["has_subject"] in ask.entities


def test_recommendations_concentrate_on_a_popular_subset(world):
    dialogs = build_corpus(world, num_dialogs=50, seed=0)
    recommended = [turn.tree[0][0]
                   for dialog in dialogs
                   for turn in dialog.system_turns()
                   if turn.intent is Intent.RECOMMEND]
    unique = set(recommended)
    assert len(recommended) == 150
    assert len(unique) <= 40
    # the long tail means titles recur instead of appearing once
    assert len(unique) < len(recommended) / 2


def test_corpus_is_seeded(world, corpus):
    assert build_corpus(world, num_dialogs=8, seed=0) == corpus
    assert build_corpus(world, num_dialogs=8, seed=1) != corpus


def test_dialog_ids_are_stable(corpus):
    assert [d.id for d in corpus] == [f"dlg-{i:03d}" for i in range(8)]


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


def test_write_dataset_roundtrip(tmp_path, world):
    paths = write_dataset(tmp_path / "data", seed=0, num_dialogs=4)
    assert set(paths) == {"entities", "edges", "corpus"}
    with open(paths["entities"], encoding="utf-8") as fh:
        assert sum(1 for _ in fh) == 178
    with open(paths["edges"], encoding="utf-8") as fh:
        assert sum(1 for _ in fh) == 653
    graph = load_graph(paths["entities"], paths["edges"])
    assert graph.num_entities == 178
    assert graph.num_edges == 653
    dialogs = load_corpus(paths["corpus"], graph)
    assert dialogs == build_corpus(world, num_dialogs=4, seed=0)


def test_write_dataset_is_byte_stable(tmp_path):
    first = write_dataset(tmp_path / "one", seed=0, num_dialogs=3)
    second = write_dataset(tmp_path / "two", seed=0, num_dialogs=3)
    for key in ("entities", "edges", "corpus"):
        with open(first[key], "rb") as fa, open(second[key], "rb") as fb:
            assert fa.read() == fb.read()


def test_written_entities_are_valid_records(tmp_path):
    paths = write_dataset(tmp_path / "data", seed=0, num_dialogs=2)
    with open(paths["entities"], encoding="utf-8") as fh:
        record = json.loads(fh.readline())
    assert set(record) == {"id", "name", "kind", "aliases"}
    assert record["id"] == 0
    assert record["kind"] == "class"
