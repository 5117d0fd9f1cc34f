"""Typed knowledge graph: construction rules, adjacency, fuzzy linking."""
from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from convrec.kg import (
    DuplicateKeyError,
    Edge,
    Entity,
    EntityKind,
    IntegrityError,
    KnowledgeGraph,
    LoadError,
    LookupError_,
    MentionSet,
    Provenance,
    edit_distance,
    edit_similarity,
    load_graph,
    normalize_text,
)
from conftest import (
    ACTION,
    ARNOLD,
    CAMERON,
    DIE_HARD,
    EIGHTIES,
    GENRE,
    HORROR,
    NINETIES,
    ROMANCE,
    SHINING,
    TERMINATOR,
    TITANIC,
)
from oracles import edit_distance_reference


def minimal_entities():
    return [
        Entity(0, "Titanic", EntityKind.CANDIDATE),
        Entity(1, "Romance", EntityKind.ATTRIBUTE),
        Entity(2, "Genre", EntityKind.CLASS),
    ]


def minimal_edges():
    return [Edge(0, "has_genre", 1), Edge(1, "instance_of", 2)]


# ---------------------------------------------------------------------------
# construction


def test_minimal_graph_counts():
    g = KnowledgeGraph(minimal_entities(), minimal_edges())
    assert g.num_entities == 3
    assert g.num_edges == 2


def test_duplicate_entity_id_rejected():
    ents = minimal_entities() + [Entity(0, "Copy", EntityKind.CANDIDATE)]
    with pytest.raises(DuplicateKeyError):
        KnowledgeGraph(ents, [])


def test_dangling_edge_rejected():
    with pytest.raises(IntegrityError):
        KnowledgeGraph(minimal_entities(),
                       minimal_edges() + [Edge(0, "stars", 99)])


def test_self_loop_rejected():
    with pytest.raises(IntegrityError):
        KnowledgeGraph(minimal_entities(), [Edge(0, "has_genre", 0)])


def test_attribute_without_class_edge_rejected():
    ents = [Entity(0, "Romance", EntityKind.ATTRIBUTE),
            Entity(1, "Genre", EntityKind.CLASS)]
    with pytest.raises(IntegrityError):
        KnowledgeGraph(ents, [])


def test_duplicate_edges_collapse():
    g = KnowledgeGraph(minimal_entities(),
                       minimal_edges() + [Edge(0, "has_genre", 1)])
    assert g.num_edges == 2


def test_kind_partition_sums(movie_graph):
    total = (len(movie_graph.by_kind(EntityKind.CANDIDATE))
             + len(movie_graph.by_kind(EntityKind.ATTRIBUTE))
             + len(movie_graph.by_kind(EntityKind.CLASS)))
    assert total == movie_graph.num_entities


def test_by_kind_sorted(movie_graph):
    for kind in EntityKind:
        ids = movie_graph.by_kind(kind)
        assert ids == sorted(ids)


# ---------------------------------------------------------------------------
# adjacency


def test_neighbors_sorted_and_exact(movie_graph):
    assert movie_graph.neighbors(TITANIC, "has_genre") == [ROMANCE]
    assert movie_graph.neighbors_all(TITANIC) == sorted(
        [ROMANCE, CAMERON, NINETIES])


def test_isolated_entity_has_no_neighbors():
    ents = minimal_entities() + [Entity(3, "Loner", EntityKind.CANDIDATE)]
    g = KnowledgeGraph(ents, minimal_edges())
    assert g.neighbors_all(3) == []


def test_reverse_neighbors_collects_all_instances(movie_graph):
    assert movie_graph.reverse_neighbors(GENRE, "instance_of") == sorted(
        [ACTION, ROMANCE, HORROR])


def test_neighbors_unknown_entity_raises(movie_graph):
    with pytest.raises(LookupError_):
        movie_graph.neighbors(999, "has_genre")


def test_relation_edges_parallel_lists(movie_graph):
    heads, tails = movie_graph.relation_edges("released_in")
    assert len(heads) == len(tails)
    assert set(zip(heads, tails)) == {
        (TERMINATOR, EIGHTIES), (TITANIC, NINETIES),
        (DIE_HARD, EIGHTIES), (SHINING, EIGHTIES)}
    assert heads == sorted(heads)


def test_index_of_is_dense_over_sorted_ids(movie_graph):
    ids = movie_graph.ids_in_order
    assert ids == sorted(ids)
    for row, entity_id in enumerate(ids):
        assert movie_graph.index_of[entity_id] == row


# ---------------------------------------------------------------------------
# string distance and linking


def test_edit_distance_hand_cases():
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance("", "abc") == 3
    assert edit_distance("same", "same") == 0


@settings(max_examples=80, deadline=None)
@given(st.text(alphabet="abcdef", max_size=8),
       st.text(alphabet="abcdef", max_size=8))
def test_edit_distance_matches_dense_oracle(a, b):
    assert edit_distance(a, b) == edit_distance_reference(a, b)


def test_edit_similarity_definition():
    # one substitution over strings of length 5 and 5: 1 - 1/10
    assert edit_similarity("abcde", "abcdx") == pytest.approx(0.9)


def test_normalize_strips_punctuation_and_case():
    assert normalize_text("Terminator's great!") == "terminator s great"


def test_link_title_and_actor(movie_graph):
    text = "Terminator's great! Arnold Schwarzenegger is a beast"
    assert movie_graph.link_mentions(text) == [TERMINATOR, ARNOLD]


def test_link_empty_string(movie_graph):
    assert movie_graph.link_mentions("") == []


def test_link_longest_span_wins(movie_graph):
    # "The Terminator" fully covers "Terminator"; only one mention results.
    spans = movie_graph.link_mention_spans("I loved The Terminator a lot")
    assert [m.entity_id for m in spans] == [TERMINATOR]
    assert spans[0].end - spans[0].start == 2


def test_link_near_miss_spelling(movie_graph):
    # one transposition in a long name still clears the 0.9 bar
    assert movie_graph.link_mentions("arnold schwarzeneggre rules") == [ARNOLD]


def test_link_below_threshold_is_dropped(movie_graph):
    assert movie_graph.link_mentions("totally unrelated words") == []


def test_link_tie_breaks_to_lowest_id():
    ents = [Entity(7, "Twin", EntityKind.CANDIDATE),
            Entity(3, "Twin", EntityKind.CANDIDATE)]
    g = KnowledgeGraph(ents, [])
    assert g.link_mentions("twin") == [3]


def test_link_is_deterministic(movie_graph):
    text = "Maybe The Shining or Die Hard tonight"
    first = movie_graph.link_mentions(text)
    assert first == movie_graph.link_mentions(text)
    assert set(first) == {SHINING, DIE_HARD}


# ---------------------------------------------------------------------------
# mention tracking


def test_mention_set_orders_and_dedupes(movie_graph):
    ms = MentionSet(movie_graph)
    ms.mark([5, 3], Provenance.USER)
    ms.mark([3, 9], Provenance.SYSTEM)
    assert ms.order == [5, 3, 9]
    assert ms.ids_sorted() == [3, 5, 9]
    assert len(ms) == 3
    assert 3 in ms and 4 not in ms


def test_mention_set_first_provenance_sticks(movie_graph):
    ms = MentionSet(movie_graph)
    ms.mark([1], "user")
    ms.mark([1], "system")
    assert ms.provenance_of(1) == Provenance.USER


def test_mention_set_rejects_unknown_entity(movie_graph):
    ms = MentionSet(movie_graph)
    with pytest.raises(LookupError_):
        ms.mark([999], Provenance.USER)


def test_mention_set_reset(movie_graph):
    ms = MentionSet(movie_graph)
    ms.mark([1, 2], Provenance.USER)
    ms.reset()
    assert ms.order == []
    assert len(ms) == 0


# ---------------------------------------------------------------------------
# file loading


def write_jsonl(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def test_load_graph_roundtrip(tmp_path):
    ents = tmp_path / "entities.jsonl"
    edges = tmp_path / "edges.jsonl"
    write_jsonl(ents, [
        '{"id": 0, "name": "Titanic", "kind": "candidate"}',
        '{"id": 1, "name": "Romance", "kind": "attribute"}',
        '{"id": 2, "name": "Genre", "kind": "class"}',
    ])
    write_jsonl(edges, [
        '{"head": 0, "relation": "has_genre", "tail": 1}',
        '{"head": 1, "relation": "instance_of", "tail": 2}',
    ])
    g = load_graph(ents, edges)
    assert g.num_entities == 3
    assert g.num_edges == 2


def test_load_graph_unknown_edge_target(tmp_path):
    ents = tmp_path / "entities.jsonl"
    edges = tmp_path / "edges.jsonl"
    write_jsonl(ents, ['{"id": 0, "name": "Titanic", "kind": "candidate"}'])
    write_jsonl(edges, ['{"head": 0, "relation": "stars", "tail": 99}'])
    with pytest.raises(IntegrityError):
        load_graph(ents, edges)


def test_load_graph_reports_bad_line(tmp_path):
    ents = tmp_path / "entities.jsonl"
    edges = tmp_path / "edges.jsonl"
    write_jsonl(ents, ['{"id": 0, "name": "X", "kind": "wizard"}'])
    write_jsonl(edges, [])
    with pytest.raises(LoadError, match="entities.jsonl:1"):
        load_graph(ents, edges)


def test_load_graph_invalid_json_line(tmp_path):
    ents = tmp_path / "entities.jsonl"
    edges = tmp_path / "edges.jsonl"
    write_jsonl(ents, ["{not json"])
    write_jsonl(edges, [])
    with pytest.raises(LoadError, match=":1"):
        load_graph(ents, edges)
