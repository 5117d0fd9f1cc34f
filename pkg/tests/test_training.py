"""Corpus files, gold derivation, dialog replay, losses, and the trainer."""
from __future__ import annotations

import json

import numpy as np
import pytest

import convrec.numerics as nm
from convrec.acts import serialize
from convrec.config import ModelConfig, TrainConfig
from convrec.kg import LookupError_, MentionSet, Provenance
from convrec.policy import Intent, candidate_set, intent_logits, walker_cell
from convrec.synth import build_corpus, build_world
from convrec.training import (
    CorpusError,
    Dialog,
    TrainingError,
    Turn,
    act_from_gold,
    derive_gold,
    evaluate,
    iter_turn_contexts,
    load_corpus,
    save_corpus,
    split_dialogs,
    train,
    turn_losses,
    walker_loss,
)
from conftest import (
    ACTION,
    ARNOLD,
    EIGHTIES,
    GENRE,
    HORROR,
    SHINING,
    TERMINATOR,
    TITANIC,
)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def hand_record():
    return {
        "id": "d0",
        "turns": [
            {"role": "system", "text": "Hello! What can I find for you?",
             "entities": [], "intent": "Chat", "tree": []},
            {"role": "user", "text": "I like Arnold Schwarzenegger",
             "entities": [ARNOLD]},
            {"role": "system", "text": "How about The Terminator?",
             "entities": [TERMINATOR, ARNOLD], "intent": "Recommend",
             "tree": [[TERMINATOR, [ARNOLD]]]},
            {"role": "user", "text": "Sounds good!", "entities": []},
        ],
    }


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------


def test_load_corpus_reads_annotated_dialog(tmp_path, movie_graph):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [hand_record()])
    dialogs = load_corpus(path, movie_graph)
    assert len(dialogs) == 1
    dialog = dialogs[0]
    assert dialog.id == "d0"
    assert len(dialog.turns) == 4
    assert dialog.turns[0].intent is Intent.CHAT
    assert dialog.turns[2].intent is Intent.RECOMMEND
    assert dialog.turns[2].tree == [(TERMINATOR, [ARNOLD])]
    assert dialog.turns[1].intent is None
    assert len(dialog.system_turns()) == 2


def test_save_load_roundtrip(tmp_path, movie_graph):
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    write_jsonl(first, [hand_record()])
    dialogs = load_corpus(first, movie_graph)
    save_corpus(second, dialogs)
    again = load_corpus(second, movie_graph)
    assert again == dialogs
    # saving twice produces identical bytes
    third = tmp_path / "c.jsonl"
    save_corpus(third, again)
    assert third.read_bytes() == second.read_bytes()


def test_tree_accepts_bare_entity_ids(tmp_path, movie_graph):
    record = hand_record()
    record["turns"][2]["tree"] = [TERMINATOR]
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [record])
    dialogs = load_corpus(path, movie_graph)
    assert dialogs[0].turns[2].tree == [(TERMINATOR, [])]


def test_missing_entities_fall_back_to_linking(tmp_path, movie_graph):
    record = hand_record()
    del record["turns"][1]["entities"]
    record["turns"][1]["text"] = "I love The Terminator"
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [record])
    dialogs = load_corpus(path, movie_graph)
    assert dialogs[0].turns[1].entities == [TERMINATOR]


def test_roles_must_alternate(tmp_path, movie_graph):
    record = hand_record()
    record["turns"] = record["turns"][1:]  # starts with a user turn
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [record])
    with pytest.raises(CorpusError) as exc:
        load_corpus(path, movie_graph)
    assert "roles must alternate starting from system" in str(exc.value)
    assert f"{path}:1" in str(exc.value)


def test_unknown_role_rejected(tmp_path, movie_graph):
    record = hand_record()
    record["turns"][0]["role"] = "assistant"
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [record])
    with pytest.raises(CorpusError, match="unknown role"):
        load_corpus(path, movie_graph)


def test_unknown_entity_id_rejected(tmp_path, movie_graph):
    record = hand_record()
    record["turns"][1]["entities"] = [999]
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [record])
    with pytest.raises(LookupError_, match="999"):
        load_corpus(path, movie_graph)


def test_invalid_json_line_reports_position(tmp_path, movie_graph):
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps(hand_record()) + "\nnot json\n")
    with pytest.raises(CorpusError) as exc:
        load_corpus(path, movie_graph)
    assert "invalid JSON" in str(exc.value)
    assert f"{path}:2" in str(exc.value)


def test_malformed_tree_root_rejected(tmp_path, movie_graph):
    record = hand_record()
    record["turns"][2]["tree"] = [[TERMINATOR]]  # missing children list
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [record])
    with pytest.raises(CorpusError, match="tree root"):
        load_corpus(path, movie_graph)


def test_blank_lines_are_skipped(tmp_path, movie_graph):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n" + json.dumps(hand_record()) + "\n\n")
    assert len(load_corpus(path, movie_graph)) == 1


# ---------------------------------------------------------------------------
# gold derivation
# ---------------------------------------------------------------------------


def test_derive_gold_intent_priorities(movie_graph):
    dialog = Dialog(id="g", turns=[
        Turn(role="system", text="Welcome to movie night."),
        Turn(role="user", text="hi", entities=[]),
        Turn(role="system", text="What sort of films do you enjoy?"),
        Turn(role="user", text="scary ones", entities=[HORROR]),
        Turn(role="system", text="Shining is a classic.",
             entities=[SHINING, HORROR]),
        Turn(role="user", text="thanks", entities=[]),
        Turn(role="system", text="Enjoy the evening."),
    ])
    derive_gold(dialog, movie_graph)
    intents = [t.intent for t in dialog.system_turns()]
    assert intents == [Intent.CHAT, Intent.QUERY, Intent.RECOMMEND,
                       Intent.CHAT]
    # the named candidate becomes the root; the adjacent genre its child
    assert dialog.system_turns()[2].tree == [(SHINING, [HORROR])]


def test_derive_gold_class_entity_means_query(movie_graph):
    dialog = Dialog(id="q", turns=[
        Turn(role="system", text="Genre matters a lot to me.",
             entities=[GENRE]),
    ])
    derive_gold(dialog, movie_graph)
    assert dialog.turns[0].intent is Intent.QUERY
    assert dialog.turns[0].tree == [(GENRE, [])]


def test_derive_gold_chat_roots_need_prior_mention(movie_graph):
    mentioned = Dialog(id="c1", turns=[
        Turn(role="user", text="I watched The Terminator",
             entities=[TERMINATOR]),
        Turn(role="system", text="Glad you liked it.",
             entities=[TERMINATOR], intent=Intent.CHAT),
    ])
    derive_gold(mentioned, movie_graph)
    assert mentioned.turns[1].tree == [(TERMINATOR, [])]

    unmentioned = Dialog(id="c2", turns=[
        Turn(role="system", text="Glad you liked it.",
             entities=[TITANIC], intent=Intent.CHAT),
    ])
    derive_gold(unmentioned, movie_graph)
    assert unmentioned.turns[0].tree == []


def test_derive_gold_keeps_preset_annotations(movie_graph):
    dialog = Dialog(id="p", turns=[
        Turn(role="system", text="Shining is a classic.",
             entities=[SHINING], intent=Intent.CHAT,
             tree=[(SHINING, [])]),
    ])
    derive_gold(dialog, movie_graph)
    assert dialog.turns[0].intent is Intent.CHAT
    assert dialog.turns[0].tree == [(SHINING, [])]


def test_act_from_gold_serializes_the_tree(movie_graph):
    turn = Turn(role="system", text="", entities=[],
                intent=Intent.RECOMMEND,
                tree=[(TERMINATOR, [ACTION, EIGHTIES])])
    act = act_from_gold(turn, movie_graph)
    assert serialize(act) == \
        "[ Recommend ( The Terminator ( Action ) ( 1980s ) ) ]"
    assert act.roots[0].entity_id == TERMINATOR
    assert [c.entity_id for c in act.roots[0].children] == [ACTION, EIGHTIES]


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def test_iter_turn_contexts_yields_system_turns_in_order(tmp_path,
                                                         movie_graph,
                                                         tiny_model):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [hand_record()])
    dialog = load_corpus(path, movie_graph)[0]
    seen = []
    for idx, turn, u, mentions in iter_turn_contexts(tiny_model, dialog):
        seen.append((idx, turn.intent, mentions.ids_sorted(), u.data.copy()))
    assert [s[0] for s in seen] == [0, 2]
    assert [s[1] for s in seen] == [Intent.CHAT, Intent.RECOMMEND]
    # first system turn reasons over an empty mention set; the second sees
    # the user's entity but not its own gold tree yet
    assert seen[0][2] == []
    assert seen[1][2] == [ARNOLD]
    # dialog state advanced between the two turns
    assert not np.array_equal(seen[0][3], seen[1][3])


def test_iter_turn_contexts_marks_gold_after_yield(tmp_path, movie_graph,
                                                   tiny_model):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [hand_record()])
    dialog = load_corpus(path, movie_graph)[0]
    final = None
    for _, _, _, mentions in iter_turn_contexts(tiny_model, dialog):
        final = mentions
    assert final.ids_sorted() == [ARNOLD, TERMINATOR]
    # the user named Arnold first, so user provenance sticks
    assert final.provenance_of(ARNOLD) is Provenance.USER
    assert final.provenance_of(TERMINATOR) is Provenance.SYSTEM


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def test_walker_loss_matches_hand_bce():
    scores = nm.as_tensor(np.array([0.3, 0.8]))
    loss = walker_loss([5, 7], {5}, scores)
    expected = -np.log(0.3) - np.log(1.0 - 0.8)
    assert abs(float(loss.data) - expected) < 1e-12


def test_walker_loss_all_negative():
    scores = nm.as_tensor(np.array([0.25, 0.75]))
    loss = walker_loss([5, 7], set(), scores)
    expected = -np.log(0.75) - np.log(0.25)
    assert abs(float(loss.data) - expected) < 1e-12


def recommend_turn_fixture():
    return Turn(role="system", text="How about The Terminator?",
                entities=[TERMINATOR], intent=Intent.RECOMMEND,
                tree=[(TERMINATOR, [ACTION])])


def test_turn_losses_parts_are_positive_and_finite(movie_graph, tiny_model):
    h_all = tiny_model.embeddings()
    u = tiny_model.new_state()[0]
    mentions = MentionSet(movie_graph)
    p = tiny_model.portrait_of(mentions, h_all)
    l_int, l1, l2 = turn_losses(tiny_model, h_all, recommend_turn_fixture(),
                                u, p, mentions)
    for part in (l_int, l1, l2):
        value = float(part.data)
        assert np.isfinite(value) and value > 0.0


def test_turn_losses_intent_part_is_cross_entropy(movie_graph, tiny_model):
    h_all = tiny_model.embeddings()
    u = tiny_model.new_state()[0]
    mentions = MentionSet(movie_graph)
    p = tiny_model.portrait_of(mentions, h_all)
    l_int, _, _ = turn_losses(tiny_model, h_all, recommend_turn_fixture(),
                              u, p, mentions)
    expected = nm.cross_entropy(intent_logits(u, tiny_model.intent),
                                int(Intent.RECOMMEND))
    assert abs(float(l_int.data) - float(expected.data)) < 1e-12


def test_negative_sampling_shrinks_depth_one_loss(movie_graph, tiny_model):
    h_all = tiny_model.embeddings()
    u = tiny_model.new_state()[0]
    mentions = MentionSet(movie_graph)
    p = tiny_model.portrait_of(mentions, h_all)
    turn = recommend_turn_fixture()
    _, full, _ = turn_losses(tiny_model, h_all, turn, u, p, mentions)
    _, sampled, _ = turn_losses(tiny_model, h_all, turn, u, p, mentions,
                                rng=np.random.default_rng(7),
                                negative_samples=2)
    # the sampled candidate list is a strict subset, so the summed loss drops
    assert float(sampled.data) < float(full.data)


def test_negative_sampling_keeps_gold_and_draw_is_seeded(movie_graph,
                                                         tiny_model):
    h_all = tiny_model.embeddings()
    u = tiny_model.new_state()[0]
    mentions = MentionSet(movie_graph)
    p = tiny_model.portrait_of(mentions, h_all)
    turn = recommend_turn_fixture()
    _, sampled, _ = turn_losses(tiny_model, h_all, turn, u, p, mentions,
                                rng=np.random.default_rng(7),
                                negative_samples=2)
    # replicate the draw: gold roots stay, two negatives come from the pool
    rng = np.random.default_rng(7)
    all_cands = candidate_set(Intent.RECOMMEND, None, movie_graph, mentions)
    pool = np.array([c for c in all_cands if c != TERMINATOR],
                    dtype=np.int64)
    picked = rng.choice(pool, size=2, replace=False)
    cands = [TERMINATOR] + [int(c) for c in picked]
    rows = np.array([movie_graph.index_of[c] for c in cands], dtype=np.int64)
    scores, _ = walker_cell(tiny_model.walker.roots[Intent.RECOMMEND], u, p,
                            nm.gather_rows(h_all, rows),
                            tiny_model.walker.gates[Intent.RECOMMEND])
    expected = walker_loss(cands, {TERMINATOR}, scores)
    assert abs(float(sampled.data) - float(expected.data)) < 1e-12


def test_no_sampling_when_pool_is_too_small(movie_graph, tiny_model):
    h_all = tiny_model.embeddings()
    u = tiny_model.new_state()[0]
    mentions = MentionSet(movie_graph)
    p = tiny_model.portrait_of(mentions, h_all)
    turn = recommend_turn_fixture()
    _, full, _ = turn_losses(tiny_model, h_all, turn, u, p, mentions)
    # five candidates, one gold: a 10-negative budget cannot be met, so the
    # full candidate set is scored instead
    _, same, _ = turn_losses(tiny_model, h_all, turn, u, p, mentions,
                             rng=np.random.default_rng(7),
                             negative_samples=10)
    assert float(same.data) == float(full.data)


# ---------------------------------------------------------------------------
# split and training loop
# ---------------------------------------------------------------------------


def make_dialogs(n):
    return [Dialog(id=f"d{i}", turns=[]) for i in range(n)]


def test_split_sizes_and_partition():
    dialogs = make_dialogs(10)
    train_set, val_set = split_dialogs(dialogs, 0.3, seed=0)
    assert len(val_set) == 3 and len(train_set) == 7
    assert {d.id for d in train_set} | {d.id for d in val_set} \
        == {d.id for d in dialogs}
    assert {d.id for d in train_set} & {d.id for d in val_set} == set()


def test_split_preserves_corpus_order_and_is_seeded():
    dialogs = make_dialogs(20)
    train_a, val_a = split_dialogs(dialogs, 0.25, seed=4)
    train_b, val_b = split_dialogs(dialogs, 0.25, seed=4)
    assert [d.id for d in train_a] == [d.id for d in train_b]
    assert [d.id for d in val_a] == [d.id for d in val_b]
    positions = [int(d.id[1:]) for d in train_a]
    assert positions == sorted(positions)


def test_train_requires_dialogs(movie_graph):
    with pytest.raises(TrainingError, match="no training dialogs"):
        train([], movie_graph, TrainConfig(epochs=1))


@pytest.fixture(scope="module")
def small_run():
    world = build_world(0)
    dialogs = build_corpus(world, num_dialogs=6, seed=1)
    config = TrainConfig(epochs=5, batch_size=3, seed=5,
                         model=ModelConfig(seed=5).scaled(16))
    logged = []
    result = train(dialogs, world.graph, config, log=logged.append)
    return world, dialogs, config, result, logged


def test_train_history_shape(small_run):
    _, _, config, result, logged = small_run
    assert len(result.history) == config.epochs
    for i, record in enumerate(result.history):
        assert record["epoch"] == i
        for key in ("loss", "intent_loss", "walk1_loss", "walk2_loss"):
            assert np.isfinite(record[key])
    assert len(logged) == config.epochs
    assert all(line.startswith("epoch") for line in logged)


def test_train_loss_decreases(small_run):
    _, _, _, result, _ = small_run
    assert result.history[-1]["loss"] < result.history[0]["loss"]


def test_train_split_bookkeeping(small_run):
    _, dialogs, _, result, _ = small_run
    assert sorted(result.train_ids + result.val_ids) \
        == sorted(d.id for d in dialogs)
    assert result.validation is not None
    assert result.validation.num_dialogs == len(result.val_ids)


def test_train_is_bit_deterministic(small_run):
    world, dialogs, config, result, _ = small_run
    again = train(dialogs, world.graph, config)
    assert again.history == result.history
    for name, tensor in again.model.params().items():
        assert np.array_equal(tensor.data, result.model.params()[name].data)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def test_evaluate_report_counts_and_fields(small_run):
    world, dialogs, _, result, _ = small_run
    report = evaluate(result.model, dialogs[:2])
    assert report.num_dialogs == 2
    # the synthetic script has six system turns per dialog, three of which
    # recommend a movie
    assert report.num_system_turns == 12
    assert report.num_recommend_turns == 6
    assert set(report.recall) == {1, 10, 50}
    assert set(report.turn) == {1, 3}
    assert set(report.distinct) == {2, 3}
    for value in report.recall.values():
        assert 0.0 <= value <= 1.0
    assert 0.0 <= report.intent_accuracy <= 1.0
    assert "Recall@1" in report.to_table()


def test_evaluate_is_deterministic(small_run):
    world, dialogs, _, result, _ = small_run
    first = evaluate(result.model, dialogs[:2])
    second = evaluate(result.model, dialogs[:2])
    assert first.to_dict() == second.to_dict()
