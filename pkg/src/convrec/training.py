"""Corpus handling and joint optimization.

A dialog replays as alternating system/user turns starting from the
system. Training walks each dialog with a fresh mention set, supervises
the intent head with cross-entropy and the walker with per-depth logistic
losses under teacher forcing, and takes one optimizer step per dialog
batch. Evaluation replays the same way with gold context while collecting
predictions.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .acts import ActNode, DialogAct, tree_to_act
from .config import TrainConfig
from .kg import EntityKind, KnowledgeGraph, MentionSet, Provenance
from .metrics import (EvalReport, bleu, distinct_n, intent_accuracy,
                      knowledge_prf_sets, rank_of, recall_at_k,
                      turn_chat_at_k)
from .model import Model, compose_round
from .nlg import TemplateSet, knowledge_annotations, realize
from .numerics import Tensor
from .policy import (Intent, candidate_set, expand_tree, intent_from_label,
                     intent_logits, rank_recommendations, walker_cell)

GoldRoot = tuple[int, list[int]]


class CorpusError(ValueError):
    """Malformed corpus file; message carries file and line context."""


class TrainingError(RuntimeError):
    """Optimization failed (e.g. non-finite loss); message carries context."""


@dataclass
class Turn:
    role: str                       # "system" | "user"
    text: str
    entities: list[int] = field(default_factory=list)
    intent: Intent | None = None    # system turns only
    tree: list[GoldRoot] = field(default_factory=list)


@dataclass
class Dialog:
    id: str
    turns: list[Turn]

    def system_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role == "system"]


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------

def _tree_from_json(raw) -> list[GoldRoot]:
    roots: list[GoldRoot] = []
    for item in raw:
        if isinstance(item, list):
            if len(item) != 2:
                raise ValueError(f"tree root must be [id, [children]]: {item!r}")
            root, children = item
            roots.append((int(root), [int(c) for c in children]))
        else:
            roots.append((int(item), []))
    return roots


def _tree_to_json(tree: list[GoldRoot]) -> list:
    return [[root, list(children)] for root, children in tree]


def load_corpus(path, graph: KnowledgeGraph,
                link_threshold: float = 0.9) -> list[Dialog]:
    """Read dialogs from JSONL; fill in missing annotations.

    Missing ``entities`` fall back to fuzzy linking over the turn text;
    missing ``intent``/``tree`` on system turns are derived by rule.
    """
    dialogs: list[Dialog] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})")
            try:
                dialog = _parse_dialog(raw, graph, link_threshold)
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad dialog record ({exc})")
            dialogs.append(dialog)
    return dialogs


def _parse_dialog(raw: dict, graph: KnowledgeGraph,
                  link_threshold: float) -> Dialog:
    turns: list[Turn] = []
    needs_derivation = False
    for idx, t in enumerate(raw["turns"]):
        role = str(t["role"])
        if role not in ("system", "user"):
            raise ValueError(f"turn {idx}: unknown role {role!r}")
        expected = "system" if idx % 2 == 0 else "user"
        if role != expected:
            raise ValueError(
                f"turn {idx}: roles must alternate starting from system")
        text = str(t.get("text", ""))
        if "entities" in t and t["entities"] is not None:
            entities = [int(e) for e in t["entities"]]
            for eid in entities:
                graph.entity(eid)  # raises on unknown ids
        else:
            entities = graph.link_mentions(text, link_threshold)
        intent = None
        tree: list[GoldRoot] = []
        if role == "system":
            if t.get("intent") is not None:
                intent = intent_from_label(str(t["intent"]))
            if t.get("tree") is not None:
                tree = _tree_from_json(t["tree"])
            if t.get("intent") is None or t.get("tree") is None:
                needs_derivation = True
        turns.append(Turn(role=role, text=text, entities=entities,
                          intent=intent, tree=tree))
    dialog = Dialog(id=str(raw["id"]), turns=turns)
    if needs_derivation:
        derive_gold(dialog, graph)
    return dialog


def save_corpus(path, dialogs: list[Dialog]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for dialog in dialogs:
            record = {
                "id": dialog.id,
                "turns": [
                    {
                        "role": t.role,
                        "text": t.text,
                        "entities": list(t.entities),
                        **({"intent": t.intent.label,
                            "tree": _tree_to_json(t.tree)}
                           if t.role == "system" else {}),
                    }
                    for t in dialog.turns
                ],
            }
            fh.write(json.dumps(record, sort_keys=True,
                                separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# gold annotation rules
# ---------------------------------------------------------------------------

_INTERROGATIVE = re.compile(
    r"\?|\b(what|which|who|when|where|how|do you|any)\b")


def derive_gold(dialog: Dialog, graph: KnowledgeGraph) -> Dialog:
    """Fill missing gold intents and trees by rule, in mention-replay order.

    Priority: a turn naming a candidate entity is Recommend; else an
    interrogative pattern or a named class entity makes it Query; else
    Chat. Depth-1 gold is the intent's mapped set intersected with the
    turn's entities; depth-2 adds turn entities adjacent to a depth-1 root.
    """
    mentions = MentionSet(graph)
    for turn in dialog.turns:
        if turn.role == "user":
            mentions.mark(turn.entities, Provenance.USER)
            continue
        kinds = {eid: graph.entities[eid].kind for eid in turn.entities}
        if turn.intent is None:
            if any(k is EntityKind.CANDIDATE for k in kinds.values()):
                turn.intent = Intent.RECOMMEND
            elif (_INTERROGATIVE.search(turn.text.lower())
                  or any(k is EntityKind.CLASS for k in kinds.values())):
                turn.intent = Intent.QUERY
            else:
                turn.intent = Intent.CHAT
        if not turn.tree:
            turn.tree = _derive_tree(turn, graph, mentions, kinds)
        mentions.mark(_tree_entities(turn.tree), Provenance.SYSTEM)
        mentions.mark(turn.entities, Provenance.SYSTEM)
    return dialog


def _derive_tree(turn: Turn, graph: KnowledgeGraph, mentions: MentionSet,
                 kinds: dict[int, EntityKind]) -> list[GoldRoot]:
    if turn.intent is Intent.RECOMMEND:
        roots = [e for e in turn.entities if kinds[e] is EntityKind.CANDIDATE]
    elif turn.intent is Intent.QUERY:
        roots = [e for e in turn.entities if kinds[e] is EntityKind.CLASS]
    else:
        roots = [e for e in turn.entities if e in mentions]
    root_set = set(roots)
    taken: set[int] = set()
    tree: list[GoldRoot] = []
    for root in roots:
        adjacent = set(graph.neighbors_all(root))
        children = [e for e in turn.entities
                    if e in adjacent and e not in root_set and e not in taken]
        taken.update(children)
        tree.append((root, children))
    return tree


def _tree_entities(tree: list[GoldRoot]) -> list[int]:
    out: list[int] = []
    for root, children in tree:
        out.append(root)
        out.extend(children)
    return out


def act_from_gold(turn: Turn, graph: KnowledgeGraph) -> DialogAct:
    """The gold tree as a grounded act (used by knowledge metrics)."""
    roots = [
        ActNode(label=graph.entity(root).name,
                children=[ActNode(label=graph.entity(c).name, entity_id=c)
                          for c in children],
                entity_id=root)
        for root, children in turn.tree
    ]
    return DialogAct(intent=turn.intent.label, roots=roots)


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

def iter_turn_contexts(model: Model, dialog: Dialog):
    """Yield (turn_index, system turn, u_t, live mention set) in order.

    Mention evolution follows gold annotations: user entities are marked
    before their next system turn's reasoning; the system turn's gold tree
    and linked entities are marked after the yield returns. The dialog
    state steps once per completed (system, user) round.
    """
    mentions = MentionSet(model.graph)
    state = model.new_state()
    pending_system: str | None = None
    for idx, turn in enumerate(dialog.turns):
        if turn.role == "user":
            mentions.mark(turn.entities, Provenance.USER)
            state = model.step_state(
                state, compose_round(pending_system, turn.text))
            pending_system = None
        else:
            yield idx, turn, state[0], mentions
            mentions.mark(_tree_entities(turn.tree), Provenance.SYSTEM)
            mentions.mark(turn.entities, Provenance.SYSTEM)
            pending_system = turn.text


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def walker_loss(candidate_ids: list[int], gold_ids: set[int],
                scores: Tensor) -> Tensor:
    """Sum of per-candidate logistic losses against gold membership."""
    labels = np.array([1.0 if c in gold_ids else 0.0 for c in candidate_ids])
    return nm.binary_cross_entropy(scores, labels, reduction="sum")


def _score_candidates(model: Model, h_all: Tensor, intent: Intent,
                      h_node: Tensor, u: Tensor, p: Tensor,
                      candidate_ids: list[int]) -> Tensor:
    rows = np.array([model.graph.index_of[e] for e in candidate_ids],
                    dtype=np.int64)
    scores, _ = walker_cell(h_node, u, p, nm.gather_rows(h_all, rows),
                            model.walker.gates[intent])
    return scores


def _node_embedding(model: Model, h_all: Tensor, entity_id: int) -> Tensor:
    row = np.array([model.graph.index_of[entity_id]], dtype=np.int64)
    return nm.tsum(nm.gather_rows(h_all, row), axis=0)


def turn_losses(model: Model, h_all: Tensor, turn: Turn, u: Tensor,
                p: Tensor, mentions: MentionSet,
                rng: np.random.Generator | None = None,
                negative_samples: int = 0) -> tuple[Tensor, Tensor, Tensor]:
    """(intent loss, depth-1 walker loss, depth-2 walker loss) for one turn.

    Depth-2 candidate sets derive from gold depth-1 roots (teacher
    forcing). Recommendation turns subsample depth-1 negatives when
    ``negative_samples`` > 0 and an rng is provided.
    """
    graph = model.graph
    intent = turn.intent
    l_int = nm.cross_entropy(intent_logits(u, model.intent), int(intent))

    gold_roots = [root for root, _ in turn.tree]
    candidates = candidate_set(intent, None, graph, mentions)
    if (intent is Intent.RECOMMEND and rng is not None and negative_samples > 0
            and len(candidates) > len(gold_roots) + negative_samples):
        pool = np.array([c for c in candidates if c not in set(gold_roots)],
                        dtype=np.int64)
        picked = rng.choice(pool, size=negative_samples, replace=False)
        candidates = list(gold_roots) + [int(c) for c in picked]
    if candidates:
        scores = _score_candidates(model, h_all, intent,
                                   model.walker.roots[intent], u, p,
                                   candidates)
        l_depth1 = walker_loss(candidates, set(gold_roots), scores)
    else:
        l_depth1 = nm.as_tensor(0.0)

    l_depth2 = nm.as_tensor(0.0)
    for root, children in turn.tree:
        cands2 = candidate_set(intent, root, graph, mentions,
                               frozenset({root}))
        if not cands2:
            continue
        scores2 = _score_candidates(model, h_all, intent,
                                    _node_embedding(model, h_all, root),
                                    u, p, cands2)
        l_depth2 = nm.add(l_depth2, walker_loss(cands2, set(children), scores2))
    return l_int, l_depth1, l_depth2


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: Model
    history: list[dict]
    validation: EvalReport | None
    train_ids: list[str]
    val_ids: list[str]


def split_dialogs(dialogs: list[Dialog], val_fraction: float,
                  seed: int) -> tuple[list[Dialog], list[Dialog]]:
    """Seeded dialog-level split; validation takes the first slice of the
    permutation."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dialogs))
    n_val = int(round(len(dialogs) * val_fraction))
    val_idx = sorted(int(i) for i in order[:n_val])
    val_set = set(val_idx)
    train = [dialogs[i] for i in range(len(dialogs)) if i not in val_set]
    val = [dialogs[i] for i in val_idx]
    return train, val


def train(dialogs: list[Dialog], graph: KnowledgeGraph, config: TrainConfig,
          model: Model | None = None, templates: TemplateSet | None = None,
          log=None) -> TrainResult:
    """Optimize the full model on ``dialogs`` per the replay recipe.

    One AdamW step per dialog batch on the turn-mean of
    L_int + lambda1 * L_1 + lambda2 * L_2; deterministic under
    ``config.seed`` (split, shuffles, and negative draws share one rng).
    """
    if model is None:
        model = Model.build(graph, config.model)
    train_set, val_set = split_dialogs(dialogs, config.val_fraction,
                                       config.seed)
    if not train_set:
        raise TrainingError("no training dialogs after split")
    params = model.params()
    optimizer = nm.AdamW(list(params.values()), lr=config.learning_rate,
                         weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    for epoch in range(config.epochs):
        order = [train_set[int(i)] for i in rng.permutation(len(train_set))]
        sums = {"intent": 0.0, "walk1": 0.0, "walk2": 0.0}
        turn_count = 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            h_all = model.embeddings()
            losses: list[Tensor] = []
            batch_turns = 0
            for dialog in batch:
                for idx, turn, u, mentions in iter_turn_contexts(model, dialog):
                    p = model.portrait_of(mentions, h_all)
                    l_int, l1, l2 = turn_losses(
                        model, h_all, turn, u, p, mentions, rng,
                        config.negative_samples)
                    for name, part in (("intent", l_int), ("walk1", l1),
                                       ("walk2", l2)):
                        value = float(part.data)
                        if not np.isfinite(value):
                            raise TrainingError(
                                f"non-finite {name} loss at epoch {epoch}, "
                                f"dialog {dialog.id!r}, turn {idx}")
                        sums[name] += value
                    losses.append(nm.add(
                        l_int,
                        nm.add(nm.scale(l1, config.lambda1),
                               nm.scale(l2, config.lambda2))))
                    batch_turns += 1
            if not losses:
                continue
            total = losses[0]
            for part in losses[1:]:
                total = nm.add(total, part)
            batch_loss = nm.scale(total, 1.0 / batch_turns)
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            turn_count += batch_turns
        record = {
            "epoch": epoch,
            "intent_loss": sums["intent"] / max(turn_count, 1),
            "walk1_loss": sums["walk1"] / max(turn_count, 1),
            "walk2_loss": sums["walk2"] / max(turn_count, 1),
        }
        record["loss"] = (record["intent_loss"]
                          + config.lambda1 * record["walk1_loss"]
                          + config.lambda2 * record["walk2_loss"])
        history.append(record)
        if log is not None:
            log(f"epoch {epoch:3d}  loss {record['loss']:.6f}  "
                f"intent {record['intent_loss']:.6f}  "
                f"walk1 {record['walk1_loss']:.6f}  "
                f"walk2 {record['walk2_loss']:.6f}")
    validation = (evaluate(model, val_set, templates=templates)
                  if val_set else None)
    return TrainResult(model=model, history=history, validation=validation,
                       train_ids=[d.id for d in train_set],
                       val_ids=[d.id for d in val_set])


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(model: Model, dialogs: list[Dialog],
             templates: TemplateSet | None = None,
             recall_ks: tuple[int, ...] = (1, 10, 50),
             turn_ks: tuple[int, ...] = (1, 3),
             distinct_ns: tuple[int, ...] = (2, 3),
             seed: int = 0) -> EvalReport:
    """Replay dialogs with gold context and score the model's predictions.

    Rankings are scored on gold recommendation turns against the full
    candidate set; generation metrics condition on the predicted intent
    and tree.
    """
    if templates is None:
        templates = TemplateSet()
    graph = model.graph
    h_all = model.embeddings()
    pred_intents: list[int] = []
    gold_intents: list[int] = []
    dialog_ranks: list[list[int | None]] = []
    pred_know: list[set[int]] = []
    gold_know: list[set[int]] = []
    realized: list[str] = []
    references: list[str] = []
    n_turns = 0
    for d_idx, dialog in enumerate(dialogs):
        ranks: list[int | None] = []
        for t_idx, turn, u, mentions in iter_turn_contexts(model, dialog):
            n_turns += 1
            p = model.portrait_of(mentions, h_all)
            probs = nm.softmax(intent_logits(u, model.intent), axis=-1)
            pred = Intent(int(np.argmax(probs.data)))
            pred_intents.append(int(pred))
            gold_intents.append(int(turn.intent))
            if turn.intent is Intent.RECOMMEND and turn.tree:
                gold_item = turn.tree[0][0]
                if graph.entities[gold_item].kind is EntityKind.CANDIDATE:
                    ranking = [eid for eid, _ in rank_recommendations(
                        graph, h_all, u, p, model.walker)]
                    ranks.append(rank_of(ranking, gold_item))
            tree = expand_tree(graph, h_all, pred, u, p, mentions,
                               model.walker, model.config)
            act = tree_to_act(tree, graph)
            utterance = realize(act, templates,
                                seed=seed * 100003 + d_idx * 1009 + t_idx)
            realized.append(utterance)
            references.append(turn.text)
            pred_know.append(knowledge_annotations(act, graph))
            gold_know.append(knowledge_annotations(act_from_gold(turn, graph),
                                                   graph))
        if ranks:
            dialog_ranks.append(ranks)
    flat_ranks = [r for ranks in dialog_ranks for r in ranks]
    report = EvalReport()
    for k in recall_ks:
        report.recall[k] = recall_at_k(flat_ranks, k)
    for k in turn_ks:
        report.turn[k], report.chat[k] = turn_chat_at_k(dialog_ranks, k)
    for n in distinct_ns:
        report.distinct[n] = distinct_n(realized, n)
    (report.knowledge_precision, report.knowledge_recall,
     report.knowledge_f1) = knowledge_prf_sets(pred_know, gold_know)
    report.intent_accuracy = intent_accuracy(pred_intents, gold_intents)
    report.bleu = bleu(realized, references)
    report.num_dialogs = len(dialogs)
    report.num_system_turns = n_turns
    report.num_recommend_turns = len(flat_ranks)
    return report
