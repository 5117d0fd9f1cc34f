"""Automatic evaluation metrics over ranked recommendations, realized
utterances, and class-level knowledge sets.

Everything here is a pure function of its inputs; corpus replay lives in
the training module.
"""
from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field


def tokens_of(text: str) -> list[str]:
    return text.lower().split()


def rank_of(ranking: list[int], gold: int) -> int | None:
    """1-based rank of gold in the ordered id list, None when absent."""
    for position, candidate in enumerate(ranking, start=1):
        if candidate == gold:
            return position
    return None


def recall_at_k(ranks: list[int | None], k: int) -> float:
    """Fraction of turns whose gold rank is within k; rank-less turns are
    excluded from the denominator."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [r for r in ranks if r is not None]
    if not scored:
        return 0.0
    return sum(1 for r in scored if r <= k) / len(scored)


def turn_chat_at_k(dialog_ranks: list[list[int | None]],
                   k: int) -> tuple[float, float]:
    """(turn@k over every recommendation turn, chat@k over final turns)."""
    flat = [r for dialog in dialog_ranks for r in dialog]
    finals = [dialog[-1] for dialog in dialog_ranks if dialog]
    return recall_at_k(flat, k), recall_at_k(finals, k)


def distinct_n(utterances: list[str], n: int) -> float:
    """Corpus-level distinct n-grams over total n-grams.

    Lowercased whitespace tokens; n-grams never cross utterance boundaries.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0
    seen: set[tuple[str, ...]] = set()
    corpus_tokens = 0
    for utterance in utterances:
        toks = tokens_of(utterance)
        corpus_tokens += len(toks)
        for i in range(len(toks) - n + 1):
            seen.add(tuple(toks[i:i + n]))
            total += 1
    if corpus_tokens < n:
        warnings.warn(f"corpus has fewer than {n} tokens; distinct-{n} is 0")
        return 0.0
    if total == 0:
        return 0.0
    return len(seen) / total


def knowledge_prf_sets(predicted: list[set[int]],
                       gold: list[set[int]]) -> tuple[float, float, float]:
    """Micro-averaged precision/recall/F1 over per-turn annotation sets.

    Zero total predictions make precision 0 by convention; F1 is 0 when
    P + R = 0.
    """
    if len(predicted) != len(gold):
        raise ValueError("prediction/gold turn counts differ")
    hit = sum(len(p & g) for p, g in zip(predicted, gold))
    pred_total = sum(len(p) for p in predicted)
    gold_total = sum(len(g) for g in gold)
    precision = hit / pred_total if pred_total else 0.0
    recall = hit / gold_total if gold_total else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def knowledge_prf(predicted_acts, gold_acts, graph) -> tuple[float, float, float]:
    """Annotation-set comparison of grounded acts (see knowledge_annotations)."""
    from .nlg import knowledge_annotations
    return knowledge_prf_sets(
        [knowledge_annotations(a, graph) for a in predicted_acts],
        [knowledge_annotations(a, graph) for a in gold_acts])


def _ngram_counts(toks: list[str], n: int) -> Counter:
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu(candidates: list[str], references: list[str], max_n: int = 4) -> float:
    """Corpus BLEU with uniform weights, clipped counts, brevity penalty,
    and no smoothing (any empty modified precision zeroes the score)."""
    if len(candidates) != len(references):
        raise ValueError("candidate/reference counts differ")
    if not candidates:
        return 0.0
    match = [0] * max_n
    total = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_toks = tokens_of(cand)
        ref_toks = tokens_of(ref)
        cand_len += len(cand_toks)
        ref_len += len(ref_toks)
        for n in range(1, max_n + 1):
            cand_counts = _ngram_counts(cand_toks, n)
            ref_counts = _ngram_counts(ref_toks, n)
            total[n - 1] += max(len(cand_toks) - n + 1, 0)
            match[n - 1] += sum(min(count, ref_counts[gram])
                                for gram, count in cand_counts.items())
    if any(t == 0 or m == 0 for m, t in zip(match, total)):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(match, total)) / max_n
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return brevity * math.exp(log_precision)


def intent_accuracy(predicted: list[int], gold: list[int]) -> float:
    if len(predicted) != len(gold):
        raise ValueError("prediction/gold counts differ")
    if not gold:
        return 0.0
    return sum(1 for p, g in zip(predicted, gold) if p == g) / len(gold)


@dataclass
class EvalReport:
    recall: dict[int, float] = field(default_factory=dict)       # k -> rate
    turn: dict[int, float] = field(default_factory=dict)
    chat: dict[int, float] = field(default_factory=dict)
    distinct: dict[int, float] = field(default_factory=dict)     # n -> rate
    knowledge_precision: float = 0.0
    knowledge_recall: float = 0.0
    knowledge_f1: float = 0.0
    intent_accuracy: float = 0.0
    bleu: float = 0.0
    num_dialogs: int = 0
    num_system_turns: int = 0
    num_recommend_turns: int = 0

    def to_dict(self) -> dict:
        return {
            "recall": {str(k): v for k, v in sorted(self.recall.items())},
            "turn": {str(k): v for k, v in sorted(self.turn.items())},
            "chat": {str(k): v for k, v in sorted(self.chat.items())},
            "distinct": {str(n): v for n, v in sorted(self.distinct.items())},
            "knowledge": {
                "precision": self.knowledge_precision,
                "recall": self.knowledge_recall,
                "f1": self.knowledge_f1,
            },
            "intent_accuracy": self.intent_accuracy,
            "bleu": self.bleu,
            "counts": {
                "dialogs": self.num_dialogs,
                "system_turns": self.num_system_turns,
                "recommend_turns": self.num_recommend_turns,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Aligned two-column plain-text summary."""
        rows: list[tuple[str, str]] = []
        for k, v in sorted(self.recall.items()):
            rows.append((f"Recall@{k}", f"{v:.4f}"))
        for k, v in sorted(self.turn.items()):
            rows.append((f"Turn@{k}", f"{v:.4f}"))
        for k, v in sorted(self.chat.items()):
            rows.append((f"Chat@{k}", f"{v:.4f}"))
        for n, v in sorted(self.distinct.items()):
            rows.append((f"Dist-{n}", f"{v:.4f}"))
        rows.append(("Know-P", f"{self.knowledge_precision:.4f}"))
        rows.append(("Know-R", f"{self.knowledge_recall:.4f}"))
        rows.append(("Know-F1", f"{self.knowledge_f1:.4f}"))
        rows.append(("Intent-Acc", f"{self.intent_accuracy:.4f}"))
        rows.append(("BLEU", f"{self.bleu:.4f}"))
        rows.append(("Dialogs", str(self.num_dialogs)))
        rows.append(("SysTurns", str(self.num_system_turns)))
        rows.append(("RecTurns", str(self.num_recommend_turns)))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)
