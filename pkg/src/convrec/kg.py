"""Typed knowledge graph: entities, relation-partitioned adjacency, entity
linking, and per-session mention tracking.

The graph is immutable once loaded and safe to share across sessions; a
``MentionSet`` is the only mutable piece and belongs to exactly one session.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum


class GraphError(Exception):
    """Base class for graph construction/lookup problems."""


class LoadError(GraphError):
    """Malformed input line; carries the offending file and line number."""


class IntegrityError(GraphError):
    """Referential-integrity violation (dangling ids, kind-rule breaches)."""


class DuplicateKeyError(GraphError):
    """An entity id appeared twice in the entity file."""


class LookupError_(GraphError):
    """Unknown entity id or relation name."""


class EntityKind(str, Enum):
    CANDIDATE = "candidate"
    ATTRIBUTE = "attribute"
    CLASS = "class"


@dataclass(frozen=True)
class Entity:
    id: int
    name: str
    kind: EntityKind
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class Edge:
    head: int
    relation: str
    tail: int


_PUNCT = re.compile(r"[^\w\s]|_", re.UNICODE)


def normalize_text(text: str) -> str:
    """Lowercase and replace punctuation with spaces; collapses whitespace."""
    return " ".join(_PUNCT.sub(" ", text.lower()).split())


def tokenize(text: str) -> list[str]:
    return normalize_text(text).split()


def edit_distance(a: str, b: str, cutoff: int | None = None) -> int:
    """Levenshtein distance with an optional early-abandon cutoff."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return max(la, lb)
    if cutoff is not None and abs(la - lb) > cutoff:
        return cutoff + 1
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        ca = a[i - 1]
        best = cur[0]
        for j in range(1, lb + 1):
            cost = 0 if ca == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            best = min(best, cur[j])
        if cutoff is not None and best > cutoff:
            return cutoff + 1
        prev = cur
    return prev[lb]


def edit_similarity(a: str, b: str) -> float:
    """Normalized edit similarity: 1 - distance / (len(a) + len(b))."""
    if not a and not b:
        return 1.0
    return 1.0 - edit_distance(a, b) / (len(a) + len(b))


@dataclass(frozen=True)
class Mention:
    """A resolved span of linked text."""

    entity_id: int
    start: int       # token offset, inclusive
    end: int         # token offset, exclusive
    similarity: float


class KnowledgeGraph:
    """Immutable typed graph with forward/reverse relation indices."""

    def __init__(self, entities: list[Entity], edges: list[Edge]):
        self.entities: dict[int, Entity] = {}
        for ent in entities:
            if ent.id in self.entities:
                raise DuplicateKeyError(f"duplicate entity id {ent.id}")
            self.entities[ent.id] = ent
        self.edges: list[Edge] = []
        self.relations: list[str] = []
        self._fwd: dict[str, dict[int, list[int]]] = {}
        self._rev: dict[str, dict[int, list[int]]] = {}
        self._by_kind: dict[EntityKind, list[int]] = {k: [] for k in EntityKind}
        for ent in self.entities.values():
            self._by_kind[ent.kind].append(ent.id)
        for kind in self._by_kind:
            self._by_kind[kind].sort()

        seen: set[tuple[int, str, int]] = set()
        for edge in edges:
            if edge.head == edge.tail:
                raise IntegrityError(f"self-loop on entity {edge.head}")
            for endpoint in (edge.head, edge.tail):
                if endpoint not in self.entities:
                    raise IntegrityError(f"edge references unknown entity id {endpoint}")
            key = (edge.head, edge.relation, edge.tail)
            if key in seen:
                continue  # duplicate triples collapse silently
            seen.add(key)
            self.edges.append(edge)
            if edge.relation not in self._fwd:
                self.relations.append(edge.relation)
                self._fwd[edge.relation] = {}
                self._rev[edge.relation] = {}
            self._fwd[edge.relation].setdefault(edge.head, []).append(edge.tail)
            self._rev[edge.relation].setdefault(edge.tail, []).append(edge.head)
        for index in (self._fwd, self._rev):
            for adjacency in index.values():
                for ids in adjacency.values():
                    ids.sort()

        self._check_kind_rules()
        self._linker = _LexiconMatcher(self.entities.values())
        # Dense row numbering for embedding tables: sorted ids.
        self.index_of: dict[int, int] = {
            eid: row for row, eid in enumerate(sorted(self.entities))
        }
        self.ids_in_order: list[int] = sorted(self.entities)

    def _check_kind_rules(self) -> None:
        for ent in self.entities.values():
            if ent.kind is EntityKind.ATTRIBUTE:
                linked = self.neighbors_all(ent.id)
                if not any(self.entities[n].kind is EntityKind.CLASS for n in linked):
                    raise IntegrityError(
                        f"attribute entity {ent.id} ({ent.name!r}) has no edge to a class"
                    )

    # -- queries -----------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def entity(self, entity_id: int) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise LookupError_(f"unknown entity id {entity_id}")

    def by_kind(self, kind: EntityKind) -> list[int]:
        return list(self._by_kind[kind])

    def neighbors(self, entity_id: int, relation: str) -> list[int]:
        """Forward neighbors: tails of (entity, relation, .), ascending id."""
        if entity_id not in self.entities:
            raise LookupError_(f"unknown entity id {entity_id}")
        if relation not in self._fwd:
            raise LookupError_(f"unknown relation {relation!r}")
        return list(self._fwd[relation].get(entity_id, ()))

    def reverse_neighbors(self, entity_id: int, relation: str) -> list[int]:
        """Heads of (., relation, entity), ascending id."""
        if entity_id not in self.entities:
            raise LookupError_(f"unknown entity id {entity_id}")
        if relation not in self._rev:
            raise LookupError_(f"unknown relation {relation!r}")
        return list(self._rev[relation].get(entity_id, ()))

    def neighbors_all(self, entity_id: int) -> list[int]:
        """One-hop neighborhood over every relation, both directions, sorted."""
        if entity_id not in self.entities:
            raise LookupError_(f"unknown entity id {entity_id}")
        out: set[int] = set()
        for adjacency in self._fwd.values():
            out.update(adjacency.get(entity_id, ()))
        for adjacency in self._rev.values():
            out.update(adjacency.get(entity_id, ()))
        return sorted(out)

    def relation_edges(self, relation: str) -> tuple[list[int], list[int]]:
        """(heads, tails) arrays for one relation, edge order deterministic."""
        heads: list[int] = []
        tails: list[int] = []
        for head in sorted(self._fwd.get(relation, ())):
            for tail in self._fwd[relation][head]:
                heads.append(head)
                tails.append(tail)
        return heads, tails

    def link_mentions(self, text: str, threshold: float = 0.9) -> list[int]:
        """Entity ids whose name or alias fuzzily matches a span of ``text``.

        Longest span wins among overlapping matches, ties broken by lowest
        entity id; pure function of (graph, text).
        """
        return [m.entity_id for m in self._linker.match(text, threshold)]

    def link_mention_spans(self, text: str, threshold: float = 0.9) -> list[Mention]:
        return self._linker.match(text, threshold)


class _LexiconMatcher:
    """Deterministic fuzzy matcher over entity names and aliases."""

    def __init__(self, entities):
        # surface string -> lowest entity id claiming it exactly
        self._exact: dict[str, int] = {}
        # (entity id, normalized surface, token count) in a stable order
        self._forms: list[tuple[int, str, int]] = []
        self.max_span = 1
        for ent in sorted(entities, key=lambda e: e.id):
            for surface in (ent.name, *ent.aliases):
                norm = normalize_text(surface)
                if not norm:
                    continue
                ntok = norm.count(" ") + 1
                self.max_span = max(self.max_span, ntok)
                self._forms.append((ent.id, norm, ntok))
                self._exact.setdefault(norm, ent.id)

    def match(self, text: str, threshold: float) -> list[Mention]:
        tokens = tokenize(text)
        if not tokens:
            return []
        candidates: list[Mention] = []
        for start in range(len(tokens)):
            for length in range(1, min(self.max_span, len(tokens) - start) + 1):
                span = " ".join(tokens[start:start + length])
                hit = self._best_form(span, threshold)
                if hit is not None:
                    entity_id, sim = hit
                    candidates.append(Mention(entity_id, start, start + length, sim))
        # Longest span first; ties by start position then lowest id.
        candidates.sort(key=lambda m: (-(m.end - m.start), m.start, m.entity_id))
        chosen: list[Mention] = []
        taken = [False] * len(tokens)
        for cand in candidates:
            if any(taken[i] for i in range(cand.start, cand.end)):
                continue
            for i in range(cand.start, cand.end):
                taken[i] = True
            chosen.append(cand)
        chosen.sort(key=lambda m: m.start)
        out: list[Mention] = []
        seen_ids: set[int] = set()
        for m in chosen:
            if m.entity_id not in seen_ids:
                seen_ids.add(m.entity_id)
                out.append(m)
        return out

    def _best_form(self, span: str, threshold: float) -> tuple[int, float] | None:
        exact = self._exact.get(span)
        if exact is not None:
            return exact, 1.0
        best: tuple[float, int] | None = None
        span_len = len(span)
        for entity_id, form, _ in self._forms:
            total = span_len + len(form)
            # sim >= threshold requires distance <= (1 - threshold) * total
            budget = int((1.0 - threshold) * total)
            if abs(span_len - len(form)) > budget:
                continue
            dist = edit_distance(span, form, cutoff=budget)
            if dist > budget:
                continue
            sim = 1.0 - dist / total
            if sim >= threshold and (best is None or sim > best[0] + 1e-12 or
                                     (abs(sim - best[0]) <= 1e-12 and entity_id < best[1])):
                best = (sim, entity_id)
        if best is None:
            return None
        return best[1], best[0]


class Provenance(str, Enum):
    USER = "user"
    SYSTEM = "system"


@dataclass
class MentionSet:
    """Session-local record of which entities have surfaced so far."""

    graph: KnowledgeGraph
    _flags: set[int] = field(default_factory=set)
    _order: list[int] = field(default_factory=list)
    _provenance: dict[int, Provenance] = field(default_factory=dict)

    def mark(self, ids, provenance: Provenance | str) -> None:
        provenance = Provenance(provenance)
        for entity_id in ids:
            if entity_id not in self.graph.entities:
                raise LookupError_(f"cannot mark unknown entity id {entity_id}")
            if entity_id not in self._flags:
                self._flags.add(entity_id)
                self._order.append(entity_id)
                self._provenance[entity_id] = provenance

    def reset(self) -> None:
        self._flags.clear()
        self._order.clear()
        self._provenance.clear()

    def __contains__(self, entity_id: int) -> bool:
        return entity_id in self._flags

    def __len__(self) -> int:
        return len(self._order)

    @property
    def order(self) -> list[int]:
        return list(self._order)

    def provenance_of(self, entity_id: int) -> Provenance | None:
        return self._provenance.get(entity_id)

    def ids_sorted(self) -> list[int]:
        return sorted(self._flags)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

_VALID_KINDS = {k.value for k in EntityKind}


def load_graph(entity_file, edge_file) -> KnowledgeGraph:
    """Build a graph from the JSON-lines entity and edge files."""
    entities: list[Entity] = []
    with open(entity_file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{entity_file}:{lineno}: invalid JSON ({exc.msg})")
            try:
                kind = obj["kind"]
                if kind not in _VALID_KINDS:
                    raise LoadError(f"{entity_file}:{lineno}: unknown kind {kind!r}")
                entities.append(Entity(
                    id=int(obj["id"]),
                    name=str(obj["name"]),
                    kind=EntityKind(kind),
                    aliases=tuple(str(a) for a in obj.get("aliases", ())),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise LoadError(f"{entity_file}:{lineno}: bad entity record ({exc})")

    edges: list[Edge] = []
    with open(edge_file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(f"{edge_file}:{lineno}: invalid JSON ({exc.msg})")
            try:
                edges.append(Edge(
                    head=int(obj["head"]),
                    relation=str(obj["relation"]),
                    tail=int(obj["tail"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise LoadError(f"{edge_file}:{lineno}: bad edge record ({exc})")

    return KnowledgeGraph(entities, edges)
