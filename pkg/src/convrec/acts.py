"""Bracketed dialog-act strings and the tree structures behind them.

An act is an intent plus an ordered forest of labeled nodes, written as

    [ Intent ( label ( child ) ( child ) ) ( label ) ]

Labels may contain any character; ``( ) [ ] \\`` are escaped with a
backslash. The emitter produces a canonical single-space form; the parser
accepts arbitrary whitespace between tokens.
"""
from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_INTENTS = ("Recommend", "Query", "Chat")

_ESCAPABLE = {"(", ")", "[", "]", "\\"}


class ActSyntaxError(ValueError):
    """Raised when a dialog-act string violates the grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


@dataclass
class ActNode:
    """One labeled node; labels are non-empty with no boundary whitespace.

    ``entity_id`` grounds the label to a graph entity; parsing from a string
    leaves it ``None`` until re-linked against a graph.
    """

    label: str
    children: list["ActNode"] = field(default_factory=list)
    entity_id: int | None = None

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class DialogAct:
    intent: str
    roots: list[ActNode] = field(default_factory=list)

    def walk(self):
        for root in self.roots:
            yield from root.walk()

    @property
    def size(self) -> int:
        return sum(1 for _ in self.walk())

    def labels(self) -> list[str]:
        return [node.label for node in self.walk()]


def escape_label(label: str) -> str:
    out = []
    for ch in label:
        if ch in _ESCAPABLE:
            out.append("\\")
        out.append(ch)
    return "".join(out)


def serialize(act: DialogAct) -> str:
    """Canonical single-space bracketed form of the act."""
    parts = ["[", escape_label(act.intent)]
    for root in act.roots:
        _emit(root, parts)
    parts.append("]")
    return " ".join(parts)


def _emit(node: ActNode, parts: list[str]) -> None:
    parts.append("(")
    parts.append(escape_label(node.label))
    for child in node.children:
        _emit(child, parts)
    parts.append(")")


def parse(text: str, intents: tuple[str, ...] | None = DEFAULT_INTENTS) -> DialogAct:
    """Parse a bracketed act string.

    ``intents`` restricts the accepted intent names; pass ``None`` to accept
    any label in intent position.
    """
    cursor = _Cursor(_lex(text), len(text))
    cursor.expect("LBRACK")
    _, intent, offset = cursor.expect("LABEL")
    if intents is not None and intent not in intents:
        raise ActSyntaxError(f"unknown intent {intent!r}", offset)
    roots: list[ActNode] = []
    while cursor.peek() == "LPAREN":
        roots.append(_read_node(cursor))
    cursor.expect("RBRACK")
    if cursor.peek() is not None:
        tok = cursor.tokens[cursor.pos]
        raise ActSyntaxError(f"trailing content {tok[1]!r}", tok[2])
    return DialogAct(intent=intent, roots=roots)


class _Cursor:
    def __init__(self, tokens, end: int):
        self.tokens = tokens
        self.pos = 0
        self.end = end

    def peek(self) -> str | None:
        if self.pos >= len(self.tokens):
            return None
        return self.tokens[self.pos][0]

    def expect(self, kind: str):
        if self.pos >= len(self.tokens):
            raise ActSyntaxError(f"expected {kind}, found end of input", self.end)
        tok = self.tokens[self.pos]
        if tok[0] != kind:
            raise ActSyntaxError(f"expected {kind}, found {tok[1]!r}", tok[2])
        self.pos += 1
        return tok


def _read_node(cursor: _Cursor) -> ActNode:
    cursor.expect("LPAREN")
    _, label, _ = cursor.expect("LABEL")
    node = ActNode(label=label)
    while cursor.peek() == "LPAREN":
        node.children.append(_read_node(cursor))
    cursor.expect("RPAREN")
    return node


def _lex(text: str):
    """Tokenize into (kind, value, offset) triples.

    Kinds: LBRACK, RBRACK, LPAREN, RPAREN, LABEL. Labels absorb escaped
    bracket characters and collapse internal whitespace runs to one space.
    """
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "[":
            tokens.append(("LBRACK", "[", i))
            i += 1
        elif ch == "]":
            tokens.append(("RBRACK", "]", i))
            i += 1
        elif ch == "(":
            tokens.append(("LPAREN", "(", i))
            i += 1
        elif ch == ")":
            tokens.append(("RPAREN", ")", i))
            i += 1
        else:
            start = i
            buf: list[str] = []
            while i < n:
                ch = text[i]
                if ch == "\\":
                    if i + 1 >= n:
                        raise ActSyntaxError("dangling escape", i)
                    nxt = text[i + 1]
                    if nxt not in _ESCAPABLE:
                        raise ActSyntaxError(f"invalid escape \\{nxt}", i)
                    buf.append(nxt)
                    i += 2
                elif ch in "()[]":
                    break
                else:
                    buf.append(ch)
                    i += 1
            # boundary whitespace is layout; internal spaces are content
            label = "".join(buf).strip()
            if not label:
                raise ActSyntaxError("empty label", start)
            tokens.append(("LABEL", label, start))
    return tokens


# ---------------------------------------------------------------------------
# grounding
# ---------------------------------------------------------------------------

def tree_to_act(tree, graph) -> DialogAct:
    """Convert a reasoning tree to a grounded act.

    ``tree`` exposes ``intent_name`` and ``roots``; each tree node exposes
    ``entity_id`` and ``children`` in already-decided order. Entity ids are
    replaced by canonical names, kept on the node for grounding.
    """
    def convert(node) -> ActNode:
        entity = graph.entity(node.entity_id)
        return ActNode(
            label=entity.name,
            children=[convert(child) for child in node.children],
            entity_id=entity.id,
        )

    return DialogAct(intent=tree.intent_name,
                     roots=[convert(root) for root in tree.roots])


def ground(act: DialogAct, graph) -> DialogAct:
    """Re-link labels to entity ids by exact name lookup (in place).

    Raises ``KeyError`` naming the label when no entity carries that exact
    name; ambiguity resolves to the lowest id.
    """
    by_name: dict[str, int] = {}
    for eid in graph.ids_in_order:
        name = graph.entities[eid].name
        if name not in by_name:
            by_name[name] = eid
    for node in act.walk():
        if node.label not in by_name:
            raise KeyError(f"no entity named {node.label!r}")
        node.entity_id = by_name[node.label]
    return act
