"""Turn dialog acts into system utterances.

The default realizer is template-based: templates are keyed by intent and
the act's arity pattern (per-root child counts), sampled uniformly under a
seed, with a deterministic composer covering any pattern that has no
explicit template. A trainable generator can replace all of this through
the line-protocol plug-in seam; for such plug-ins nucleus filtering (top-p)
is their own concern, templates never sample tokens.
"""
from __future__ import annotations

import json
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from .acts import DialogAct
from .kg import EntityKind, KnowledgeGraph

DEFAULT_PARAPHRASES = {
    "Genre": "kind of films",
    "1980s": "old",
    "Horror": "scary",
}


class RealizationError(ValueError):
    """No template matches the act's pattern and composition is disabled."""


class GeneratorError(RuntimeError):
    """Plug-in generator failed or timed out; callers fall back to templates."""


def act_pattern(act: DialogAct) -> tuple[int, ...]:
    """Per-root child arity, e.g. one root with two children -> (2,)."""
    return tuple(len(root.children) for root in act.roots)


_BUILTIN: dict[tuple[str, tuple[int, ...]], list[str]] = {
    ("Query", ()): ["What are you in the mood for today?"],
    ("Query", (0,)): ["What {0} do you like?"],
    ("Query", (0, 0)): ["What {0} do you like? And any preferred {1}?"],
    ("Query", (1,)): ["What {0} do you like, maybe something {1}?"],
    ("Recommend", ()): ["Tell me a bit more about what you enjoy first."],
    ("Recommend", (0,)): ["I recommend {0}.", "You should watch {0}!"],
    ("Recommend", (0, 0)): ["You might like {0} or {1}."],
    ("Recommend", (1,)): ["Since you like {1}, I recommend {0}."],
    ("Recommend", (2,)): [
        "{0} is a great {1} movie about {2}.",
    ],
    ("Recommend", (1, 1)): [
        "If you like {1} movies, you should really consider watching {0} or {2}.",
    ],
    ("Recommend", (2, 2)): [
        "Both {0} ({1}, {2}) and {3} ({4}, {5}) fit what you like.",
    ],
    ("Chat", ()): ["No problem. Have a great day!"],
    ("Chat", (0,)): ["Oh, I love {0} too!"],
    ("Chat", (0, 0)): ["{0} and {1} both come to mind."],
    ("Chat", (1,)): ["You will love {1} if you like {0} movies!"],
}


def _join(parts: list[str]) -> str:
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


@dataclass
class TemplateSet:
    """Utterance templates plus the paraphrase table for class-level words.

    ``{i}`` placeholders index the act's nodes in pre-order. With
    ``compose`` enabled every pattern has at least one template (the
    composed one); disabled, unmatched patterns raise RealizationError.
    """

    templates: dict[tuple[str, tuple[int, ...]], list[str]] = field(
        default_factory=lambda: {k: list(v) for k, v in _BUILTIN.items()})
    paraphrases: dict[str, str] = field(
        default_factory=lambda: dict(DEFAULT_PARAPHRASES))
    compose: bool = True

    def surface(self, label: str) -> str:
        return self.paraphrases.get(label, label)

    def options(self, act: DialogAct) -> list[str]:
        pattern = act_pattern(act)
        explicit = self.templates.get((act.intent, pattern))
        if explicit:
            return explicit
        if not self.compose:
            raise RealizationError(
                f"no template for intent {act.intent!r} with pattern {pattern}")
        return [self._composed(act)]

    def _composed(self, act: DialogAct) -> str:
        # slot numbers must match the pre-order walk realize() fills from
        slot_of = {id(node): i for i, node in enumerate(act.walk())}
        root_phrases: list[str] = []
        for root in act.roots:
            phrase = "{%d}" % slot_of[id(root)]
            qualifiers = ["{%d}" % slot_of[id(node)]
                          for node in root.walk() if node is not root]
            if qualifiers:
                phrase += ", going by " + _join(qualifiers)
            root_phrases.append(phrase)
        if not root_phrases:
            return {
                "Recommend": "Tell me a bit more about what you enjoy first.",
                "Query": "What are you in the mood for today?",
            }.get(act.intent, "No problem. Have a great day!")
        body = _join(root_phrases)
        if act.intent == "Recommend":
            return f"How about {body}?"
        if act.intent == "Query":
            return f"Could you tell me more about {body}?"
        return f"Speaking of {body}, good pick!"

    @staticmethod
    def from_file(path) -> "TemplateSet":
        """Load a template table from JSON.

        Format: {"compose": bool, "paraphrases": {label: phrase},
        "templates": [{"intent": str, "pattern": [int...], "texts": [str...]}]}.
        Entries extend and override the built-ins per (intent, pattern) key.
        """
        with open(path, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        ts = TemplateSet()
        ts.compose = bool(spec.get("compose", True))
        ts.paraphrases.update(spec.get("paraphrases", {}))
        for entry in spec.get("templates", ()):
            key = (str(entry["intent"]), tuple(int(a) for a in entry["pattern"]))
            ts.templates[key] = [str(t) for t in entry["texts"]]
        return ts


def realize(act: DialogAct, templates: TemplateSet, seed: int = 0) -> str:
    """Deterministic-under-seed template realization.

    Uniformly samples among the matching templates and fills pre-order node
    slots with paraphrased surface forms, so every depth-1 entity appears.
    """
    options = templates.options(act)
    rng = np.random.default_rng(seed)
    text = options[int(rng.integers(len(options)))]
    surfaces = [templates.surface(node.label) for node in act.walk()]
    return text.format(*surfaces)


def knowledge_annotations(act: DialogAct, graph: KnowledgeGraph) -> set[int]:
    """Class-level knowledge referenced by the act.

    Class entities annotate as themselves; attributes as their class-kind
    neighbors; candidate entities carry no class-level annotation. Requires
    a grounded act.
    """
    out: set[int] = set()
    for node in act.walk():
        if node.entity_id is None:
            raise KeyError(f"act node {node.label!r} is not grounded")
        ent = graph.entity(node.entity_id)
        if ent.kind is EntityKind.CLASS:
            out.add(ent.id)
        elif ent.kind is EntityKind.ATTRIBUTE:
            for neighbor in graph.neighbors_all(ent.id):
                if graph.entities[neighbor].kind is EntityKind.CLASS:
                    out.add(neighbor)
    return out


class LineProtocolGenerator:
    """Seam for an external utterance generator over stdio JSON lines.

    Request: {"act": serialized act string, "context": [recent turns]}.
    Response: {"utterance": str}. Any failure or timeout raises
    GeneratorError; the engine then falls back to templates.
    """

    def __init__(self, command: list[str], timeout: float = 2.0):
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)

    def __call__(self, act_string: str, context_turns: list[str]) -> str:
        request = json.dumps({"act": act_string, "context": context_turns})
        with self._lock:
            if self._proc.poll() is not None:
                raise GeneratorError("generator process exited")
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise GeneratorError(f"generator write failed: {exc}")
            box: list[str] = []

            def reader():
                box.append(self._proc.stdout.readline())

            thread = threading.Thread(target=reader, daemon=True)
            thread.start()
            thread.join(self.timeout)
            if thread.is_alive() or not box or not box[0]:
                raise GeneratorError("generator timed out")
        try:
            reply = json.loads(box[0])
            return str(reply["utterance"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise GeneratorError(f"bad generator reply: {exc}")

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
