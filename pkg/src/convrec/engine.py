"""The serving engine: sessions, the per-turn pipeline, and transcripts.

Graph, parameters, and templates are shared read-only across sessions;
each session owns its dialog state, mention set, and log, serialized by a
per-session lock. The per-turn pipeline mirrors the training replay:
link mentions, mark them as user, advance the dialog state, classify the
intent, expand the tree, mark its entities as system, serialize, realize.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field

from . import numerics as nm
from .acts import serialize, tree_to_act
from .config import EngineConfig
from .kg import KnowledgeGraph, MentionSet, Provenance, load_graph
from .model import Model, compose_round
from .nlg import GeneratorError, TemplateSet, realize
from .numerics import Tensor
from .policy import classify_intent, expand_tree, rank_recommendations


class UnknownSessionError(KeyError):
    pass


class MessageTooLargeError(ValueError):
    pass


@dataclass
class Session:
    id: str
    state: tuple[Tensor, Tensor]
    mentions: MentionSet
    last_system_text: str
    log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_active: float = field(default_factory=time.monotonic)
    turn_index: int = 0


class Engine:
    def __init__(self, config: EngineConfig,
                 graph: KnowledgeGraph | None = None,
                 model: Model | None = None,
                 templates: TemplateSet | None = None,
                 generator=None):
        self.config = config
        self.graph = graph if graph is not None else load_graph(
            config.entities_path, config.edges_path)
        if model is not None:
            self.model = model
        elif config.checkpoint_path:
            self.model = Model.load(config.checkpoint_path, self.graph)
        else:
            # demo mode: untrained but seeded parameters
            self.model = Model.build(self.graph, config.model)
        # a checkpoint carries its own dimensions and thresholds
        self.config.model = self.model.config
        if templates is not None:
            self.templates = templates
        elif config.templates_path:
            self.templates = TemplateSet.from_file(config.templates_path)
        else:
            self.templates = TemplateSet()
        self.generator = generator
        # parameters are frozen while serving; cache the embedding table
        self._h_all = nm.as_tensor(self.model.embeddings().data.copy())
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- session management --------------------------------------------------

    def create_session(self) -> Session:
        session = Session(
            id=uuid.uuid4().hex,
            state=self.model.new_state(),
            mentions=MentionSet(self.graph),
            last_system_text=self.config.greeting,
        )
        greeting_ids = self.graph.link_mentions(
            self.config.greeting, self.config.model.link_threshold)
        session.mentions.mark(greeting_ids, Provenance.SYSTEM)
        session.log.append({
            "role": "system", "text": self.config.greeting,
            "act": None, "intent": None, "tree": None,
            "recommendations": None,
        })
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSessionError(session_id)

    def sweep_idle(self) -> list[str]:
        """Drop sessions idle beyond the configured timeout."""
        now = time.monotonic()
        dropped: list[str] = []
        with self._lock:
            for sid in list(self._sessions):
                session = self._sessions[sid]
                if now - session.last_active > self.config.session_timeout:
                    self._dump_transcript(session)
                    del self._sessions[sid]
                    dropped.append(sid)
        return dropped

    def close(self) -> None:
        with self._lock:
            for session in self._sessions.values():
                self._dump_transcript(session)
            self._sessions.clear()

    def _dump_transcript(self, session: Session) -> None:
        if not self.config.transcript_path:
            return
        with open(self.config.transcript_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"session": session.id, "turns": session.log},
                                sort_keys=True) + "\n")

    # -- the pipeline ----------------------------------------------------------

    def respond(self, session_id: str, text: str) -> dict:
        if len(text.encode("utf-8")) > self.config.max_message_bytes:
            raise MessageTooLargeError(
                f"message exceeds {self.config.max_message_bytes} bytes")
        session = self.get_session(session_id)
        with session.lock:
            started = time.perf_counter()
            session.last_active = time.monotonic()
            user_ids = self.graph.link_mentions(
                text, self.config.model.link_threshold)
            session.mentions.mark(user_ids, Provenance.USER)
            state = self.model.step_state(
                session.state, compose_round(session.last_system_text, text))
            session.state = tuple(s.detach() for s in state)
            u = session.state[0]

            intent, probs = classify_intent(u, self.model.intent)
            p = self.model.portrait_of(session.mentions, self._h_all)
            known_before = set(session.mentions.order)
            tree = expand_tree(self.graph, self._h_all, intent, u, p,
                               session.mentions, self.model.walker,
                               self.config.model)
            session.mentions.mark(tree.entity_ids(), Provenance.SYSTEM)

            act = tree_to_act(tree, self.graph)
            act_string = serialize(act)
            seed = self.config.seed * 100003 + session.turn_index * 31
            utterance = None
            if self.generator is not None:
                context = [entry["text"] for entry in session.log[-6:]]
                try:
                    utterance = self.generator(act_string, context)
                except GeneratorError:
                    utterance = None
            if utterance is None:
                utterance = realize(act, self.templates, seed=seed)

            ranked = rank_recommendations(self.graph, self._h_all, u, p,
                                          self.model.walker)
            recommendations = [
                {"id": eid, "name": self.graph.entities[eid].name,
                 "score": score}
                for eid, score in ranked[:self.config.top_k]
            ]
            trace = tree.trace()
            trace["elapsed"] = time.perf_counter() - started
            for node in trace["nodes"]:
                node["name"] = self.graph.entities[node["entity"]].name
                node["mentioned_before"] = node["entity"] in known_before

            session.log.append({"role": "user", "text": text,
                                "entities": user_ids})
            result = {
                "utterance": utterance,
                "act": act_string,
                "intent": intent.label,
                "intent_probs": [float(x) for x in probs.data],
                "tree": trace,
                "recommendations": recommendations,
            }
            session.log.append({"role": "system", "text": utterance,
                                "act": act_string, "intent": intent.label,
                                "tree": trace,
                                "recommendations": recommendations})
            session.last_system_text = utterance
            session.turn_index += 1
            return result

    # -- lookups ----------------------------------------------------------------

    def session_log(self, session_id: str) -> list[dict]:
        session = self.get_session(session_id)
        with session.lock:
            return list(session.log)

    def entity_info(self, entity_id: int) -> dict:
        ent = self.graph.entity(entity_id)
        neighbors = [
            {"id": n, "name": self.graph.entities[n].name,
             "kind": self.graph.entities[n].kind.value}
            for n in self.graph.neighbors_all(entity_id)
        ]
        return {"id": ent.id, "name": ent.name, "kind": ent.kind.value,
                "aliases": list(ent.aliases), "neighbors": neighbors}
