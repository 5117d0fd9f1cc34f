"""Deterministic synthetic movie world and dialog corpus.

The world is small enough for desk-scale training (under 200 entities)
while keeping ranking nontrivial: every movie carries a unique
(genre, subject) pair, so a stated preference identifies exactly one
right answer. Same seed, same bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .acts import ActNode, DialogAct
from .config import DEFAULT_GREETING
from .kg import Edge, Entity, EntityKind, KnowledgeGraph
from .nlg import TemplateSet, realize
from .policy import Intent
from .training import Dialog, Turn, save_corpus

CLASS_NAMES = ["Genre", "Subject", "Director", "Actor", "Time"]

GENRES = ["Action", "Comedy", "Drama", "Horror", "Romance", "Thriller"]

SUBJECTS = [
    "space travel", "lost treasure", "high school", "time loops",
    "bank heists", "deep sea", "ancient magic", "road trips",
    "serial crime", "first love", "alien contact", "royal courts",
    "wild west", "cyber warfare", "ghost towns", "secret agents",
    "arctic survival", "street racing", "dream worlds", "parallel lives",
]

DIRECTORS = [
    "Mara Ellison", "Theo Grant", "Ingrid Vale", "Samuel Okafor",
    "Lena Brandt", "Carlos Mena", "Yuki Tanaka", "Omar Haddad",
    "Petra Novak", "Dev Arora",
]

ACTORS = [
    "June Calloway", "Rex Donovan", "Aria Flores", "Bennett Cho",
    "Silas Marsh", "Opal Whitfield", "Nico Alvarez", "Tess Harrow",
    "Jasper Lowell", "Freya Nilsen", "Cole Abram", "Vera Lindqvist",
]

TIMES = ["1970s", "1980s", "1990s", "2000s", "2010s"]

TITLE_ADJECTIVES = ["Silent", "Crimson", "Broken", "Golden", "Hidden",
                    "Final", "Iron", "Velvet", "Burning", "Frozen"]
TITLE_NOUNS = ["Harbor", "Garden", "Mirror", "Empire", "Letter", "Bridge",
               "Signal", "Canyon", "Orchard", "Tower", "Compass", "Lantern"]

USER_GREETINGS = [
    "Hi there, good evening to you!",
    "Hello! I want to find a movie.",
    "Hey, hope you are doing well!",
    "Good evening! I need a film for tonight.",
    "Hi! Can you help me pick a movie?",
]

USER_PREFERENCES = [
    "I love {genre} movies about {subject}.",
    "I am into {genre} films about {subject}.",
    "Give me something {genre} about {subject}, please.",
    "I enjoy {genre} movies, especially about {subject}.",
]

USER_REACTIONS = [
    "That sounds great, thank you!",
    "Perfect, I will watch it tonight!",
    "Nice, thanks for the tip!",
    "Awesome, that is exactly what I wanted.",
]

USER_FOLLOWUPS = [
    "Great pick! Could you also find a {genre} film about {subject}?",
    "Nice one. Now how about something {genre} about {subject}?",
    "Added to my list. Next I want a {genre} movie about {subject}.",
    "Good call! I could also use a {genre} one about {subject}.",
]

CLOSING = "No problem. Have a great day!"


@dataclass
class World:
    entities: list[Entity]
    edges: list[Edge]
    graph: KnowledgeGraph
    class_ids: dict[str, int]
    genre_ids: list[int]
    subject_ids: list[int]
    director_ids: list[int]
    actor_ids: list[int]
    time_ids: list[int]
    movie_ids: list[int]
    movie_attrs: dict[int, dict[str, int]]   # movie id -> relation -> attr id


def build_world(seed: int = 0) -> World:
    """All entities and edges; director/actor/time assignment is seeded."""
    rng = np.random.default_rng(seed)
    entities: list[Entity] = []
    next_id = 0

    def add(name: str, kind: EntityKind, aliases: tuple[str, ...] = ()) -> int:
        nonlocal next_id
        entities.append(Entity(id=next_id, name=name, kind=kind,
                               aliases=aliases))
        next_id += 1
        return next_id - 1

    class_ids = {name: add(name, EntityKind.CLASS) for name in CLASS_NAMES}
    genre_ids = [add(name, EntityKind.ATTRIBUTE) for name in GENRES]
    subject_ids = [add(name, EntityKind.ATTRIBUTE) for name in SUBJECTS]
    director_ids = [add(name, EntityKind.ATTRIBUTE) for name in DIRECTORS]
    actor_ids = [add(name, EntityKind.ATTRIBUTE) for name in ACTORS]
    time_ids = [add(name, EntityKind.ATTRIBUTE) for name in TIMES]

    movie_ids: list[int] = []
    titles: list[str] = []
    for adjective in TITLE_ADJECTIVES:
        for noun in TITLE_NOUNS:
            titles.append(f"The {adjective} {noun}")
    for title in titles:
        movie_ids.append(add(title, EntityKind.CANDIDATE,
                             aliases=(title.removeprefix("The "),)))

    edges: list[Edge] = []
    for attr_ids, class_name in ((genre_ids, "Genre"),
                                 (subject_ids, "Subject"),
                                 (director_ids, "Director"),
                                 (actor_ids, "Actor"),
                                 (time_ids, "Time")):
        for attr in attr_ids:
            edges.append(Edge(head=attr, relation="instance_of",
                              tail=class_ids[class_name]))

    movie_attrs: dict[int, dict[str, int]] = {}
    for i, movie in enumerate(movie_ids):
        attrs = {
            "has_genre": genre_ids[i // len(SUBJECTS)],
            "has_subject": subject_ids[i % len(SUBJECTS)],
            "directed_by": director_ids[int(rng.integers(len(director_ids)))],
            "stars": actor_ids[int(rng.integers(len(actor_ids)))],
            "released_in": time_ids[int(rng.integers(len(time_ids)))],
        }
        movie_attrs[movie] = attrs
        for relation, attr in attrs.items():
            edges.append(Edge(head=movie, relation=relation, tail=attr))

    graph = KnowledgeGraph(entities, edges)
    return World(entities=entities, edges=edges, graph=graph,
                 class_ids=class_ids, genre_ids=genre_ids,
                 subject_ids=subject_ids, director_ids=director_ids,
                 actor_ids=actor_ids, time_ids=time_ids,
                 movie_ids=movie_ids, movie_attrs=movie_attrs)


def build_corpus(world: World, num_dialogs: int = 50,
                 seed: int = 0) -> list[Dialog]:
    """Scripted dialogs: greet, ask preference, three recommendation rounds.

    Each recommended movie is the unique one matching the stated genre and
    subject; its reasoning tree and utterances become gold annotations.
    """
    rng = np.random.default_rng(seed)
    templates = TemplateSet()
    graph = world.graph
    genre_class = world.class_ids["Genre"]
    # Long-tailed popularity: dialogs concentrate on a seeded subset of
    # titles so every recommended movie recurs across several dialogs.
    popular = rng.choice(len(world.movie_ids), size=40, replace=False)
    dialogs: list[Dialog] = []
    for d in range(num_dialogs):
        picks = rng.choice(popular, size=3, replace=False)
        movies = [world.movie_ids[int(i)] for i in picks]
        greeting = USER_GREETINGS[int(rng.integers(len(USER_GREETINGS)))]
        reaction = USER_REACTIONS[int(rng.integers(len(USER_REACTIONS)))]

        def ask_text(pool: list[str], movie: int) -> str:
            genre = world.movie_attrs[movie]["has_genre"]
            subject = world.movie_attrs[movie]["has_subject"]
            return pool[int(rng.integers(len(pool)))].format(
                genre=graph.entities[genre].name.lower(),
                subject=graph.entities[subject].name)

        def recommend_turn(movie: int, turn_seed: int) -> Turn:
            genre = world.movie_attrs[movie]["has_genre"]
            subject = world.movie_attrs[movie]["has_subject"]
            act = DialogAct(intent=Intent.RECOMMEND.label, roots=[
                ActNode(label=graph.entities[movie].name, entity_id=movie,
                        children=[
                            ActNode(label=graph.entities[genre].name,
                                    entity_id=genre),
                            ActNode(label=graph.entities[subject].name,
                                    entity_id=subject),
                        ])])
            return Turn(role="system",
                        text=realize(act, templates, seed=turn_seed),
                        entities=[movie, genre, subject],
                        intent=Intent.RECOMMEND,
                        tree=[(movie, [genre, subject])])

        query_act = DialogAct(intent=Intent.QUERY.label, roots=[
            ActNode(label=graph.entities[genre_class].name,
                    entity_id=genre_class)])

        first_ask = ask_text(USER_PREFERENCES, movies[0])
        second_ask = ask_text(USER_FOLLOWUPS, movies[1])
        third_ask = ask_text(USER_FOLLOWUPS, movies[2])
        turns = [
            Turn(role="system", text=DEFAULT_GREETING, entities=[],
                 intent=Intent.CHAT, tree=[]),
            Turn(role="user", text=greeting,
                 entities=graph.link_mentions(greeting)),
            Turn(role="system", text=realize(query_act, templates, seed=d),
                 entities=[genre_class], intent=Intent.QUERY,
                 tree=[(genre_class, [])]),
            Turn(role="user", text=first_ask,
                 entities=graph.link_mentions(first_ask)),
            recommend_turn(movies[0], 3 * d),
            Turn(role="user", text=second_ask,
                 entities=graph.link_mentions(second_ask)),
            recommend_turn(movies[1], 3 * d + 1),
            Turn(role="user", text=third_ask,
                 entities=graph.link_mentions(third_ask)),
            recommend_turn(movies[2], 3 * d + 2),
            Turn(role="user", text=reaction,
                 entities=graph.link_mentions(reaction)),
            Turn(role="system", text=CLOSING, entities=[],
                 intent=Intent.CHAT, tree=[]),
        ]
        dialogs.append(Dialog(id=f"dlg-{d:03d}", turns=turns))
    return dialogs


def write_dataset(outdir, seed: int = 0,
                  num_dialogs: int = 50) -> dict[str, str]:
    """Emit entities.jsonl, edges.jsonl, and corpus.jsonl under ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    world = build_world(seed)
    dialogs = build_corpus(world, num_dialogs=num_dialogs, seed=seed)

    entities_path = out / "entities.jsonl"
    with open(entities_path, "w", encoding="utf-8") as fh:
        for ent in world.entities:
            fh.write(json.dumps(
                {"id": ent.id, "name": ent.name, "kind": ent.kind.value,
                 "aliases": list(ent.aliases)},
                sort_keys=True, separators=(",", ":")) + "\n")

    edges_path = out / "edges.jsonl"
    with open(edges_path, "w", encoding="utf-8") as fh:
        for edge in world.edges:
            fh.write(json.dumps(
                {"head": edge.head, "relation": edge.relation,
                 "tail": edge.tail},
                sort_keys=True, separators=(",", ":")) + "\n")

    corpus_path = out / "corpus.jsonl"
    save_corpus(corpus_path, dialogs)
    return {"entities": str(entities_path), "edges": str(edges_path),
            "corpus": str(corpus_path)}
