"""Operator command line: data prep, training, evaluation, and serving.

Every option can also be set through the environment with the CONVREC
prefix, e.g. CONVREC_TRAIN_EPOCHS=5 convrec train ...
"""
from __future__ import annotations

import json
from collections import Counter

import click

from .config import (ENV_PREFIX, LAMBDA_PRESETS, EngineConfig, ModelConfig,
                     TrainConfig)
from .engine import Engine
from .kg import EntityKind, GraphError, load_graph
from .model import Model
from .numerics import ValidationError
from .training import (CorpusError, TrainingError, evaluate, load_corpus,
                       split_dialogs, train)


@click.group(context_settings={"auto_envvar_prefix": ENV_PREFIX})
def main() -> None:
    """Conversational recommender over a typed knowledge graph."""


def _load_graph_or_fail(entities: str, edges: str):
    try:
        return load_graph(entities, edges)
    except (GraphError, OSError) as exc:
        raise click.ClickException(f"graph: {exc}")


def _load_corpus_or_fail(path: str, graph):
    try:
        return load_corpus(path, graph)
    except (CorpusError, OSError) as exc:
        raise click.ClickException(f"corpus: {exc}")


@main.command()
@click.option("--entities", required=True, type=click.Path(exists=True))
@click.option("--edges", required=True, type=click.Path(exists=True))
@click.option("--corpus", type=click.Path(exists=True))
@click.option("--out", type=click.Path(),
              help="Write the corpus back out with derived annotations.")
def ingest(entities: str, edges: str, corpus: str | None,
           out: str | None) -> None:
    """Validate graph and corpus files; derive missing gold annotations."""
    graph = _load_graph_or_fail(entities, edges)
    kinds = Counter(e.kind.value for e in graph.entities.values())
    click.echo(f"entities: {graph.num_entities} "
               f"({', '.join(f'{k}={v}' for k, v in sorted(kinds.items()))})")
    click.echo(f"edges: {graph.num_edges} over "
               f"{len(graph.relations)} relations")
    if corpus:
        dialogs = _load_corpus_or_fail(corpus, graph)
        turns = sum(len(d.turns) for d in dialogs)
        intents = Counter(t.intent.label for d in dialogs
                          for t in d.system_turns())
        click.echo(f"dialogs: {len(dialogs)}, turns: {turns}, "
                   f"system intents: {dict(sorted(intents.items()))}")
        if out:
            from .training import save_corpus
            save_corpus(out, dialogs)
            click.echo(f"wrote annotated corpus to {out}")


@main.command()
@click.option("--outdir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--dialogs", default=50, show_default=True)
def synth(outdir: str, seed: int, dialogs: int) -> None:
    """Generate the deterministic synthetic fixture world and corpus."""
    from .synth import write_dataset
    paths = write_dataset(outdir, seed=seed, num_dialogs=dialogs)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


@main.command(name="train")
@click.option("--entities", required=True, type=click.Path(exists=True))
@click.option("--edges", required=True, type=click.Path(exists=True))
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(),
              help="Output parameter file.")
@click.option("--log-file", type=click.Path(),
              help="Output JSON training log.")
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--batch-size", default=36, show_default=True)
@click.option("--epochs", default=30, show_default=True)
@click.option("--weight-decay", default=1e-2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dims", default=128, show_default=True,
              help="Embedding width for every component.")
@click.option("--dataset", type=click.Choice(sorted(LAMBDA_PRESETS)),
              help="Apply this dataset's loss-weight preset.")
@click.option("--lambda1", type=float, default=None)
@click.option("--lambda2", type=float, default=None)
@click.option("--negative-samples", default=50, show_default=True)
@click.option("--val-fraction", default=0.1, show_default=True)
def train_cmd(entities: str, edges: str, corpus: str, checkpoint: str,
              log_file: str | None, lr: float, batch_size: int, epochs: int,
              weight_decay: float, seed: int, dims: int, dataset: str | None,
              lambda1: float | None, lambda2: float | None,
              negative_samples: int, val_fraction: float) -> None:
    """Train a model on a dialog corpus and write a checkpoint."""
    graph = _load_graph_or_fail(entities, edges)
    dialogs = _load_corpus_or_fail(corpus, graph)
    config = TrainConfig(learning_rate=lr, batch_size=batch_size,
                         epochs=epochs, weight_decay=weight_decay, seed=seed,
                         negative_samples=negative_samples,
                         val_fraction=val_fraction,
                         model=ModelConfig(seed=seed).scaled(dims))
    if dataset:
        config = config.with_lambda_preset(dataset)
    if lambda1 is not None:
        config.lambda1 = lambda1
    if lambda2 is not None:
        config.lambda2 = lambda2
    try:
        result = train(dialogs, graph, config, log=click.echo)
    except TrainingError as exc:
        raise click.ClickException(str(exc))
    result.model.save(checkpoint)
    click.echo(f"checkpoint: {checkpoint}")
    if result.validation is not None:
        click.echo(result.validation.to_table())
    if log_file:
        payload = {
            "config": config.to_dict(),
            "history": result.history,
            "train_ids": result.train_ids,
            "val_ids": result.val_ids,
            "validation": (result.validation.to_dict()
                           if result.validation else None),
        }
        with open(log_file, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        click.echo(f"log: {log_file}")


@main.command(name="eval")
@click.option("--entities", required=True, type=click.Path(exists=True))
@click.option("--edges", required=True, type=click.Path(exists=True))
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["all", "train", "val"]),
              default="all", show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Split seed (match the training seed).")
@click.option("--val-fraction", default=0.1, show_default=True)
@click.option("--json-out", type=click.Path())
def eval_cmd(entities: str, edges: str, corpus: str, checkpoint: str,
             split: str, seed: int, val_fraction: float,
             json_out: str | None) -> None:
    """Score a checkpoint on a corpus split."""
    graph = _load_graph_or_fail(entities, edges)
    dialogs = _load_corpus_or_fail(corpus, graph)
    try:
        model = Model.load(checkpoint, graph)
    except (ValidationError, OSError) as exc:
        raise click.ClickException(f"checkpoint: {exc}")
    if split != "all":
        train_set, val_set = split_dialogs(dialogs, val_fraction, seed)
        dialogs = train_set if split == "train" else val_set
    report = evaluate(model, dialogs)
    click.echo(report.to_table())
    if json_out:
        with open(json_out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        click.echo(f"report: {json_out}")


def _engine_config(entities: str, edges: str, checkpoint: str | None,
                   templates: str | None, **kw) -> EngineConfig:
    return EngineConfig(entities_path=entities, edges_path=edges,
                        checkpoint_path=checkpoint, templates_path=templates,
                        **kw)


@main.command()
@click.option("--entities", required=True, type=click.Path(exists=True))
@click.option("--edges", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", type=click.Path(exists=True))
@click.option("--templates", type=click.Path(exists=True))
@click.option("--trace", is_flag=True,
              help="Print the dialog act and intent beside each reply.")
def chat(entities: str, edges: str, checkpoint: str | None,
         templates: str | None, trace: bool) -> None:
    """Interactive terminal session against a checkpoint."""
    config = _engine_config(entities, edges, checkpoint, templates)
    try:
        engine = Engine(config)
    except (GraphError, ValidationError, OSError) as exc:
        raise click.ClickException(str(exc))
    session = engine.create_session()
    click.echo(f"bot> {config.greeting}")
    while True:
        try:
            text = click.prompt("you", prompt_suffix="> ")
        except (click.Abort, EOFError):
            click.echo("bye")
            break
        if text.strip().lower() in ("quit", "exit"):
            break
        result = engine.respond(session.id, text)
        if trace:
            click.echo(f"     act: {result['act']}   intent: {result['intent']}")
        click.echo(f"bot> {result['utterance']}")


@main.command()
@click.option("--entities", required=True, type=click.Path(exists=True))
@click.option("--edges", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", type=click.Path(exists=True))
@click.option("--templates", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8040, show_default=True)
@click.option("--static-dir", type=click.Path(exists=True),
              help="Built web client to serve at /.")
@click.option("--transcript", type=click.Path(),
              help="Append finished session transcripts to this JSONL file.")
def serve(entities: str, edges: str, checkpoint: str | None,
          templates: str | None, host: str, port: int,
          static_dir: str | None, transcript: str | None) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .server import make_app
    config = _engine_config(entities, edges, checkpoint, templates,
                            host=host, port=port, static_dir=static_dir,
                            transcript_path=transcript)
    try:
        engine = Engine(config)
    except (GraphError, ValidationError, OSError) as exc:
        raise click.ClickException(str(exc))
    uvicorn.run(make_app(engine), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
