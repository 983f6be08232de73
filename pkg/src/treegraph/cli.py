"""Command-line interface.

Subcommands: train, eval, infer, export-tree. Every run writes the
resolved configuration next to its artifacts so results can be traced
back to the exact settings that produced them.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zipfile
from typing import Optional

import torch

from . import checkpoint as ckpt_io
from .config import ConfigError, RunConfig, load_config_file, make_config, parse_set_overrides
from .corpus import (
    DataError,
    DocumentGraph,
    Vocab,
    build_graph,
    build_graph_with_vocab,
    load_corpus,
    split,
)
from .encoder import GraphTopicModel
from .evaluate import embed_documents, evaluate, top_words
from .geometry import EuclideanSpace, Hyperboloid
from .objective import NumericalError, topic_word_distribution, train
from .tree import init_tree

_ENV_OUT_DIR = "TREEGRAPH_OUT_DIR"
_ENV_THREADS = "TREEGRAPH_THREADS"


def _thread_count() -> int:
    raw = os.environ.get(_ENV_THREADS)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{_ENV_THREADS} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{_ENV_THREADS} must be >= 1, got {value}")
    return value


def _resolve_config(args: argparse.Namespace, base: Optional[dict] = None) -> RunConfig:
    overlays = []
    if base:
        overlays.append(base)
    if getattr(args, "config", None):
        overlays.append(load_config_file(args.config))
    overlays.append(parse_set_overrides(getattr(args, "set", []) or []))
    flags: dict = {}
    for key in ("docs", "edges", "out_dir", "epochs", "seed", "top_k"):
        value = getattr(args, key, None)
        if value is not None:
            flags[key] = value
    for key in (
        "flat_tree", "fixed_tree", "euclidean",
        "no_tree_injection", "no_graph_injection", "supervised",
    ):
        if getattr(args, key, False):
            flags[key] = True
    overlays.append(flags)
    cfg = make_config(*overlays)
    env_out = os.environ.get(_ENV_OUT_DIR)
    if env_out:
        cfg.out_dir = env_out
    return cfg


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(cfg: RunConfig, out_dir: str, name: str = "config.json") -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, name), cfg.to_dict())


def _build_tree(cfg: RunConfig):
    if cfg.flat_tree:
        # Same leaf budget as the configured tree, all under the root.
        return init_tree(2, cfg.branching ** cfg.tree_depth // cfg.branching)
    return init_tree(cfg.tree_depth, cfg.branching)


def _build_manifold(cfg: RunConfig):
    return EuclideanSpace() if cfg.euclidean else Hyperboloid(cfg.curvature_k)


def _load_graph(cfg: RunConfig) -> DocumentGraph:
    if not cfg.docs:
        raise ConfigError("docs path is required")
    records = load_corpus(cfg.docs)
    return build_graph(
        records,
        min_count=cfg.min_count,
        max_vocab=cfg.max_vocab,
        stopwords=frozenset(cfg.stopwords),
        edge_path=cfg.edges,
        knn_k=None if cfg.edges else cfg.knn_k,
    )


def _load_graph_with_vocab(cfg: RunConfig, vocab_words: list[str]) -> DocumentGraph:
    if not cfg.docs:
        raise ConfigError("docs path is required")
    records = load_corpus(cfg.docs)
    vocab = Vocab(words=list(vocab_words), index={w: i for i, w in enumerate(vocab_words)})
    return build_graph_with_vocab(
        records,
        vocab,
        edge_path=cfg.edges,
        knn_k=None if cfg.edges else cfg.knn_k,
    )


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    torch.set_num_threads(_thread_count())
    graph = _load_graph(cfg)
    if cfg.supervised and graph.labels is None:
        raise ConfigError("--supervised requires a labeled corpus")
    data_split = split(graph, cfg.fractions(), cfg.seed)
    model = GraphTopicModel(
        vocab_size=len(graph.vocab),
        tree=_build_tree(cfg),
        manifold=_build_manifold(cfg),
        n=cfg.n,
        num_layers=cfg.num_layers,
        heads=cfg.heads,
        max_len=cfg.max_len,
        num_labels=len(graph.label_names) if cfg.supervised else None,
        use_tree_tokens=not cfg.no_tree_injection,
        use_graph_tokens=not cfg.no_graph_injection,
        seed=cfg.seed,
    )
    _echo_config(cfg, cfg.out_dir)
    losses_path = os.path.join(cfg.out_dir, "losses.jsonl")
    with open(losses_path, "w", encoding="utf-8") as log:
        def on_epoch(row: dict) -> None:
            # Wall time stays out of the log so reruns are byte-identical.
            logged = {k: v for k, v in row.items() if k != "seconds"}
            log.write(json.dumps(logged, sort_keys=True) + "\n")
            log.flush()
            print(
                f"epoch {row['epoch']}: loss {row['loss']:.6f} "
                f"(graph {row['graph_loss']:.6f}, topic {row['topic_loss']:.6f}), "
                f"topics {row['num_topics']} "
                f"(+{row['nodes_added']}/-{row['nodes_pruned']})"
            )

        train(
            model,
            graph,
            data_split,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            max_neighbors=cfg.max_neighbors,
            lr=cfg.lr,
            seed=cfg.seed,
            tau=cfg.tau,
            lambda_topic=cfg.lambda_topic,
            lambda_sup=cfg.lambda_sup,
            s_add=cfg.s_add,
            s_prune=cfg.s_prune,
            fixed_tree=cfg.fixed_tree,
            supervised=cfg.supervised,
            on_epoch=on_epoch,
        )
    ckpt_path = os.path.join(cfg.out_dir, "model.ckpt")
    ckpt_io.save_checkpoint(ckpt_path, model, graph.vocab.words, graph.label_names, cfg.to_dict())
    print(f"checkpoint written to {ckpt_path}")
    return 0


def _load_model(path: str) -> tuple[GraphTopicModel, ckpt_io.Checkpoint]:
    try:
        ckpt = ckpt_io.load_checkpoint(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    except (KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise DataError(f"invalid checkpoint {path}: {exc}") from exc
    return ckpt_io.restore_model(ckpt), ckpt


def cmd_eval(args: argparse.Namespace) -> int:
    model, ckpt = _load_model(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.config)
    torch.set_num_threads(_thread_count())
    graph = _load_graph_with_vocab(cfg, ckpt.vocab_words)
    data_split = split(graph, cfg.fractions(), cfg.seed)
    report = evaluate(
        model,
        graph,
        data_split,
        kappa=cfg.kappa,
        coherence_top_k=cfg.top_k,
        window=cfg.window,
    )
    payload = report.to_dict()
    _echo_config(cfg, cfg.out_dir, name="eval_config.json")
    _write_json(os.path.join(cfg.out_dir, "report.json"), payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    model, ckpt = _load_model(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.config)
    torch.set_num_threads(_thread_count())
    graph = _load_graph_with_vocab(cfg, ckpt.vocab_words)
    d, theta = embed_documents(model, graph, list(range(len(graph))))
    rows = [
        {
            "id": graph.ids[i],
            "embedding": [float(v) for v in d[i]],
            "theta": [float(v) for v in theta[i]],
        }
        for i in range(len(graph))
    ]
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        _echo_config(cfg, os.path.dirname(args.out) or ".", name="infer_config.json")
        print(f"wrote {len(rows)} embeddings to {args.out}")
    else:
        for row in rows:
            print(json.dumps(row))
    return 0


def cmd_export_tree(args: argparse.Namespace) -> int:
    model, ckpt = _load_model(args.checkpoint)
    cfg = _resolve_config(args, base=ckpt.config)
    from .drnn import build_embedding_table

    with torch.no_grad():
        table = build_embedding_table(model.tree, model.drnn, model.manifold)
        beta = topic_word_distribution(table, model.decoder_U, model.manifold)
    words = top_words(beta, cfg.top_k)
    nodes = []
    for t, nid in enumerate(table.order):
        node = model.tree.node(nid)
        nodes.append(
            {
                "id": nid,
                "level": node.level,
                "parent": node.parent,
                "children": list(node.children),
                "top_words": [ckpt.vocab_words[w] for w in words[t]],
            }
        )
    payload = {"num_topics": len(nodes), "depth": model.tree.depth, "nodes": nodes}
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        _write_json(args.out, payload)
        print(f"wrote tree with {len(nodes)} topics to {args.out}")
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key (repeatable)")


def _add_ablation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flat-tree", dest="flat_tree", action="store_true",
                   help="single topic level under the root")
    p.add_argument("--fixed-tree", dest="fixed_tree", action="store_true",
                   help="disable tree growth and pruning")
    p.add_argument("--euclidean", action="store_true",
                   help="replace hyperbolic operations with Euclidean ones")
    p.add_argument("--no-tree-injection", dest="no_tree_injection", action="store_true",
                   help="do not inject the tree token into attention")
    p.add_argument("--no-graph-injection", dest="no_graph_injection", action="store_true",
                   help="do not inject the graph token into attention")
    p.add_argument("--supervised", action="store_true",
                   help="add the label cross-entropy term")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treegraph",
        description="Hierarchical topic modeling over document graphs in hyperbolic space.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_common(p_train)
    p_train.add_argument("--docs", help="corpus file (TSV or JSONL)")
    p_train.add_argument("--edges", help="edge pair file; omitted -> tf-idf kNN edges")
    p_train.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--seed", type=int)
    _add_ablation_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--docs", help="corpus file; defaults to the training corpus")
    p_eval.add_argument("--edges")
    p_eval.add_argument("--out-dir", dest="out_dir")
    p_eval.add_argument("--seed", type=int)
    p_eval.set_defaults(func=cmd_eval)

    p_infer = sub.add_parser("infer", help="embed documents with a checkpoint")
    _add_common(p_infer)
    p_infer.add_argument("checkpoint")
    p_infer.add_argument("--docs", required=True)
    p_infer.add_argument("--out", help="output JSONL path (default stdout)")
    p_infer.set_defaults(func=cmd_infer)

    p_export = sub.add_parser("export-tree", help="dump the topic tree with top words")
    _add_common(p_export)
    p_export.add_argument("checkpoint")
    p_export.add_argument("--top-k", dest="top_k", type=int)
    p_export.add_argument("--out", help="output JSON path (default stdout)")
    p_export.set_defaults(func=cmd_export_tree)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
