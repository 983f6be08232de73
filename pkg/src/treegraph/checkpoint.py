"""Byte-stable model checkpoints.

A checkpoint is a single zip archive holding a JSON manifest (resolved
run config plus its digest, tree structure, vocabulary, label names,
model wiring) and one .npy entry per parameter tensor. Entries are
stored uncompressed with a fixed timestamp in sorted name order, so
saving the same state twice yields identical bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch

from .encoder import GraphTopicModel
from .geometry import EuclideanSpace, Hyperboloid
from .tree import TopicTree

FORMAT_VERSION = 1

_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_checkpoint(
    path: str,
    model: GraphTopicModel,
    vocab_words: list[str],
    label_names: Optional[list[str]],
    config: dict,
) -> None:
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "config_sha256": config_digest(config),
        "tree": model.tree.to_dict(),
        "vocab": vocab_words,
        "label_names": label_names,
        "model": {
            "vocab_size": model.vocab_size,
            "n": model.n,
            "num_layers": model.num_layers,
            "heads": model.layers[0].heads,
            "max_len": model.embedder.max_len,
            "num_labels": model.num_labels,
            "use_tree_tokens": model.use_tree_tokens,
            "use_graph_tokens": model.use_graph_tokens,
            "hyperbolic": model.manifold.hyperbolic,
            "k": model.manifold.k,
        },
        "tensors": {name: list(arr.shape) for name, arr in state.items()},
    }
    entries = [
        (
            "manifest.json",
            json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8"),
        )
    ]
    for name, arr in state.items():
        buf = io.BytesIO()
        np.save(buf, arr)
        entries.append((f"tensors/{name}.npy", buf.getvalue()))
    entries.sort(key=lambda e: e[0])
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in entries:
            _write_entry(zf, name, payload)


@dataclass
class Checkpoint:
    config: dict
    config_sha256: str
    tree: TopicTree
    vocab_words: list[str]
    label_names: Optional[list[str]]
    model_info: dict
    tensors: dict[str, np.ndarray]


def load_checkpoint(path: str) -> Checkpoint:
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
        stored = config_digest(manifest["config"])
        if stored != manifest["config_sha256"]:
            raise ValueError("checkpoint config digest mismatch")
        tensors = {}
        for name in manifest["tensors"]:
            with zf.open(f"tensors/{name}.npy") as fh:
                tensors[name] = np.load(fh)
    return Checkpoint(
        config=manifest["config"],
        config_sha256=manifest["config_sha256"],
        tree=TopicTree.from_dict(manifest["tree"]),
        vocab_words=manifest["vocab"],
        label_names=manifest["label_names"],
        model_info=manifest["model"],
        tensors=tensors,
    )


def restore_model(ckpt: Checkpoint) -> GraphTopicModel:
    info = ckpt.model_info
    manifold = Hyperboloid(info["k"]) if info["hyperbolic"] else EuclideanSpace()
    model = GraphTopicModel(
        vocab_size=info["vocab_size"],
        tree=ckpt.tree,
        manifold=manifold,
        n=info["n"],
        num_layers=info["num_layers"],
        heads=info["heads"],
        max_len=info["max_len"],
        num_labels=info["num_labels"],
        use_tree_tokens=info["use_tree_tokens"],
        use_graph_tokens=info["use_graph_tokens"],
        seed=0,
    )
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.tensors.items()}
    model.load_state_dict(state, strict=True)
    return model
