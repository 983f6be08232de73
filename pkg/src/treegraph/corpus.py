"""Corpus loading, vocabulary, document graphs and train/val/test splits.

Two input formats are supported: TSV (2 columns id<TAB>text, or 3
columns id<TAB>label<TAB>text; the first line fixes the column count)
and JSONL (one object per line with "id", "text" and optional "label").
Edges come either from a whitespace-delimited pair file or from tf-idf
nearest neighbors over the documents themselves.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class DataError(Exception):
    """Malformed corpus, edge or label input."""


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class RawRecord:
    doc_id: str
    text: str
    label: Optional[str] = None


def _load_tsv(path: str) -> list[RawRecord]:
    records = []
    ncol = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if ncol is None:
                ncol = min(line.count("\t") + 1, 3)
                if ncol < 2:
                    raise DataError(f"{path}:{lineno}: expected at least 2 tab-separated columns")
            parts = line.split("\t", ncol - 1)
            if len(parts) != ncol:
                raise DataError(f"{path}:{lineno}: expected {ncol} columns, got {len(parts)}")
            if ncol == 2:
                records.append(RawRecord(doc_id=parts[0], text=parts[1]))
            else:
                records.append(RawRecord(doc_id=parts[0], label=parts[1], text=parts[2]))
    return records


def _load_jsonl(path: str) -> list[RawRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise DataError(f"{path}:{lineno}: each line needs 'id' and 'text' fields")
            label = obj.get("label")
            records.append(
                RawRecord(
                    doc_id=str(obj["id"]),
                    text=str(obj["text"]),
                    label=None if label is None else str(label),
                )
            )
    return records


def load_corpus(path: str) -> list[RawRecord]:
    """Read documents; the extension picks the format (.jsonl/.json vs TSV)."""
    try:
        if path.endswith((".jsonl", ".json")):
            records = _load_jsonl(path)
        else:
            records = _load_tsv(path)
    except OSError as exc:
        raise DataError(f"cannot read corpus file {path}: {exc.strerror}") from exc
    if not records:
        raise DataError(f"{path}: corpus is empty")
    seen: dict[str, int] = {}
    for i, rec in enumerate(records):
        if rec.doc_id in seen:
            raise DataError(f"{path}: duplicate document id {rec.doc_id!r}")
        seen[rec.doc_id] = i
    return records


@dataclass
class Vocab:
    words: list[str]
    index: dict[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.words)


def build_vocab(
    token_lists: Iterable[Sequence[str]],
    min_count: int = 1,
    max_vocab: Optional[int] = None,
    stopwords: frozenset[str] = frozenset(),
) -> Vocab:
    """Frequency vocabulary, ordered by (count desc, word asc)."""
    freq: dict[str, int] = {}
    for toks in token_lists:
        for t in toks:
            if t not in stopwords:
                freq[t] = freq.get(t, 0) + 1
    items = [(w, c) for w, c in freq.items() if c >= min_count]
    items.sort(key=lambda wc: (-wc[1], wc[0]))
    if max_vocab is not None:
        items = items[:max_vocab]
    words = [w for w, _ in items]
    return Vocab(words=words, index={w: i for i, w in enumerate(words)})


@dataclass
class DocumentGraph:
    ids: list[str]
    tokens: list[list[int]]      # vocab ids, out-of-vocabulary words dropped
    counts: list[dict[int, int]]
    lengths: list[int]
    vocab: Vocab
    edges: set[tuple[int, int]]  # (i, j) with i < j, row indices
    labels: Optional[list[int]] = None
    label_names: Optional[list[str]] = None

    def __len__(self) -> int:
        return len(self.ids)

    def adjacency(self, edges: Optional[set[tuple[int, int]]] = None) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {i: set() for i in range(len(self.ids))}
        for i, j in self.edges if edges is None else edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj


def load_edges(path: str, id_index: dict[str, int]) -> set[tuple[int, int]]:
    """Whitespace pair file -> undirected edge set over row indices.

    Self loops are dropped; duplicates collapse; unknown ids are errors.
    """
    edges: set[tuple[int, int]] = set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read edge file {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two ids per line")
            try:
                i, j = (id_index[p] for p in parts)
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: unknown document id {exc.args[0]!r}") from exc
            if i == j:
                continue
            edges.add((min(i, j), max(i, j)))
    return edges


def knn_edges(token_lists: Sequence[Sequence[int]], vocab_size: int, k: int) -> set[tuple[int, int]]:
    """Symmetrized tf-idf cosine nearest neighbors.

    Ties break toward the lower row index so the graph is reproducible.
    """
    n = len(token_lists)
    if k < 1 or n < 2:
        return set()
    rows, cols, vals = [], [], []
    df = np.zeros(vocab_size, dtype=np.float64)
    for i, toks in enumerate(token_lists):
        c: dict[int, int] = {}
        for t in toks:
            c[t] = c.get(t, 0) + 1
        for w, cnt in c.items():
            rows.append(i)
            cols.append(w)
            vals.append(float(cnt))
            df[w] += 1.0
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    x = sp.csr_matrix((vals, (rows, cols)), shape=(n, vocab_size))
    x = x.multiply(idf[None, :]).tocsr()
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1))).ravel()
    norms[norms == 0.0] = 1.0
    x = sp.diags(1.0 / norms) @ x
    sim = (x @ x.T).toarray()
    edges: set[tuple[int, int]] = set()
    order = np.arange(n)
    for i in range(n):
        cand = [(-sim[i, j], j) for j in order if j != i]
        cand.sort()
        for _, j in cand[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def build_graph(
    records: Sequence[RawRecord],
    min_count: int = 1,
    max_vocab: Optional[int] = None,
    stopwords: frozenset[str] = frozenset(),
    edge_path: Optional[str] = None,
    knn_k: Optional[int] = None,
) -> DocumentGraph:
    """Tokenize, build the vocabulary and attach edges.

    Bag-of-words counts cover the whole document even when the encoder
    later truncates the token sequence.
    """
    raw_tokens = [tokenize(r.text) for r in records]
    vocab = build_vocab(raw_tokens, min_count=min_count, max_vocab=max_vocab, stopwords=stopwords)
    if len(vocab) == 0:
        raise DataError("vocabulary is empty after filtering")
    return _assemble(records, raw_tokens, vocab, edge_path, knn_k)


def build_graph_with_vocab(
    records: Sequence[RawRecord],
    vocab: Vocab,
    edge_path: Optional[str] = None,
    knn_k: Optional[int] = None,
) -> DocumentGraph:
    """Assemble a graph against an existing vocabulary.

    Used when scoring new documents with a trained model: the index map
    must match the one the decoder was trained against.
    """
    raw_tokens = [tokenize(r.text) for r in records]
    return _assemble(records, raw_tokens, vocab, edge_path, knn_k)


def _assemble(
    records: Sequence[RawRecord],
    raw_tokens: list[list[str]],
    vocab: Vocab,
    edge_path: Optional[str],
    knn_k: Optional[int],
) -> DocumentGraph:
    tokens = [[vocab.index[t] for t in toks if t in vocab.index] for toks in raw_tokens]
    counts: list[dict[int, int]] = []
    for toks in tokens:
        c: dict[int, int] = {}
        for t in toks:
            c[t] = c.get(t, 0) + 1
        counts.append(c)
    lengths = [len(t) for t in tokens]
    labels = None
    label_names = None
    if all(r.label is not None for r in records):
        label_names = sorted({r.label for r in records})
        lab_index = {name: i for i, name in enumerate(label_names)}
        labels = [lab_index[r.label] for r in records]
    id_index = {r.doc_id: i for i, r in enumerate(records)}
    if edge_path is not None:
        edges = load_edges(edge_path, id_index)
    elif knn_k is not None:
        edges = knn_edges(tokens, len(vocab), knn_k)
    else:
        edges = set()
    return DocumentGraph(
        ids=[r.doc_id for r in records],
        tokens=tokens,
        counts=counts,
        lengths=lengths,
        vocab=vocab,
        edges=edges,
        labels=labels,
        label_names=label_names,
    )


@dataclass
class Split:
    train: list[int]
    val: list[int]
    test: list[int]
    train_edges: set[tuple[int, int]]
    test_edges: set[tuple[int, int]]


def split(graph: DocumentGraph, fractions: tuple[float, float, float], seed: int) -> Split:
    """Shuffle split; edges crossing partitions are discarded.

    Train takes int(n * f_train) documents, validation the next
    int(n * f_val), test the remainder.
    """
    f_train, f_val, f_test = fractions
    if min(f_train, f_val, f_test) < 0 or abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise DataError(f"split fractions must be nonnegative and sum to 1, got {fractions}")
    n = len(graph)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    n_train = int(n * f_train)
    n_val = int(n * f_val)
    train = sorted(order[:n_train])
    val = sorted(order[n_train : n_train + n_val])
    test = sorted(order[n_train + n_val :])
    train_set, test_set = set(train), set(test)
    train_edges = {(i, j) for i, j in graph.edges if i in train_set and j in train_set}
    test_edges = {(i, j) for i, j in graph.edges if i in test_set and j in test_set}
    return Split(train=train, val=val, test=test, train_edges=train_edges, test_edges=test_edges)
