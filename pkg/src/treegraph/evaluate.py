"""Evaluation: neighbor classification, topic coherence, held-out
reconstruction and link prediction.

Evaluation embeddings are computed with empty neighborhoods for every
document, so no edge information leaks into the representation and
train and test documents pass through the exact same pipeline.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from .corpus import DocumentGraph, Split
from .encoder import EgoBatch, GraphTopicModel, pack_documents, pack_neighbors
from .objective import reconstruct, topic_word_distribution

_PROB_FLOOR = 1e-12


def embed_documents(
    model: GraphTopicModel, graph: DocumentGraph, indices: Sequence[int], chunk: int = 64
) -> tuple[Tensor, Tensor]:
    """Encode documents neighbor-free; returns (embeddings, topic weights)."""
    max_len = model.embedder.max_len
    d_parts, theta_parts = [], []
    with torch.no_grad():
        for start in range(0, len(indices), chunk):
            block = indices[start : start + chunk]
            ids, mask = pack_documents([graph.tokens[i][:max_len] for i in block], max_len)
            nbr_idx, nbr_mask = pack_neighbors([[] for _ in block])
            batch = EgoBatch(
                token_ids=ids,
                token_mask=mask,
                center_rows=torch.arange(len(block), dtype=torch.long),
                nbr_idx=nbr_idx,
                nbr_mask=nbr_mask,
            )
            out = model.encode_batch(batch)
            d_parts.append(out.d)
            theta_parts.append(out.triple.theta)
    return torch.cat(d_parts), torch.cat(theta_parts)


def knn_classify(
    train_embs: Tensor,
    train_labels: Sequence[int],
    test_embs: Tensor,
    kappa: int,
    manifold,
) -> list[int]:
    """Majority vote over the kappa nearest training documents.

    Neighbor ties break toward the lower training index; vote ties
    toward the smaller mean distance, then the lower label index.
    """
    with torch.no_grad():
        dist = manifold.pairwise_dist_sq(test_embs, train_embs).numpy()
    out = []
    labels = np.asarray(train_labels)
    for row in dist:
        nearest = sorted(range(len(row)), key=lambda j: (row[j], j))[:kappa]
        votes: dict[int, list[float]] = {}
        for j in nearest:
            votes.setdefault(int(labels[j]), []).append(float(row[j]))
        ranked = sorted(
            votes.items(), key=lambda kv: (-len(kv[1]), sum(kv[1]) / len(kv[1]), kv[0])
        )
        out.append(ranked[0][0])
    return out


def f1_scores(gold: Sequence[int], pred: Sequence[int]) -> tuple[float, float]:
    """(micro, macro) F1 over the union of gold and predicted labels.

    Empty denominators score zero rather than raising.
    """
    if len(gold) != len(pred):
        raise ValueError("gold and pred lengths differ")
    label_set = sorted(set(gold) | set(pred))
    tp = {c: 0 for c in label_set}
    fp = {c: 0 for c in label_set}
    fn = {c: 0 for c in label_set}
    for g, p in zip(gold, pred):
        if g == p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    def f1(t: int, p: int, n: int) -> float:
        prec = t / (t + p) if t + p else 0.0
        rec = t / (t + n) if t + n else 0.0
        return 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    micro = f1(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    macro = sum(f1(tp[c], fp[c], fn[c]) for c in label_set) / len(label_set) if label_set else 0.0
    return micro, macro


class CorpusWindowReference:
    """Sliding-window co-occurrence statistics with add-one smoothing.

    Documents shorter than the window contribute a single window. Both
    marginal and joint probabilities use (count + 1) / (W + 2), which
    keeps every log finite.
    """

    def __init__(self, token_lists: Sequence[Sequence[int]], window: int = 10):
        self.window = window
        self._windows_of: dict[int, set[int]] = {}
        wid = 0
        for toks in token_lists:
            if not toks:
                continue
            spans = max(len(toks) - window + 1, 1)
            for s in range(spans):
                for t in set(toks[s : s + window]):
                    self._windows_of.setdefault(t, set()).add(wid)
                wid += 1
        self.num_windows = wid

    def prob(self, w: int) -> float:
        count = len(self._windows_of.get(w, ()))
        return (count + 1.0) / (self.num_windows + 2.0)

    def joint_prob(self, w1: int, w2: int) -> float:
        a = self._windows_of.get(w1, set())
        b = self._windows_of.get(w2, set())
        return (len(a & b) + 1.0) / (self.num_windows + 2.0)


def top_words(beta: Tensor, k: int) -> list[list[int]]:
    """Top-k word ids per topic column, score desc then id asc."""
    arr = beta.detach().numpy()
    out = []
    for t in range(arr.shape[1]):
        col = arr[:, t]
        order = sorted(range(len(col)), key=lambda w: (-col[w], w))
        out.append(order[:k])
    return out


def npmi(topic_words: Sequence[Sequence[int]], reference: CorpusWindowReference) -> float:
    """Mean normalized pointwise mutual information over word pairs."""
    per_topic = []
    for words in topic_words:
        vals = []
        for a in range(len(words)):
            for b in range(a + 1, len(words)):
                pij = reference.joint_prob(words[a], words[b])
                pi = reference.prob(words[a])
                pj = reference.prob(words[b])
                vals.append(math.log(pij / (pi * pj)) / (-math.log(pij)))
        if vals:
            per_topic.append(sum(vals) / len(vals))
    return sum(per_topic) / len(per_topic) if per_topic else 0.0


def perplexity_exponent(
    counts: Sequence[dict[int, int]], theta: Tensor, beta: Tensor
) -> float:
    """Per-word negative log likelihood under the mixed topic decoder."""
    d_hat = reconstruct(beta, theta)
    num = 0.0
    den = 0
    for row, c in enumerate(counts):
        for w, cnt in c.items():
            num -= cnt * math.log(max(float(d_hat[row, w]), _PROB_FLOOR))
            den += cnt
    return num / den if den else 0.0


def auc_from_scores(pos: np.ndarray, neg: np.ndarray) -> float:
    """Pairwise ranking probability with half credit for ties."""
    total = 0.0
    for start in range(0, len(pos), 512):
        block = pos[start : start + 512, None]
        total += float((block > neg[None, :]).sum())
        total += 0.5 * float((block == neg[None, :]).sum())
    return total / (len(pos) * len(neg))


# The negative sample is part of the evaluation protocol, not of any
# particular run: a constant seed means every model scored on the same
# split faces the same non-edges.
_NEG_SAMPLE_SEED = 0


def link_auc(
    embeddings: Tensor,
    rows_of: dict[int, int],
    pos_edges: Sequence[tuple[int, int]],
    candidates: Sequence[int],
    all_edges: set[tuple[int, int]],
    manifold,
) -> Optional[float]:
    """AUC for ranking held-out edges above sampled non-edges.

    Negatives are drawn uniformly from unlinked candidate pairs, one
    per positive. Scores are negated squared distances.
    """
    pos_edges = sorted(pos_edges)
    if not pos_edges or len(candidates) < 2:
        return None
    rng = random.Random(_NEG_SAMPLE_SEED)
    cand = sorted(candidates)
    negs: set[tuple[int, int]] = set()
    tries = 0
    limit = 10000 + 200 * len(pos_edges)
    while len(negs) < len(pos_edges) and tries < limit:
        tries += 1
        i = cand[rng.randrange(len(cand))]
        j = cand[rng.randrange(len(cand))]
        if i == j:
            continue
        pair = (min(i, j), max(i, j))
        if pair in all_edges or pair in negs:
            continue
        negs.add(pair)
    if not negs:
        return None

    def scores(pairs: Sequence[tuple[int, int]]) -> np.ndarray:
        a = embeddings[[rows_of[i] for i, _ in pairs]]
        b = embeddings[[rows_of[j] for _, j in pairs]]
        with torch.no_grad():
            return -manifold.dist_sq(a, b).numpy()

    return auc_from_scores(scores(pos_edges), scores(sorted(negs)))


@dataclass
class EvalReport:
    num_test_docs: int
    num_topics: int
    micro_f1: Optional[float] = None
    macro_f1: Optional[float] = None
    npmi_value: Optional[float] = None
    perplexity_exponent_value: Optional[float] = None
    perplexity: Optional[float] = None
    link_auc_value: Optional[float] = None
    predictions: list[int] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "num_test_docs": self.num_test_docs,
            "num_topics": self.num_topics,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "npmi": self.npmi_value,
            "perplexity_exponent": self.perplexity_exponent_value,
            "perplexity": self.perplexity,
            "link_auc": self.link_auc_value,
        }


def evaluate(
    model: GraphTopicModel,
    graph: DocumentGraph,
    data_split: Split,
    kappa: int = 5,
    coherence_top_k: int = 10,
    window: int = 10,
) -> EvalReport:
    train_d, _ = embed_documents(model, graph, data_split.train)
    test_d, test_theta = embed_documents(model, graph, data_split.test)
    report = EvalReport(num_test_docs=len(data_split.test), num_topics=len(model.tree))

    if graph.labels is not None and data_split.test:
        gold = [graph.labels[i] for i in data_split.test]
        train_labels = [graph.labels[i] for i in data_split.train]
        pred = knn_classify(train_d, train_labels, test_d, kappa, model.manifold)
        report.predictions = pred
        report.micro_f1, report.macro_f1 = f1_scores(gold, pred)

    with torch.no_grad():
        from .drnn import build_embedding_table

        table = build_embedding_table(model.tree, model.drnn, model.manifold)
        beta = topic_word_distribution(table, model.decoder_U, model.manifold)
        reference = CorpusWindowReference(
            [graph.tokens[i] for i in data_split.train], window=window
        )
        report.npmi_value = npmi(top_words(beta, coherence_top_k), reference)
        if data_split.test:
            exponent = perplexity_exponent(
                [graph.counts[i] for i in data_split.test], test_theta, beta
            )
            report.perplexity_exponent_value = exponent
            report.perplexity = math.exp(exponent)

    rows_of = {doc: r for r, doc in enumerate(data_split.test)}
    report.link_auc_value = link_auc(
        test_d, rows_of, sorted(data_split.test_edges), data_split.test,
        graph.edges, model.manifold,
    )
    return report
