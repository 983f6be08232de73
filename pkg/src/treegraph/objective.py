"""Losses and the training loop.

Three terms: a bag-of-words reconstruction loss through the topic-word
decoder, a contrastive neighbor loss over CLS states, and an optional
label cross-entropy. Batches are built from ego groups: each center
document travels with up to max_neighbors sampled true neighbors, wired
as a star so the center attends over all of them and each neighbor
attends back over the center alone.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable, Optional

import torch
from torch import Tensor

from .corpus import DocumentGraph, Split
from .drnn import EmbeddingTable
from .encoder import EgoBatch, GraphTopicModel, pack_documents, pack_neighbors
from .tree import TreeChange, update_tree

_PROB_FLOOR = 1e-12


class NumericalError(RuntimeError):
    """A loss term stopped being finite."""

    def __init__(self, term: str):
        super().__init__(f"non-finite value in {term}")
        self.term = term


def topic_word_distribution(table: EmbeddingTable, decoder_U: Tensor, manifold) -> Tensor:
    """Per-topic word distributions, shape (V, T); columns sum to 1."""
    logits = decoder_U @ manifold.logmap0(table.topics).T
    return torch.softmax(logits, dim=0)


def reconstruct(beta: Tensor, theta: Tensor) -> Tensor:
    """Mix topic-word columns by document topic weights -> (B, V)."""
    return theta @ beta.T


def topic_loss(counts: Tensor, d_hat: Tensor) -> Tensor:
    """Negative log likelihood of the observed counts, per document."""
    return -(counts * torch.log(d_hat.clamp_min(_PROB_FLOOR))).sum(dim=-1)


def graph_loss(
    d_centers: Tensor,
    d_pos: Tensor,
    neg_mask: Tensor,
    manifold,
    tau: float,
) -> Tensor:
    """InfoNCE over squared distances, per center, shape (B,).

    neg_mask marks which other centers count as negatives; the positive
    sits in the denominator as well. Rows without a real positive are
    still computed (against themselves) and must be masked by the
    caller.
    """
    s_pos = -manifold.dist_sq(d_centers, d_pos) / tau
    s_neg = -manifold.pairwise_dist_sq(d_centers, d_centers) / tau
    s_neg = s_neg.masked_fill(~neg_mask, -1e30)
    denom = torch.logsumexp(torch.cat([s_pos[:, None], s_neg], dim=1), dim=1)
    return denom - s_pos


def supervised_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Cross entropy, per document."""
    lse = torch.logsumexp(logits, dim=1)
    return lse - logits.gather(1, labels[:, None]).squeeze(1)


def total_loss(
    l_graph: Tensor,
    l_topic: Tensor,
    l_sup: Optional[Tensor],
    lambda_topic: float,
    lambda_sup: float,
) -> Tensor:
    out = l_graph + lambda_topic * l_topic
    if l_sup is not None:
        out = out + lambda_sup * l_sup
    return out


@dataclass
class TrainResult:
    model: GraphTopicModel
    history: list[dict]


def _dense_counts(graph: DocumentGraph, docs: list[int]) -> Tensor:
    out = torch.zeros(len(docs), len(graph.vocab), dtype=torch.float64)
    for b, doc in enumerate(docs):
        for w, c in graph.counts[doc].items():
            out[b, w] = float(c)
    return out


def build_ego_batch(
    graph: DocumentGraph,
    centers: list[int],
    adj: dict[int, set[int]],
    rng: random.Random,
    max_neighbors: int,
    max_len: int,
) -> tuple[EgoBatch, list[int], Tensor]:
    """Sample neighbor groups and pack them into one flat batch.

    Returns (batch, positive doc index per center or -1, valid mask).
    The positive is drawn first and always included; remaining neighbor
    slots are filled without replacement.
    """
    docs: list[int] = []
    nbr_rows: list[list[int]] = []
    center_rows: list[int] = []
    positives: list[int] = []
    for c in centers:
        nbrs = sorted(adj.get(c, ()))
        r0 = len(docs)
        center_rows.append(r0)
        if nbrs:
            pos = rng.choice(nbrs)
            rest = [x for x in nbrs if x != pos]
            extra = rng.sample(rest, min(len(rest), max_neighbors - 1))
            group = [c, pos] + extra
            positives.append(pos)
        else:
            group = [c]
            positives.append(-1)
        docs.extend(group)
        sat_rows = list(range(r0 + 1, r0 + len(group)))
        nbr_rows.append(sat_rows)
        nbr_rows.extend([[r0]] * len(sat_rows))
    ids, mask = pack_documents([graph.tokens[d][:max_len] for d in docs], max_len)
    nbr_idx, nbr_mask = pack_neighbors(nbr_rows)
    batch = EgoBatch(
        token_ids=ids,
        token_mask=mask,
        center_rows=torch.tensor(center_rows, dtype=torch.long),
        nbr_idx=nbr_idx,
        nbr_mask=nbr_mask,
    )
    pos_valid = torch.tensor([p >= 0 for p in positives], dtype=torch.bool)
    return batch, positives, pos_valid


def _negative_mask(centers: list[int], adj: dict[int, set[int]]) -> Tensor:
    """(B, B) [i, j] true when center j is a legal negative for center i."""
    b = len(centers)
    out = torch.zeros(b, b, dtype=torch.bool)
    for i, ci in enumerate(centers):
        linked = adj.get(ci, set())
        for j, cj in enumerate(centers):
            out[i, j] = j != i and cj != ci and cj not in linked
    return out


def train(
    model: GraphTopicModel,
    graph: DocumentGraph,
    data_split: Split,
    *,
    epochs: int,
    batch_size: int,
    max_neighbors: int,
    lr: float,
    seed: int,
    tau: float,
    lambda_topic: float = 1.0,
    lambda_sup: float = 1.0,
    s_add: float = 0.05,
    s_prune: float = 0.05,
    fixed_tree: bool = False,
    supervised: bool = False,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Run the optimization; the model's tree may grow or shrink between
    epochs unless fixed_tree is set.

    Topic statistics for the structure update are token-count weighted
    averages of the per-document topic distributions, accumulated over
    the epoch that just finished.
    """
    torch.set_num_threads(1)
    torch.manual_seed(seed)
    rng = random.Random(seed)
    if supervised and graph.labels is None:
        raise ValueError("supervised training requires labels")
    opt = torch.optim.Adam(model.parameters(), lr=lr, betas=(0.9, 0.999))
    adj = graph.adjacency(data_split.train_edges)
    max_len = model.embedder.max_len
    history: list[dict] = []
    for epoch in range(1, epochs + 1):
        t0 = time.monotonic()
        order = list(data_split.train)
        rng.shuffle(order)
        sums = {"total": 0.0, "graph": 0.0, "topic": 0.0, "sup": 0.0}
        n_seen = 0
        nll_num = 0.0
        nll_den = 0
        topic_order: list[int] = []
        theta_sum: Optional[Tensor] = None
        len_sum = 0.0
        for start in range(0, len(order), batch_size):
            centers = order[start : start + batch_size]
            batch, positives, pos_valid = build_ego_batch(
                graph, centers, adj, rng, max_neighbors, max_len
            )
            out = model.encode_batch(batch)
            d_centers = out.d[batch.center_rows]
            # The sampled positive always sits in the row after its center.
            pos_rows = batch.center_rows + 1
            pos_rows = torch.where(pos_valid, pos_rows, batch.center_rows)
            d_pos = out.d[pos_rows]

            beta = topic_word_distribution(out.table, model.decoder_U, model.manifold)
            counts = _dense_counts(graph, centers)
            d_hat = reconstruct(beta, out.triple.theta)
            l_topic_vec = topic_loss(counts, d_hat)
            l_topic = l_topic_vec.mean()

            neg_mask = _negative_mask(centers, adj)
            l_graph_vec = graph_loss(d_centers, d_pos, neg_mask, model.manifold, tau)
            if pos_valid.any():
                l_graph = l_graph_vec[pos_valid].mean()
            else:
                l_graph = torch.zeros((), dtype=torch.float64)

            l_sup = None
            if supervised:
                labels = torch.tensor([graph.labels[c] for c in centers], dtype=torch.long)
                l_sup = supervised_loss(model.classify_logits(d_centers), labels).mean()

            for name, term in (("graph loss", l_graph), ("topic loss", l_topic), ("supervised loss", l_sup)):
                if term is not None and not torch.isfinite(term).all():
                    raise NumericalError(name)
            loss = total_loss(l_graph, l_topic, l_sup, lambda_topic, lambda_sup)

            opt.zero_grad()
            loss.backward()
            opt.step()

            b = len(centers)
            n_seen += b
            sums["total"] += float(loss.detach()) * b
            sums["graph"] += float(l_graph.detach()) * b
            sums["topic"] += float(l_topic.detach()) * b
            if l_sup is not None:
                sums["sup"] += float(l_sup.detach()) * b
            nll_num += float(l_topic_vec.detach().sum())
            nll_den += sum(graph.lengths[c] for c in centers)

            with torch.no_grad():
                w = torch.tensor([float(graph.lengths[c]) for c in centers], dtype=torch.float64)
                contrib = (w[:, None] * out.triple.theta).sum(dim=0)
                if theta_sum is None:
                    topic_order = list(out.table.order)
                    theta_sum = contrib
                else:
                    theta_sum = theta_sum + contrib
                len_sum += float(w.sum())

        change = TreeChange(added=[], pruned=[])
        if not fixed_tree and theta_sum is not None and len_sum > 0:
            stats = {nid: float(theta_sum[t] / len_sum) for t, nid in enumerate(topic_order)}
            change = update_tree(model.tree, stats, s_add=s_add, s_prune=s_prune)
        row = {
            "epoch": epoch,
            "loss": sums["total"] / max(n_seen, 1),
            "graph_loss": sums["graph"] / max(n_seen, 1),
            "topic_loss": sums["topic"] / max(n_seen, 1),
            "supervised_loss": sums["sup"] / max(n_seen, 1) if supervised else None,
            "nll_per_word": nll_num / max(nll_den, 1),
            "num_topics": len(model.tree),
            "nodes_added": len(change.added),
            "nodes_pruned": len(change.pruned),
            "seconds": time.monotonic() - t0,
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return TrainResult(model=model, history=history)
