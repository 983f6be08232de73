"""Per-document distributions over the topic tree.

A document's embedding induces Fermi-Dirac similarities to topic and
level embeddings; child-wise and level-wise stick-breaking turn those
into a path distribution pi, a level distribution delta and the combined
per-topic distribution theta. The last child (and the last level) takes
the residual stick with no similarity factor, which makes every vector
sum to one exactly, with no renormalization pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .drnn import EmbeddingTable, fermi_dirac
from .tree import TopicTree, enumerate_paths


@dataclass
class TopicDistributionTriple:
    pi: Tensor     # (..., P) over root-to-leaf paths, enumerate_paths order
    delta: Tensor  # (..., H) over levels 1..H
    theta: Tensor  # (..., T) over topics, breadth-first order


def _stick_break(sig: Tensor) -> Tensor:
    """Stick-breaking over the last axis; the final slot takes the residual.

    sig: (..., m) similarities; only the first m-1 are consumed.
    """
    m = sig.shape[-1]
    if m == 1:
        return torch.ones_like(sig)
    cp = torch.cumprod(1.0 - sig[..., :-1], dim=-1)  # (..., m-1)
    first = sig[..., :1]
    last = cp[..., -1:]
    if m == 2:
        return torch.cat([first, last], dim=-1)
    middle = sig[..., 1:-1] * cp[..., :-1]
    return torch.cat([first, middle, last], dim=-1)


def child_selection_probs(
    doc: Tensor, parent: int, tree: TopicTree, table: EmbeddingTable, manifold
) -> Tensor:
    """Stick-breaking probabilities over one node's children.

    doc: (n+1,) manifold point. Child k takes sigma_k times the stick
    left by its left siblings; the last child takes the whole remainder.
    """
    children = tree.node(parent).children
    if not children:
        raise ValueError(f"node {parent} is a leaf")
    sig = torch.stack([fermi_dirac(table.topic(c), doc, manifold) for c in children])
    return _stick_break(sig)


def path_distribution(
    doc: Tensor, tree: TopicTree, table: EmbeddingTable, manifold
) -> Tensor:
    """Probability of each root-to-leaf path, enumerate_paths order."""
    sel_cache: dict[int, Tensor] = {}

    def selections(parent: int) -> Tensor:
        if parent not in sel_cache:
            sel_cache[parent] = child_selection_probs(doc, parent, tree, table, manifold)
        return sel_cache[parent]

    probs = []
    for path in enumerate_paths(tree):
        p = torch.ones((), dtype=doc.dtype)
        for parent, child in zip(path[:-1], path[1:]):
            sel = selections(parent)
            p = p * sel[tree.node(parent).children.index(child)]
        probs.append(p)
    return torch.stack(probs)


def level_distribution(doc: Tensor, table: EmbeddingTable, manifold) -> Tensor:
    """Stick-breaking over depths 1..H; the last level takes the residual."""
    sig = torch.stack([fermi_dirac(z, doc, manifold) for z in table.levels])
    return _stick_break(sig)


def topic_distribution(pi: Tensor, delta: Tensor, tree: TopicTree) -> Tensor:
    """Combine pi and delta into per-topic mass.

    theta_t = delta(level of t) * sum of pi over paths through t; every
    level's mass is fully spread across that level's topics, so theta
    sums to one whenever pi and delta do.
    """
    order = tree.topic_order()
    index = {nid: i for i, nid in enumerate(order)}
    paths = enumerate_paths(tree)
    membership = torch.zeros((len(paths), len(order)), dtype=pi.dtype)
    for p, path in enumerate(paths):
        for nid in path:
            membership[p, index[nid]] = 1.0
    level_of = torch.tensor(
        [tree.node(nid).level - 1 for nid in order], dtype=torch.long
    )
    path_mass = pi @ membership               # (..., T)
    return path_mass * delta[..., level_of]


def tree_embedding(theta: Tensor, table: EmbeddingTable, manifold) -> Tensor:
    """Mix topic embeddings in the origin's tangent space: exp0(theta log0(z))."""
    return manifold.expmap0(theta @ manifold.logmap0(table.topics))


def topic_triple(
    docs: Tensor, tree: TopicTree, table: EmbeddingTable, manifold
) -> TopicDistributionTriple:
    """Batched pi, delta, theta for docs (M, n+1).

    Equivalent to the per-document functions above but walks the tree
    once, carrying (M,) node probabilities down from the root.
    """
    m_docs = docs.shape[0]
    sig = torch.sigmoid(-manifold.pairwise_dist_sq(docs, table.topics))   # (M, T)
    sig_lv = torch.sigmoid(-manifold.pairwise_dist_sq(docs, table.levels))  # (M, H)

    order = table.order
    index = table.index
    node_prob: dict[int, Tensor] = {
        tree.root_id: torch.ones(m_docs, dtype=docs.dtype)
    }
    for nid in order:
        children = tree.node(nid).children
        if not children:
            continue
        cols = [index[c] for c in children]
        sel = _stick_break(sig[:, cols])                  # (M, m)
        for j, cid in enumerate(children):
            node_prob[cid] = node_prob[nid] * sel[:, j]

    delta = _stick_break(sig_lv)                          # (M, H)
    theta = torch.stack(
        [
            node_prob[nid] * delta[:, tree.node(nid).level - 1]
            for nid in order
        ],
        dim=1,
    )
    leaf_rows = [node_prob[path[-1]] for path in enumerate_paths(tree)]
    pi = torch.stack(leaf_rows, dim=1)
    return TopicDistributionTriple(pi=pi, delta=delta, theta=theta)
