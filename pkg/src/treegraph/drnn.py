"""Hyperbolic recurrences that give every topic and level an embedding.

A single RNN step projects the previous state through a Euclidean weight
matrix in the origin's tangent space, adds a bias by parallel transport
and squashes with a tangent-space tanh. Two such cells run over the tree
axes (parent to child, left sibling to sibling) and a combiner merges
them per node; a third cell chains over depths for the level embeddings.
All parameters are ordinary Euclidean tensors, so plain gradient descent
applies; hyperbolicity enters only through the maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .geometry import tangent_at_origin
from .tree import TopicTree


def init_normal(shape, generator: torch.Generator | None, std: float = 0.02) -> Tensor:
    t = torch.empty(*shape, dtype=torch.float64)
    t.normal_(0.0, std, generator=generator)
    return t


class HypRnnCell(nn.Module):
    """One recurrence step: state (n+1 ambient) -> state.

    W is (n+1, n+1) applied to tangent images at the origin; b is an
    n-vector lifted into the origin's tangent space before transport to
    the new state.
    """

    def __init__(self, n: int, generator: torch.Generator | None = None):
        super().__init__()
        self.n = n
        self.W = nn.Parameter(init_normal((n + 1, n + 1), generator))
        self.b = nn.Parameter(init_normal((n,), generator))


def hyp_rnn_step(z_prev: Tensor, cell: HypRnnCell, manifold) -> Tensor:
    """Advance one RNN step; broadcasts over leading dimensions of z_prev."""
    u = manifold.logmap0(z_prev)
    z1 = manifold.expmap0(u @ cell.W.T)
    bias = tangent_at_origin(cell.b)
    o = manifold.origin(cell.n).to(z1.dtype)
    z2 = manifold.expmap(z1, manifold.transport(o, z1, bias))
    return manifold.expmap0(torch.tanh(manifold.logmap0(z2)))


class DoublyRnn(nn.Module):
    """Cells for both tree axes plus the combiner and the shared seed.

    init_state is stored as tangent coordinates at the origin and serves
    as the missing-parent input at the root, the missing-left-sibling
    input for first children and the seed of the level chain.
    """

    def __init__(self, n: int, generator: torch.Generator | None = None):
        super().__init__()
        self.n = n
        self.ancestral = HypRnnCell(n, generator)
        self.fraternal = HypRnnCell(n, generator)
        self.level = HypRnnCell(n, generator)
        self.combine_W = nn.Parameter(init_normal((n + 1, n + 1), generator))
        self.init_state = nn.Parameter(init_normal((n,), generator))

    def seed_point(self, manifold) -> Tensor:
        return manifold.expmap0(tangent_at_origin(self.init_state))


def hyp_drnn_combine(z_p: Tensor, z_s: Tensor, combine_W: Tensor, manifold) -> Tensor:
    """Merge the two axis states: tanh-activated exp0(W (log0 z_p + log0 z_s))."""
    u = manifold.logmap0(z_p) + manifold.logmap0(z_s)
    z = manifold.expmap0(u @ combine_W.T)
    return manifold.expmap0(torch.tanh(manifold.logmap0(z)))


@dataclass
class EmbeddingTable:
    """Topic embeddings in breadth-first order plus the level chain."""

    order: list[int]          # node ids, row i of topics is order[i]
    index: dict[int, int]     # node id -> row
    topics: Tensor            # (T, n+1)
    levels: Tensor            # (H, n+1)

    def topic(self, nid: int) -> Tensor:
        return self.topics[self.index[nid]]


def compute_topic_embeddings(tree: TopicTree, params: DoublyRnn, manifold) -> tuple[list[int], Tensor]:
    """Run both recurrences over the tree, breadth-first left-to-right.

    Returns (topic order, (T, n+1) embeddings). A node's embedding only
    depends on its ancestor chain and left-sibling chain, so edits to a
    disjoint subtree leave it bitwise unchanged.
    """
    order = tree.topic_order()
    seed = params.seed_point(manifold)
    states: dict[int, Tensor] = {}
    for nid in order:
        node = tree.node(nid)
        parent_state = states[node.parent] if node.parent is not None else seed
        if node.parent is not None:
            sibs = tree.node(node.parent).children
            pos = sibs.index(nid)
            sib_state = states[sibs[pos - 1]] if pos > 0 else seed
        else:
            sib_state = seed
        z_p = hyp_rnn_step(parent_state, params.ancestral, manifold)
        z_s = hyp_rnn_step(sib_state, params.fraternal, manifold)
        states[nid] = hyp_drnn_combine(z_p, z_s, params.combine_W, manifold)
    return order, torch.stack([states[nid] for nid in order])


def compute_level_embeddings(depth: int, cell: HypRnnCell, init: Tensor, manifold) -> Tensor:
    """Chain the level cell from init for `depth` steps; returns (H, n+1)."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    states = []
    z = init
    for _ in range(depth):
        z = hyp_rnn_step(z, cell, manifold)
        states.append(z)
    return torch.stack(states)


def build_embedding_table(tree: TopicTree, params: DoublyRnn, manifold) -> EmbeddingTable:
    order, topics = compute_topic_embeddings(tree, params, manifold)
    levels = compute_level_embeddings(
        tree.depth, params.level, params.seed_point(manifold), manifold
    )
    return EmbeddingTable(
        order=order,
        index={nid: i for i, nid in enumerate(order)},
        topics=topics,
        levels=levels,
    )


def fermi_dirac(z: Tensor, d: Tensor, manifold) -> Tensor:
    """Distance-based similarity 1 / (1 + e^{dist^2}), in (0, 0.5]."""
    return torch.sigmoid(-manifold.dist_sq(z, d))
