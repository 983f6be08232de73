"""Attention over a document's sampled graph neighborhood.

Each document state is first transformed in the origin's tangent space,
then attends over its neighbors' transformed states. The aggregate
halves the sum of the self term and the attention-weighted neighbor
terms before mapping back, so an isolated document still produces a
well-defined (purely self) graph embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .drnn import init_normal


class GraphAttnParams(nn.Module):
    def __init__(self, n: int, generator: torch.Generator | None = None):
        super().__init__()
        self.n = n
        self.W_g = nn.Parameter(init_normal((n + 1, n + 1), generator))
        self.b_att = nn.Parameter(init_normal((2 * (n + 1),), generator))


@dataclass
class NeighborBatch:
    """One center document plus the states of its sampled neighbors."""

    center: Tensor            # (n+1,) manifold point
    neighbors: Tensor         # (D, n+1), D may be 0


def hgnn_transform(d: Tensor, params: GraphAttnParams, manifold) -> Tensor:
    """Linear map in tangent coordinates: exp0(W_g log0(d))."""
    return manifold.expmap0(manifold.logmap0(d) @ params.W_g.T)


def hgnn_aggregate(batch: NeighborBatch, params: GraphAttnParams, manifold) -> Tensor:
    """Aggregate one neighborhood of already-transformed states.

    alpha_j = softmax_j(b_att . [log0(center) || log0(neighbor_j)]);
    out = exp0(0.5 (log0(center) + sum_j alpha_j log0(neighbor_j))).
    """
    u_c = manifold.logmap0(batch.center)
    if batch.neighbors.shape[0] == 0:
        return manifold.expmap0(0.5 * u_c)
    u_n = manifold.logmap0(batch.neighbors)                       # (D, A)
    pair = torch.cat([u_c.expand_as(u_n), u_n], dim=-1)           # (D, 2A)
    alpha = torch.softmax(pair @ params.b_att, dim=0)             # (D,)
    return manifold.expmap0(0.5 * (u_c + alpha @ u_n))


# Finite stand-in for -inf: keeps the all-masked softmax NaN-free while
# still underflowing to exactly zero weight against any real score.
_MASK_FILL = -1e30


def graph_embed(
    d: Tensor,
    nbr_idx: Tensor,
    nbr_mask: Tensor,
    params: GraphAttnParams,
    manifold,
) -> Tensor:
    """Batched transform + aggregate.

    d: (M, n+1) current document states; nbr_idx: (M, D) row indices
    into d (arbitrary where masked); nbr_mask: (M, D) True at real
    neighbors. Rows with no real neighbor reduce to the self rule.
    """
    dt = hgnn_transform(d, params, manifold)
    u = manifold.logmap0(dt)                                       # (M, A)
    u_n = u[nbr_idx.clamp_min(0)]                                  # (M, D, A)
    pair = torch.cat([u.unsqueeze(1).expand_as(u_n), u_n], dim=-1)
    scores = pair @ params.b_att                                   # (M, D)
    scores = scores.masked_fill(~nbr_mask, _MASK_FILL)
    alpha = torch.softmax(scores, dim=-1) * nbr_mask.to(u.dtype)
    agg = (alpha.unsqueeze(-1) * u_n).sum(1)
    return manifold.expmap0(0.5 * (u + agg))
