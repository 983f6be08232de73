"""Hyperbolic Transformer encoder with tree and graph token injection.

Documents are encoded as [CLS, w1, ..., wm] sequences of manifold
points. Layer 1 is a plain hyperbolic Transformer layer; every later
layer first reads the previous layer's CLS state, derives the document's
tree embedding (via the topic distributions) and graph embedding (via
neighborhood attention) and injects both as extra keys/values. Queries
cover only the document's own tokens, so injected tokens never appear in
the output sequence.

The attention, layer norms and MLP all operate on log0 images; exp0
returns each sublayer's result to the manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from .doctopic import TopicDistributionTriple, topic_triple, tree_embedding
from .drnn import DoublyRnn, EmbeddingTable, build_embedding_table, init_normal
from .geometry import tangent_at_origin
from .graphattn import GraphAttnParams, graph_embed
from .tree import TopicTree

_LN_EPS = 1e-6


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mean = x.mean(-1, keepdim=True)
    var = x.var(-1, unbiased=False, keepdim=True)
    return gain * (x - mean) / torch.sqrt(var + _LN_EPS) + bias


def _gelu(x: Tensor) -> Tensor:
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


class TokenEmbedder(nn.Module):
    """Euclidean token/position/CLS tables lifted through the origin."""

    def __init__(self, vocab_size: int, n: int, max_len: int, generator=None):
        super().__init__()
        self.vocab_size = vocab_size
        self.n = n
        self.max_len = max_len
        self.table = nn.Parameter(init_normal((vocab_size, n), generator))
        self.cls = nn.Parameter(init_normal((n,), generator))
        # Row 0 is the CLS slot, rows 1..max_len the word positions.
        self.pos = nn.Parameter(init_normal((max_len + 1, n), generator))

    def forward(self, token_ids: Tensor, token_mask: Tensor, manifold):
        """token_ids: (M, S) long, token_mask: (M, S) bool.

        Returns ((M, S+1, n+1) manifold points, (M, S+1) key mask).
        """
        m_docs, s = token_ids.shape
        if s > self.max_len:
            raise ValueError(f"sequence length {s} exceeds max_len {self.max_len}")
        emb = self.table[token_ids.clamp_min(0)] + self.pos[1 : s + 1]
        cls_row = (self.cls + self.pos[0]).expand(m_docs, 1, self.n)
        eu = torch.cat([cls_row, emb], dim=1)                     # (M, S+1, n)
        points = manifold.expmap0(tangent_at_origin(eu))
        key_mask = torch.cat(
            [torch.ones(m_docs, 1, dtype=torch.bool), token_mask], dim=1
        )
        return points, key_mask


class TrmLayerParams(nn.Module):
    """Attention, MLP and layer-norm weights for one layer.

    Per-head width is (n+1) // heads; the output projection restores the
    ambient width.
    """

    def __init__(self, n: int, heads: int, generator=None):
        super().__init__()
        a = n + 1
        if heads < 1 or heads > a:
            raise ValueError(f"heads must be in [1, {a}], got {heads}")
        self.heads = heads
        self.head_dim = a // heads
        inner = self.heads * self.head_dim
        self.W_q = nn.Parameter(init_normal((a, inner), generator))
        self.W_k = nn.Parameter(init_normal((a, inner), generator))
        self.W_v = nn.Parameter(init_normal((a, inner), generator))
        self.W_o = nn.Parameter(init_normal((inner, a), generator))
        hidden = 4 * a
        self.mlp_W1 = nn.Parameter(init_normal((a, hidden), generator))
        self.mlp_b1 = nn.Parameter(torch.zeros(hidden, dtype=torch.float64))
        self.mlp_W2 = nn.Parameter(init_normal((hidden, a), generator))
        self.mlp_b2 = nn.Parameter(torch.zeros(a, dtype=torch.float64))
        self.ln1_g = nn.Parameter(torch.ones(a, dtype=torch.float64))
        self.ln1_b = nn.Parameter(torch.zeros(a, dtype=torch.float64))
        # The second norm feeds the exp map. Unit gain would place every
        # token at distance ~sqrt(a) from the origin, saturating the
        # distance sigmoids downstream, so it starts at 1/sqrt(a).
        self.ln2_g = nn.Parameter(torch.full((a,), a ** -0.5, dtype=torch.float64))
        self.ln2_b = nn.Parameter(torch.zeros(a, dtype=torch.float64))


_MASK_FILL = -1e30


def asym_mha(
    tokens: Tensor,
    extras: Optional[Tensor],
    params: TrmLayerParams,
    key_mask: Tensor,
    manifold,
) -> Tensor:
    """Asymmetric multi-head attention; returns tangent-space rows.

    tokens: (M, S1, n+1) manifold points; extras: (M, E, n+1) manifold
    points appended to keys/values only (or None); key_mask: (M, S1).
    Queries come from tokens alone, so the output is (M, S1, n+1) no
    matter how many extras are injected.
    """
    m_docs, s1, a = tokens.shape
    u = manifold.logmap0(tokens)                                  # (M, S1, A)
    if extras is not None:
        kv_in = torch.cat([manifold.logmap0(extras), u], dim=1)
        full_mask = torch.cat(
            [torch.ones(m_docs, extras.shape[1], dtype=torch.bool), key_mask],
            dim=1,
        )
    else:
        kv_in = u
        full_mask = key_mask

    h, dh = params.heads, params.head_dim

    def split(x: Tensor) -> Tensor:
        return x.view(m_docs, -1, h, dh).transpose(1, 2)          # (M, h, *, dh)

    q = split(u @ params.W_q)
    k = split(kv_in @ params.W_k)
    v = split(kv_in @ params.W_v)
    scores = q @ k.transpose(-1, -2) / math.sqrt(a)               # (M, h, S1, K)
    scores = scores.masked_fill(~full_mask[:, None, None, :], _MASK_FILL)
    att = torch.softmax(scores, dim=-1)
    out = (att @ v).transpose(1, 2).reshape(m_docs, s1, h * dh)
    return out @ params.W_o


def hyp_trm_layer(
    tokens: Tensor,
    extras: Optional[Tensor],
    params: TrmLayerParams,
    key_mask: Tensor,
    manifold,
) -> Tensor:
    """One full layer; token count in equals token count out."""
    u = manifold.logmap0(tokens)
    mixed = asym_mha(tokens, extras, params, key_mask, manifold)
    # The exp/log sandwich projects the attention output back into the
    # origin's tangent slice (and applies the norm guard) before the
    # residual sum.
    mixed = manifold.logmap0(manifold.expmap0(mixed))
    h1 = _layer_norm(u + mixed, params.ln1_g, params.ln1_b)
    h2 = _gelu(h1 @ params.mlp_W1 + params.mlp_b1) @ params.mlp_W2 + params.mlp_b2
    h2 = _layer_norm(h1 + h2, params.ln2_g, params.ln2_b)
    return manifold.expmap0(h2)


@dataclass
class EgoBatch:
    """A flat pack of documents with group-local neighbor structure.

    Rows cover every document in the batch (centers and their sampled
    neighbors alike). nbr_idx holds row indices into this same pack;
    masked slots are arbitrary.
    """

    token_ids: Tensor    # (M, S) long
    token_mask: Tensor   # (M, S) bool
    center_rows: Tensor  # (B,) long
    nbr_idx: Tensor      # (M, D) long
    nbr_mask: Tensor     # (M, D) bool


def pack_documents(docs: list[list[int]], max_len: int) -> tuple[Tensor, Tensor]:
    """Pad token id lists into (M, S) ids plus mask, truncating to max_len."""
    docs = [d[:max_len] for d in docs]
    s = max((len(d) for d in docs), default=0)
    ids = torch.zeros(len(docs), s, dtype=torch.long)
    mask = torch.zeros(len(docs), s, dtype=torch.bool)
    for i, d in enumerate(docs):
        if d:
            ids[i, : len(d)] = torch.tensor(d, dtype=torch.long)
            mask[i, : len(d)] = True
    return ids, mask


def pack_neighbors(nbrs: list[list[int]]) -> tuple[Tensor, Tensor]:
    """Pad group-local neighbor row lists into (M, D) indices plus mask."""
    d = max((len(x) for x in nbrs), default=0)
    idx = torch.zeros(len(nbrs), d, dtype=torch.long)
    mask = torch.zeros(len(nbrs), d, dtype=torch.bool)
    for i, x in enumerate(nbrs):
        if x:
            idx[i, : len(x)] = torch.tensor(x, dtype=torch.long)
            mask[i, : len(x)] = True
    return idx, mask


@dataclass
class EncodeResult:
    d: Tensor                        # (M, n+1) final CLS states
    triple: TopicDistributionTriple  # final-layer distributions, center rows
    table: EmbeddingTable            # topic/level embeddings used this pass


class GraphTopicModel(nn.Module):
    """The full encoder: token embedder, DRNN, graph attention, L layers,
    topic-word decoder and (optionally) a label classifier.

    The topic tree is held by reference and may be edited between
    forward passes; embeddings are derived from shared weights, so
    structural edits need no parameter surgery.
    """

    def __init__(
        self,
        vocab_size: int,
        tree: TopicTree,
        manifold,
        n: int = 63,
        num_layers: int = 4,
        heads: int = 4,
        max_len: int = 128,
        num_labels: Optional[int] = None,
        use_tree_tokens: bool = True,
        use_graph_tokens: bool = True,
        seed: int = 0,
    ):
        super().__init__()
        if num_layers < 2:
            raise ValueError("num_layers must be >= 2")
        g = torch.Generator()
        g.manual_seed(seed)
        a = n + 1
        self.n = n
        self.num_layers = num_layers
        self.vocab_size = vocab_size
        self.tree = tree
        self.manifold = manifold
        self.use_tree_tokens = use_tree_tokens
        self.use_graph_tokens = use_graph_tokens
        self.embedder = TokenEmbedder(vocab_size, n, max_len, g)
        self.drnn = DoublyRnn(n, g)
        self.graph = GraphAttnParams(n, g)
        self.layers = nn.ModuleList(
            [TrmLayerParams(n, heads, g) for _ in range(num_layers)]
        )
        # Unit-scale rows: word logits are inner products against tangent
        # vectors of norm ~1, so a 0.02 start would leave the word
        # distributions indistinguishable for most of a short run.
        self.decoder_U = nn.Parameter(init_normal((vocab_size, a), g, std=1.0))
        if num_labels is not None:
            self.clf_W1 = nn.Parameter(init_normal((a, a), g))
            self.clf_b1 = nn.Parameter(torch.zeros(a, dtype=torch.float64))
            self.clf_W2 = nn.Parameter(init_normal((a, num_labels), g))
            self.clf_b2 = nn.Parameter(torch.zeros(num_labels, dtype=torch.float64))
        self.num_labels = num_labels

    def classify_logits(self, d: Tensor) -> Tensor:
        if self.num_labels is None:
            raise RuntimeError("model was built without labels")
        h = _gelu(self.manifold.logmap0(d) @ self.clf_W1 + self.clf_b1)
        return h @ self.clf_W2 + self.clf_b2

    def encode_batch(self, batch: EgoBatch) -> EncodeResult:
        manifold = self.manifold
        table = build_embedding_table(self.tree, self.drnn, manifold)
        points, key_mask = self.embedder(batch.token_ids, batch.token_mask, manifold)
        h = hyp_trm_layer(points, None, self.layers[0], key_mask, manifold)
        for layer in self.layers[1:]:
            d_prev = h[:, 0]
            extras = []
            if self.use_tree_tokens:
                trip = topic_triple(d_prev, self.tree, table, manifold)
                extras.append(tree_embedding(trip.theta, table, manifold))
            if self.use_graph_tokens:
                extras.append(
                    graph_embed(d_prev, batch.nbr_idx, batch.nbr_mask, self.graph, manifold)
                )
            packed = torch.stack(extras, dim=1) if extras else None
            h = hyp_trm_layer(h, packed, layer, key_mask, manifold)
        d = h[:, 0]
        triple = topic_triple(d[batch.center_rows], self.tree, table, manifold)
        return EncodeResult(d=d, triple=triple, table=table)

    def encode_document(
        self, doc: list[int], neighbors: list[list[int]] | None = None
    ) -> tuple[Tensor, TopicDistributionTriple]:
        """Encode one document with optional neighbor documents.

        The center and its neighbors form a star: the center attends
        over all neighbors, each neighbor over the center alone.
        """
        neighbors = neighbors or []
        ids, mask = pack_documents([doc] + neighbors, self.embedder.max_len)
        rows = list(range(1, 1 + len(neighbors)))
        nbr_idx, nbr_mask = pack_neighbors([rows] + [[0]] * len(neighbors))
        batch = EgoBatch(
            token_ids=ids,
            token_mask=mask,
            center_rows=torch.tensor([0], dtype=torch.long),
            nbr_idx=nbr_idx,
            nbr_mask=nbr_mask,
        )
        out = self.encode_batch(batch)
        return out.d[0], out.triple
