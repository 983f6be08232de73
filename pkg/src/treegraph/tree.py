"""Mutable rooted ordered topic tree.

The root sits at level 1 and every leaf sits at level H (uniform depth,
which the level machinery relies on). Child order is meaningful: it
defines the left-sibling chains that both the sibling recurrence and the
stick-breaking construction consume. Node ids are stable integers handed
out by a counter and never reused.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import torch
from torch import Tensor


@dataclass
class TopicNode:
    id: int
    level: int
    parent: Optional[int]
    children: list[int] = field(default_factory=list)


@dataclass
class TreeChange:
    """Record of one structural edit applied by update_tree."""

    added: list[tuple[int, int]] = field(default_factory=list)  # (new id, parent id)
    pruned: list[int] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.added or self.pruned)


class TopicTree:
    def __init__(self, depth: int):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.nodes: dict[int, TopicNode] = {}
        self._next_id = 0
        self.root_id = self._new_node(level=1, parent=None)

    def _new_node(self, level: int, parent: Optional[int]) -> int:
        nid = self._next_id
        self._next_id += 1
        self.nodes[nid] = TopicNode(id=nid, level=level, parent=parent)
        if parent is not None:
            self.nodes[parent].children.append(nid)
        return nid

    # -- structure queries ------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, nid: int) -> bool:
        return nid in self.nodes

    def node(self, nid: int) -> TopicNode:
        return self.nodes[nid]

    def is_leaf(self, nid: int) -> bool:
        return not self.nodes[nid].children

    def topic_order(self) -> list[int]:
        """Breadth-first, left-to-right node ids; the canonical topic index."""
        order = []
        queue = [self.root_id]
        while queue:
            nid = queue.pop(0)
            order.append(nid)
            queue.extend(self.nodes[nid].children)
        return order

    def topic_index(self) -> dict[int, int]:
        return {nid: i for i, nid in enumerate(self.topic_order())}

    def left_siblings(self, nid: int) -> list[int]:
        """Siblings preceding nid in its parent's child order."""
        node = self.nodes[nid]
        if node.parent is None:
            raise ValueError("the root has no siblings")
        sibs = self.nodes[node.parent].children
        return sibs[: sibs.index(nid)]

    def descendants(self, nid: int) -> list[int]:
        out = []
        stack = list(self.nodes[nid].children)
        while stack:
            cur = stack.pop()
            out.append(cur)
            stack.extend(self.nodes[cur].children)
        return out

    def subtree_ids(self, nid: int) -> list[int]:
        return [nid] + self.descendants(nid)

    def iter_nodes(self) -> Iterator[TopicNode]:
        for nid in self.topic_order():
            yield self.nodes[nid]

    # -- mutation ---------------------------------------------------------

    def add_child_chain(self, parent: int) -> list[int]:
        """Append a rightmost child of parent plus a single-child chain
        down to level depth, keeping leaves at uniform depth. Returns the
        new ids, top to bottom."""
        level = self.nodes[parent].level
        if level >= self.depth:
            raise ValueError("cannot add children below the leaf level")
        new_ids = []
        cur = parent
        for lv in range(level + 1, self.depth + 1):
            cur = self._new_node(level=lv, parent=cur)
            new_ids.append(cur)
        return new_ids

    def prune(self, nid: int) -> list[int]:
        """Remove nid and its descendants; returns the removed ids."""
        if nid == self.root_id:
            raise ValueError("cannot prune the root")
        removed = self.subtree_ids(nid)
        parent = self.nodes[nid].parent
        assert parent is not None
        self.nodes[parent].children.remove(nid)
        for rid in removed:
            del self.nodes[rid]
        return removed

    # -- validation (used heavily by tests) -------------------------------

    def check_invariants(self) -> None:
        root = self.nodes[self.root_id]
        if root.level != 1 or root.parent is not None:
            raise AssertionError("malformed root")
        seen = set()
        stack = [self.root_id]
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise AssertionError("cycle or duplicate id")
            seen.add(nid)
            node = self.nodes[nid]
            if not node.children and node.level != self.depth:
                raise AssertionError(f"leaf {nid} at level {node.level} != {self.depth}")
            for cid in node.children:
                if self.nodes[cid].parent != nid:
                    raise AssertionError("parent/child mismatch")
                if self.nodes[cid].level != node.level + 1:
                    raise AssertionError("level must increase by one")
            stack.extend(node.children)
        if seen != set(self.nodes):
            raise AssertionError("disconnected nodes present")

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "root": self.root_id,
            "next_id": self._next_id,
            "nodes": [
                {
                    "id": n.id,
                    "level": n.level,
                    "parent": n.parent,
                    "children": list(n.children),
                }
                for n in self.iter_nodes()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopicTree":
        tree = cls.__new__(cls)
        tree.depth = data["depth"]
        tree.root_id = data["root"]
        tree._next_id = data["next_id"]
        tree.nodes = {}
        for rec in data["nodes"]:
            tree.nodes[rec["id"]] = TopicNode(
                id=rec["id"],
                level=rec["level"],
                parent=rec["parent"],
                children=list(rec["children"]),
            )
        tree.check_invariants()
        return tree


def init_tree(levels: int, branching: int) -> TopicTree:
    """Complete tree of the given depth and branching factor.

    Ids are assigned breadth first, so init_tree(3, 3) numbers the root
    0, its children 1..3 and the leaves 4..12.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if branching < 1:
        raise ValueError("branching must be >= 1")
    tree = TopicTree(depth=levels)
    frontier = [tree.root_id]
    for _ in range(levels - 1):
        nxt = []
        for parent in frontier:
            for _ in range(branching):
                nxt.append(tree._new_node(level=tree.nodes[parent].level + 1, parent=parent))
        frontier = nxt
    return tree


def enumerate_paths(tree: TopicTree) -> list[list[int]]:
    """Root-to-leaf paths, depth-first left-to-right; one per leaf."""
    paths = []

    def walk(nid: int, prefix: list[int]) -> None:
        prefix = prefix + [nid]
        node = tree.nodes[nid]
        if not node.children:
            paths.append(prefix)
            return
        for cid in node.children:
            walk(cid, prefix)

    walk(tree.root_id, [])
    return paths


def left_siblings(tree: TopicTree, nid: int) -> list[int]:
    return tree.left_siblings(nid)


def topic_word_mass(theta, doc_lengths) -> Tensor:
    """Corpus-level word mass per topic: s_t = sum_i |d_i| theta_it / sum_i |d_i|.

    theta: (M, T) rows summing to 1; doc_lengths: (M,) in-vocabulary
    token counts. Rows with zero length contribute nothing.
    """
    theta = torch.as_tensor(theta, dtype=torch.float64)
    lengths = torch.as_tensor(doc_lengths, dtype=torch.float64)
    total = lengths.sum()
    if total <= 0:
        raise ValueError("doc_lengths must have positive total")
    return (lengths.unsqueeze(-1) * theta).sum(0) / total


def update_tree(
    tree: TopicTree,
    s: dict[int, float],
    s_add: float,
    s_prune: float,
) -> TreeChange:
    """Grow and prune the tree in place from per-topic word mass.

    Every non-leaf topic with s_t > s_add gains one rightmost child
    (extended by a single-child chain so leaves stay at depth H). Then
    every non-root topic whose subtree mass falls below s_prune is
    removed, unless that would leave its parent childless or the
    candidate was created by this very call (new nodes carry zero mass
    by construction and get one epoch to earn some). Additions are
    decided against the input masses, so the two phases cannot see each
    other's edits.
    """
    if not (0.0 < s_add < 1.0) or not (0.0 < s_prune < 1.0):
        raise ValueError("thresholds must lie in (0, 1)")
    missing = [nid for nid in tree.nodes if nid not in s]
    if missing:
        raise ValueError(f"mass missing for topics {sorted(missing)}")

    change = TreeChange()

    # Phase 1: additions, breadth-first over the pre-update structure.
    for nid in tree.topic_order():
        node = tree.nodes[nid]
        if not node.children:
            continue
        if s[nid] > s_add:
            for new_id in tree.add_child_chain(nid):
                change.added.append((new_id, tree.nodes[new_id].parent))

    new_ids = {nid for nid, _ in change.added}

    # Phase 2: prunes, breadth-first so parents are considered before
    # their descendants; subtree mass treats this call's additions as 0.
    for nid in tree.topic_order():
        if nid not in tree.nodes:
            continue  # already removed with an ancestor
        if nid == tree.root_id or nid in new_ids:
            continue
        mass = sum(s.get(t, 0.0) for t in tree.subtree_ids(nid))
        if mass < s_prune:
            parent = tree.nodes[nid].parent
            if len(tree.nodes[parent].children) <= 1:
                continue  # would orphan the parent of its last child
            change.pruned.extend(tree.prune(nid))

    # With s_prune > s_add a prune can swallow nodes added above; keep
    # the log consistent with the surviving structure.
    change.added = [(nid, p) for nid, p in change.added if nid in tree.nodes]
    return change
