"""Topic tree structure, traversal orders and the growth/prune rule."""

import random

import pytest
import torch

from treegraph.tree import (
    TopicTree,
    TreeChange,
    enumerate_paths,
    init_tree,
    left_siblings,
    topic_word_mass,
    update_tree,
)


class TestInitAndTraversal:
    def test_complete_tree_shape(self):
        tree = init_tree(3, 3)
        assert len(tree) == 13
        assert tree.node(tree.root_id).level == 1
        levels = [tree.node(nid).level for nid in tree.topic_order()]
        assert levels == [1] + [2] * 3 + [3] * 9

    def test_breadth_first_ids(self):
        tree = init_tree(3, 2)
        assert tree.topic_order() == [0, 1, 2, 3, 4, 5, 6]
        assert tree.node(1).children == [3, 4]
        assert tree.node(2).children == [5, 6]

    def test_enumerate_paths_left_to_right(self):
        tree = init_tree(3, 2)
        assert enumerate_paths(tree) == [[0, 1, 3], [0, 1, 4], [0, 2, 5], [0, 2, 6]]

    def test_single_branch(self):
        tree = init_tree(2, 1)
        assert enumerate_paths(tree) == [[0, 1]]

    def test_left_siblings(self):
        tree = init_tree(3, 3)
        assert left_siblings(tree, 1) == []
        assert left_siblings(tree, 2) == [1]
        assert left_siblings(tree, 3) == [1, 2]
        with pytest.raises(ValueError):
            left_siblings(tree, tree.root_id)

    def test_validation(self):
        with pytest.raises(ValueError):
            init_tree(1, 3)
        with pytest.raises(ValueError):
            init_tree(3, 0)


class TestStructureEdits:
    def test_add_child_chain_reaches_leaf_level(self):
        tree = init_tree(3, 2)
        new = tree.add_child_chain(tree.root_id)
        assert len(new) == 2
        first, second = new
        assert tree.node(first).level == 2
        assert tree.node(second).level == 3
        assert tree.node(tree.root_id).children[-1] == first
        assert tree.node(first).children == [second]
        tree.check_invariants()

    def test_add_at_leaf_rejected(self):
        tree = init_tree(2, 2)
        with pytest.raises(ValueError):
            tree.add_child_chain(1)

    def test_prune_removes_subtree(self):
        tree = init_tree(3, 2)
        removed = tree.prune(1)
        assert sorted(removed) == [1, 3, 4]
        assert len(tree) == 4
        tree.check_invariants()

    def test_prune_root_rejected(self):
        tree = init_tree(2, 2)
        with pytest.raises(ValueError):
            tree.prune(tree.root_id)

    def test_serialization_roundtrip(self):
        tree = init_tree(3, 3)
        tree.add_child_chain(1)
        tree.prune(2)
        clone = TopicTree.from_dict(tree.to_dict())
        clone.check_invariants()
        assert clone.topic_order() == tree.topic_order()
        assert clone.to_dict() == tree.to_dict()


class TestTopicWordMass:
    def test_hand_value(self):
        theta = torch.tensor([[0.2], [0.5]], dtype=torch.float64)
        lengths = torch.tensor([10.0, 30.0], dtype=torch.float64)
        s = topic_word_mass(theta, lengths)
        # (10*0.2 + 30*0.5) / 40
        assert float(s[0]) == pytest.approx(0.425, abs=1e-15)

    def test_rows_summing_to_one_average_to_one(self):
        gen = torch.Generator().manual_seed(2)
        theta = torch.softmax(torch.randn(6, 9, generator=gen, dtype=torch.float64), dim=1)
        lengths = torch.tensor([3.0, 8.0, 1.0, 12.0, 5.0, 2.0], dtype=torch.float64)
        s = topic_word_mass(theta, lengths)
        assert float(s.sum()) == pytest.approx(1.0, abs=1e-12)

    def test_zero_total_length_rejected(self):
        theta = torch.ones(2, 3, dtype=torch.float64) / 3.0
        with pytest.raises(ValueError):
            topic_word_mass(theta, torch.zeros(2, dtype=torch.float64))


class TestUpdateTree:
    def test_hand_computed_adds_and_prunes(self):
        # Depth-3 binary tree, ids 0; 1,2; 3,4 under 1; 5,6 under 2.
        tree = init_tree(3, 2)
        s = {0: 0.30, 1: 0.20, 2: 0.30, 3: 0.06, 4: 0.06, 5: 0.04, 6: 0.04}
        change = update_tree(tree, s, s_add=0.05, s_prune=0.05)
        # Adds, breadth-first over the starting snapshot: the root gains a
        # level-2 child (7) whose chain reaches depth (8); nodes 1 and 2
        # gain leaves 9 and 10.
        assert change.added == [(7, 0), (8, 7), (9, 1), (10, 2)]
        # Prunes: the light leaves under node 2 go; node 2 survives on
        # its fresh child.
        assert change.pruned == [5, 6]
        assert sorted(tree.nodes) == [0, 1, 2, 3, 4, 7, 8, 9, 10]
        tree.check_invariants()

    def test_all_equal_mass_grows_everywhere(self):
        tree = init_tree(3, 3)
        s = {nid: 1.0 / 13.0 for nid in tree.nodes}
        change = update_tree(tree, s, s_add=0.05, s_prune=0.05)
        # Root adds a 2-node chain; each of the three level-2 nodes adds
        # a leaf. 13 -> 18.
        assert len(change.added) == 5
        assert change.pruned == []
        assert len(tree) == 18
        tree.check_invariants()

    def test_thresholds_are_strict(self):
        # Mass exactly at the bar triggers neither growth (needs >) nor
        # pruning (needs <).
        tree = init_tree(3, 2)
        s = {nid: 0.05 for nid in tree.nodes}
        before = sorted(tree.nodes)
        change = update_tree(tree, s, s_add=0.05, s_prune=0.05)
        assert not change
        assert sorted(tree.nodes) == before

    def test_prune_never_orphans_a_parent(self):
        # Single-branch chain 0 -> 1 -> 2 with no mass anywhere below
        # the root: every prune candidate is its parent's only child,
        # so nothing may be removed.
        tree = init_tree(3, 1)
        s = {0: 0.04, 1: 0.0, 2: 0.0}
        change = update_tree(tree, s, s_add=0.05, s_prune=0.05)
        assert not change
        assert sorted(tree.nodes) == [0, 1, 2]

    def test_prune_reports_whole_subtrees(self):
        # Root grows a fresh chain, freeing node 1's branch for removal;
        # the change log lists every node the prune took with it.
        tree = init_tree(3, 1)
        s = {0: 1.0, 1: 0.0, 2: 0.0}
        change = update_tree(tree, s, s_add=0.05, s_prune=0.05)
        assert change.pruned == [1, 2]
        assert [nid for nid, _ in change.added] == [3, 4]
        assert sorted(tree.nodes) == [0, 3, 4]
        tree.check_invariants()

    def test_new_nodes_are_not_prune_candidates(self):
        # Every fresh node has zero mass; the rule must not remove what
        # it just added.
        tree = init_tree(3, 2)
        s = {0: 0.5, 1: 0.25, 2: 0.25, 3: 0.0, 4: 0.0, 5: 0.0, 6: 0.0}
        change = update_tree(tree, s, s_add=0.05, s_prune=0.05)
        added_ids = [nid for nid, _ in change.added]
        assert added_ids
        for nid in added_ids:
            assert nid in tree.nodes
        tree.check_invariants()

    def test_threshold_validation(self):
        tree = init_tree(2, 2)
        s = {nid: 0.33 for nid in tree.nodes}
        with pytest.raises(ValueError):
            update_tree(tree, s, s_add=0.0, s_prune=0.05)
        with pytest.raises(ValueError):
            update_tree(tree, s, s_add=0.05, s_prune=1.0)

    def test_missing_stats_rejected(self):
        tree = init_tree(2, 2)
        with pytest.raises(ValueError):
            update_tree(tree, {0: 1.0}, s_add=0.05, s_prune=0.05)

    def test_fifty_random_cycles_keep_invariants(self):
        rng = random.Random(97)
        tree = init_tree(3, 2)
        for _ in range(50):
            raw = {nid: rng.random() for nid in tree.nodes}
            total = sum(raw.values())
            s = {nid: v / total for nid, v in raw.items()}
            update_tree(tree, s, s_add=0.05, s_prune=0.05)
            tree.check_invariants()
            assert tree.root_id in tree.nodes
            leaf_levels = {
                tree.node(nid).level for nid in tree.nodes if tree.is_leaf(nid)
            }
            assert leaf_levels == {tree.depth}


class TestTreeChange:
    def test_truthiness(self):
        assert not TreeChange(added=[], pruned=[])
        assert TreeChange(added=[(5, 0)], pruned=[])
        assert TreeChange(added=[], pruned=[3])
