import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mmgat.data import DataFormatError, RadarFrame, Skeleton
from mmgat.graph import GraphConfig, build_batch, build_graph, edge_feature, knn_neighbors

from .oracles import brute_knn, distinct_distance_cloud, scalar_edge_feature


def labeled(fid, pts, J=3):
    return RadarFrame(fid, pts, Skeleton.from_joints(np.zeros((J, 3))))


class TestKnn:
    def test_collinear(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [10, 0, 0]], float)
        assert list(knn_neighbors(pts, 2)[0]) == [1, 2]
        assert list(knn_neighbors(pts, 2)[3]) == [2, 1]

    def test_single_point(self):
        assert [len(n) for n in knn_neighbors(np.zeros((1, 3)), 5)] == [0]

    def test_k_zero(self):
        assert all(len(n) == 0 for n in knn_neighbors(np.random.rand(4, 3), 0))

    def test_tie_lower_index_wins(self):
        pts = np.array([[0, 0, 0], [-1, 0, 0], [1, 0, 0]], float)
        assert list(knn_neighbors(pts, 1)[0]) == [1]

    @settings(max_examples=80, deadline=None)
    @given(pts=hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)),
                          elements=st.sampled_from([-1.0, 0.0, 0.5, 1.0, 3.0])),
           k=st.sampled_from([0, 1, 2, 5, 20]))
    def test_matches_brute_force_with_ties(self, pts, k):
        got = [list(map(int, nb)) for nb in knn_neighbors(pts, k)]
        assert got == brute_knn(pts, k)


class TestEdgeFeature:
    def test_three_four_five(self):
        out = edge_feature([3, 4, 0, 2, 7], [0, 0, 0, 1, 10])
        assert out.tolist() == [5.0, 0.6, 0.8, 0.0, 1.0, -3.0]

    def test_coincident_points(self):
        assert edge_feature([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]).tolist() == [0.0] * 6

    def test_coincident_position_keeps_differences(self):
        out = edge_feature([1, 1, 1, 3, 9], [1, 1, 1, 1, 4])
        assert out.tolist() == [0.0, 0.0, 0.0, 0.0, 2.0, 5.0]

    @settings(max_examples=200, deadline=None)
    @given(hnp.arrays(np.float64, (2, 5), elements=st.floats(-100, 100)))
    def test_oracle_antisymmetry_unit_norm(self, pair):
        a, b = pair
        fwd, back = edge_feature(a, b), edge_feature(b, a)
        np.testing.assert_allclose(fwd, scalar_edge_feature(a, b), rtol=1e-12, atol=1e-12)
        assert fwd[0] == back[0]
        np.testing.assert_allclose(back[1:], -fwd[1:], rtol=1e-12, atol=1e-12)
        if fwd[0] > 0:
            assert abs(np.linalg.norm(fwd[1:4]) - 1.0) < 1e-12


class TestBuildGraph:
    def test_edge_count(self):
        g = build_graph(np.random.default_rng(0).normal(size=(5, 5)), GraphConfig(2))
        assert g.n_edges == 15

    def test_clipped_k(self):
        g = build_graph(np.random.default_rng(0).normal(size=(3, 5)), GraphConfig(20))
        assert g.n_edges == 9
        assert np.all(np.bincount(g.edge_dst) == 3)

    def test_structure_invariants(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 7, 30):
            g = build_graph(rng.normal(size=(n, 5)), GraphConfig(5))
            loops = g.edge_src == g.edge_dst
            assert loops.sum() == n
            assert np.all(g.edge_features[loops] == 0)
            assert np.all(np.bincount(g.edge_dst, minlength=n) == min(5, n - 1) + 1)
            pairs = set(zip(g.edge_src.tolist(), g.edge_dst.tolist()))
            assert len(pairs) == g.n_edges

    def test_features_match_oracle(self):
        pts = np.random.default_rng(2).normal(size=(8, 5))
        g = build_graph(pts, GraphConfig(3))
        for s, d, f in zip(g.edge_src, g.edge_dst, g.edge_features):
            expected = [0.0] * 6 if s == d else scalar_edge_feature(pts[s], pts[d])
            np.testing.assert_allclose(f, expected, atol=1e-12)

    def test_without_edge_features(self):
        g = build_graph(np.random.default_rng(3).normal(size=(6, 5)), GraphConfig(3, False))
        assert np.all(g.edge_features == 0) and g.n_edges == 24

    def test_permutation_isomorphism(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(2, 25))
            pts = np.column_stack([distinct_distance_cloud(rng, n), rng.normal(size=(n, 2))])
            perm = rng.permutation(n)
            g, gp = build_graph(pts, GraphConfig(4)), build_graph(pts[perm], GraphConfig(4))
            np.testing.assert_array_equal(gp.node_features, g.node_features[perm])
            original = {(int(s), int(d)) for s, d in zip(g.edge_src, g.edge_dst)}
            mapped = {(int(perm[s]), int(perm[d])) for s, d in zip(gp.edge_src, gp.edge_dst)}
            assert mapped == original


class TestBatch:
    def test_offsets(self):
        rng = np.random.default_rng(5)
        b = build_batch([labeled(0, rng.normal(size=(3, 5))), labeled(1, rng.normal(size=(4, 5)))],
                        GraphConfig(2))
        assert b.frame_of_node.tolist() == [0, 0, 0, 1, 1, 1, 1]
        assert np.all(b.frame_of_node[b.edge_src] == b.frame_of_node[b.edge_dst])
        assert b.targets.shape == (2, 9) and b.frame_ids == (0, 1)

    def test_singleton_equals_graph(self):
        f = labeled(0, np.random.default_rng(6).normal(size=(6, 5)))
        b, g = build_batch([f], GraphConfig(3)), build_graph(f, GraphConfig(3))
        np.testing.assert_array_equal(b.edge_src, g.edge_src)
        np.testing.assert_array_equal(b.edge_features, g.edge_features)
        assert np.all(b.frame_of_node == 0)

    def test_target_order_joint_major(self):
        joints = np.arange(9.0).reshape(3, 3)
        f = RadarFrame(0, np.zeros((2, 5)), Skeleton.from_joints(joints))
        assert build_batch([f]).targets[0].tolist() == list(range(9))

    def test_copies_give_identical_blocks(self):
        f = labeled(0, np.random.default_rng(7).normal(size=(5, 5)))
        b = build_batch([f, f, f], GraphConfig(2))
        E = b.n_edges // 3
        for i in range(1, 3):
            np.testing.assert_array_equal(b.edge_src[i * E:(i + 1) * E] - 5 * i, b.edge_src[:E])
            np.testing.assert_array_equal(b.edge_features[i * E:(i + 1) * E], b.edge_features[:E])

    def test_mixed_joint_counts(self):
        with pytest.raises(DataFormatError):
            build_batch([labeled(0, np.zeros((2, 5)), 3), labeled(1, np.zeros((2, 5)), 4)])

    def test_unlabeled_rejected(self):
        with pytest.raises(DataFormatError):
            build_batch([RadarFrame(0, np.zeros((2, 5)))])
        assert build_batch([RadarFrame(0, np.zeros((2, 5)))], require_labels=False).targets is None
