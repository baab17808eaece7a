import numpy as np
import pytest

from mmgat import autodiff as ad
from mmgat.autodiff import Tape, Tensor
from mmgat.data import RadarFrame, Skeleton
from mmgat.gradcheck import check_gradients, randomize
from mmgat.graph import GraphConfig, build_batch
from mmgat.model import (ModelConfig, Standardizer, edge_block, forward, gat_layer, init_params,
                         loss_mpjpe, loss_mse, param_shapes, predict)

from .oracles import central_difference, distinct_distance_cloud

SMALL = ModelConfig(joint_count=3, edge_widths=(6, 6, 6), gat_layers=4, gat_width=6,
                    head_widths=(8, 8, 8, 8), dropout_rate=0.5)


def labeled(fid, pts, J=3, seed=0):
    joints = np.random.default_rng(seed).normal(size=(J, 3))
    return RadarFrame(fid, pts, Skeleton.from_joints(joints))


def random_batch(seed, n=(6, 6), k=2, J=3):
    rng = np.random.default_rng(seed)
    frames = [labeled(i, np.column_stack([rng.normal(size=(m, 3)), rng.normal(size=(m, 2))]), J, i)
              for i, m in enumerate(n)]
    return build_batch(frames, GraphConfig(k))


class TestEdgeBlock:
    def test_zero_in_zero_out(self):
        params = init_params(ModelConfig(), 0)
        out = edge_block(np.zeros((7, 6)), params).data
        assert out.shape == (7, 64) and np.all(out == 0)

    def test_first_layer_has_no_relu(self):
        cfg = ModelConfig(edge_widths=(4,))
        params = init_params(cfg, 0)
        x = np.random.default_rng(0).normal(size=(5, 6))
        expected = x @ params["edge.0.weight"].data
        np.testing.assert_allclose(edge_block(x, params).data, expected)
        assert (expected < 0).any()

    def test_shape_any_edge_count(self):
        params = init_params(SMALL, 0)
        for E in (1, 13):
            assert edge_block(np.ones((E, 6)), params).shape == (E, 6)

    def test_gradient(self):
        params = randomize(init_params(SMALL, 1), 2)
        x = np.random.default_rng(3).normal(size=(9, 6))
        edge_params = {k: v for k, v in params.items() if k.startswith("edge")}
        report = check_gradients(edge_params, lambda: ad.total(ad.square(edge_block(x, params))))
        assert report.max_rel_error < 1e-4, report.to_text()


class TestGatLayer:
    def test_uniform_attention_for_identical_nodes(self):
        n, k = 7, 3
        pts = np.tile([[0.3, -0.2, 1.0, 0.5, 12.0]], (n, 1))
        batch = build_batch([labeled(0, pts)], GraphConfig(k, include_edge_features=False))
        res = forward(batch, randomize(init_params(SMALL, 0), 1), SMALL)
        for alpha in res.attention:
            np.testing.assert_allclose(alpha.data, 1.0 / (k + 1), rtol=0, atol=1e-15)

    def test_attention_sums_to_one(self):
        batch = random_batch(4, (5, 9, 1), k=3)
        res = forward(batch, randomize(init_params(SMALL, 0), 1), SMALL)
        for alpha in res.attention:
            sums = np.bincount(batch.edge_dst, weights=alpha.data, minlength=batch.n_nodes)
            np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_matches_explicit_concatenation(self):
        rng = np.random.default_rng(5)
        batch = random_batch(5, (6,), k=2)
        params = randomize(init_params(SMALL, 0), 1)
        C = SMALL.gat_width
        x = batch.node_features
        edge_repr = rng.normal(size=(batch.n_edges, 6))
        out = gat_layer(Tensor(x), batch.edge_src, batch.edge_dst, Tensor(edge_repr), params, 0)
        theta, theta_e = params["gat.0.theta"].data, params["gat.0.theta_edge"].data
        w, bias = params["gat.0.attention"].data, params["gat.0.bias"].data
        h = x @ theta
        expected = np.tile(bias, (len(x), 1))
        for j in range(len(x)):
            edges = np.flatnonzero(batch.edge_dst == j)
            scores = []
            for e in edges:
                cat = np.concatenate([h[j], h[batch.edge_src[e]], edge_repr[e] @ theta_e])
                s = cat @ w
                scores.append(s if s > 0 else 0.2 * s)
            a = np.exp(np.array(scores) - max(scores))
            a /= a.sum()
            expected[j] += (a[:, None] * h[batch.edge_src[edges]]).sum(axis=0)
            np.testing.assert_allclose(out.attention.data[edges], a, atol=1e-14)
        np.testing.assert_allclose(out.nodes.data, expected, rtol=1e-12, atol=1e-14)
        assert out.nodes.shape == (6, C)

    def test_missing_self_loop_rejected(self):
        params = init_params(SMALL, 0)
        with pytest.raises(ValueError):
            gat_layer(Tensor(np.ones((3, 5))), np.array([0, 1]), np.array([0, 1]),
                      Tensor(np.zeros((2, 6))), params, 0)

    def test_training_dropout_changes_output_eval_does_not(self):
        batch = random_batch(6)
        params = init_params(SMALL, 0)
        ev1 = predict(batch, params, SMALL)
        ev2 = predict(batch, params, SMALL)
        assert ev1.tobytes() == ev2.tobytes()
        tr = forward(batch, params, SMALL, training=True, rng=np.random.default_rng(0)).pose.data
        assert not np.allclose(tr, ev1)


class TestForward:
    def test_single_node_frame(self):
        batch = build_batch([labeled(0, np.ones((1, 5)))], GraphConfig(20))
        out = predict(batch, init_params(SMALL, 0), SMALL)
        assert out.shape == (1, 9) and np.all(np.isfinite(out))

    def test_identical_frames_identical_rows(self):
        f = labeled(0, np.random.default_rng(0).normal(size=(8, 5)))
        g = labeled(1, f.points, seed=0)
        out = predict(build_batch([f, g], GraphConfig(3)), randomize(init_params(SMALL, 0), 1),
                      SMALL)
        assert out[0].tobytes() == out[1].tobytes()

    def test_batch_independence(self):
        params = randomize(init_params(SMALL, 0), 1)
        b = random_batch(7, (5, 8), k=3)
        solo = random_batch(7, (5,), k=3)
        np.testing.assert_allclose(predict(b, params, SMALL)[0], predict(solo, params, SMALL)[0],
                                   atol=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        params = randomize(init_params(SMALL, 0), 1)
        for _ in range(10):
            n = int(rng.integers(3, 30))
            pts = np.column_stack([distinct_distance_cloud(rng, n), rng.normal(size=(n, 2))])
            perm = rng.permutation(n)
            a = predict(build_batch([labeled(0, pts)], GraphConfig(5)), params, SMALL)
            b = predict(build_batch([labeled(0, pts[perm])], GraphConfig(5)), params, SMALL)
            assert np.abs(a - b).max() < 1e-9

    def test_without_edge_features_ignores_edges(self):
        cfg = ModelConfig(**{**SMALL.to_dict(), "include_edge_features": False})
        batch = random_batch(9)
        params = randomize(init_params(cfg, 0), 1)
        base = forward(batch, params, cfg).pose.data
        noise = np.random.default_rng(0).normal(size=batch.edge_features.shape)
        perturbed = forward(batch, params, cfg, edge_features=batch.edge_features + noise).pose.data
        assert base.tobytes() == perturbed.tobytes()

    def test_edge_features_matter_when_enabled(self):
        batch = random_batch(9)
        params = randomize(init_params(SMALL, 0), 1)
        base = forward(batch, params, SMALL).pose.data
        moved = forward(batch, params, SMALL, edge_features=batch.edge_features * 2).pose.data
        assert not np.allclose(base, moved)

    def test_input_gradient(self):
        batch = random_batch(10)
        params = randomize(init_params(SMALL, 0), 1)
        ef = batch.edge_features.copy()
        target = batch.targets

        def objective(e):
            return loss_mpjpe(forward(batch, params, SMALL, edge_features=e).pose, target)

        et = Tensor(ef, requires_grad=True)
        with Tape() as tape:
            loss = objective(et)
        tape.backward(loss)
        numeric = central_difference(lambda: float(objective(ef).data), ef)
        rel = np.abs(et.grad - numeric) / np.maximum(np.maximum(abs(et.grad), abs(numeric)), 1e-6)
        assert rel.max() < 1e-4

    def test_scaler_round_trip_in_meters(self):
        batch = random_batch(11)
        scaler = Standardizer.fit(batch)
        assert np.all(scaler.edge_scale > 0)
        back = Standardizer.from_dict(scaler.to_dict())
        params = init_params(SMALL, 0)
        a = predict(batch, params, SMALL, scaler)
        b = predict(batch, params, SMALL, back)
        assert a.tobytes() == b.tobytes()


class TestLosses:
    def test_mse(self):
        p = Tensor(np.ones((2, 3)))
        assert float(loss_mse(p, np.ones((2, 3))).data) == 0.0
        assert float(loss_mse(p, np.ones((2, 3)) + 2).data) == 4.0

    def test_mse_gradient_closed_form(self):
        rng = np.random.default_rng(0)
        pred, target = rng.normal(size=(2, 6)), rng.normal(size=(2, 6))
        p = Tensor(pred, requires_grad=True)
        with Tape() as tape:
            loss = loss_mse(p, target)
        tape.backward(loss)
        np.testing.assert_allclose(p.grad, 2 * (pred - target) / 12, rtol=1e-13)
        numeric = central_difference(lambda: float(loss_mse(Tensor(pred), target).data), pred)
        np.testing.assert_allclose(p.grad, numeric, rtol=1e-6)

    def test_mpjpe(self):
        assert float(loss_mpjpe(Tensor([[3.0, 4.0, 0.0]]), [[0.0, 0.0, 0.0]]).data) \
            == pytest.approx(5.0, abs=1e-12)
        assert float(loss_mpjpe(Tensor(np.ones((1, 3))), np.ones((1, 3))).data) <= 1e-6

    def test_mpjpe_gradient(self):
        rng = np.random.default_rng(1)
        pred, target = rng.normal(size=(2, 9)), rng.normal(size=(2, 9))
        p = Tensor(pred, requires_grad=True)
        with Tape() as tape:
            loss = loss_mpjpe(p, target)
        tape.backward(loss)
        numeric = central_difference(lambda: float(loss_mpjpe(Tensor(pred), target).data), pred)
        np.testing.assert_allclose(p.grad, numeric, rtol=1e-6)

    def test_mpjpe_gradient_finite_at_zero_error(self):
        p = Tensor(np.ones((1, 3)), requires_grad=True)
        with Tape() as tape:
            loss = loss_mpjpe(p, np.ones((1, 3)))
        tape.backward(loss)
        assert np.all(np.isfinite(p.grad))

    @pytest.mark.parametrize("loss", [loss_mse, loss_mpjpe])
    def test_shape_mismatch(self, loss):
        with pytest.raises(ValueError):
            loss(Tensor(np.ones((1, 3))), np.ones((1, 6)))


class TestInit:
    def test_deterministic(self):
        a, b = init_params(ModelConfig(), 3), init_params(ModelConfig(), 3)
        assert all(a[k].data.tobytes() == b[k].data.tobytes() for k in a)

    def test_shapes_and_zero_biases(self):
        cfg = ModelConfig()
        params = init_params(cfg, 0)
        assert {k: p.shape for k, p in params.items()} == param_shapes(cfg)
        assert params["edge.0.weight"].shape == (6, 64)
        assert params["gat.0.theta"].shape == (5, 128)
        assert params["gat.3.attention"].shape == (384,)
        assert params["head.4.weight"].shape == (256, 51)
        assert all(np.all(p.data == 0) for k, p in params.items() if k.endswith("bias"))

    def test_weight_means_within_three_sigma(self):
        for name, p in init_params(ModelConfig(), 0).items():
            if name.endswith("bias"):
                continue
            fan_in, fan_out = (p.shape[0], 1) if p.data.ndim == 1 else p.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            sigma = limit / np.sqrt(3) / np.sqrt(p.size)
            assert abs(p.data.mean()) < 3 * sigma, name
            assert np.abs(p.data).max() <= limit

    def test_config_round_trip(self):
        cfg = ModelConfig(joint_count=5, head_widths=(7, 7))
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(dropout_rate=1.0)
        with pytest.raises(ValueError):
            ModelConfig(gat_width=0)
