"""Network forward/gradient/training against hand and finite-difference oracles."""

import numpy as np
import pytest

from sceno.errors import ContractViolation, TrainingDiverged
from sceno.mlp import (
    Dataset,
    Mlp,
    TrainConfig,
    forward,
    forward_batch,
    grad_input,
    load_mlp,
    mlp_from_dict,
    mlp_init,
    mlp_to_dict,
    pgd_extremes,
    save_mlp,
    train,
)

from util import lipschitz_inf, random_net


def constant_net(m, value):
    return Mlp([np.zeros((1, m))], [np.zeros(1)], out_mean=value, out_std=1.0)


class TestInit:
    def test_same_seed_bit_identical(self):
        a = mlp_init([4, 32, 1], seed=123)
        b = mlp_init([4, 32, 1], seed=123)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_different_seed_differs(self):
        a = mlp_init([4, 32, 1], seed=123)
        b = mlp_init([4, 32, 1], seed=124)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_parameter_count(self):
        # (3+1)*100 + (100+1)*100 + (100+1)*1
        assert mlp_init([3, 100, 100, 1], seed=0).param_count == 10601

    def test_zero_seed_finite_everywhere(self):
        f = mlp_init([5, 20, 20, 1], seed=0)
        rng = np.random.default_rng(1)
        assert np.isfinite(forward_batch(f, rng.uniform(size=(50, 5)))).all()

    def test_weight_range(self):
        f = mlp_init([9, 50, 1], seed=3)
        assert np.abs(f.weights[0]).max() <= np.sqrt(6 / 9)
        assert np.all(f.biases[0] == 0)

    def test_bad_dims(self):
        with pytest.raises(ContractViolation):
            mlp_init([3], seed=0)
        with pytest.raises(ContractViolation):
            mlp_init([3, 4, 2], seed=0)


class TestForward:
    def test_constant_network(self):
        f = Mlp([np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)], out_mean=2.0)
        assert forward(f, np.array([0.1, 0.9])) == 2.0
        assert forward(f, np.array([0.7, 0.2])) == 2.0

    def test_single_affine_layer(self):
        f = Mlp([np.array([[1.0, -1.0]])], [np.array([0.5])])
        assert forward(f, np.array([0.25, 0.5])) == pytest.approx(0.25)

    def test_dimension_mismatch(self):
        f = mlp_init([3, 8, 1], seed=0)
        with pytest.raises(ContractViolation):
            forward(f, np.array([0.1, 0.2]))

    def test_lipschitz_continuity(self):
        f = random_net(5, [3, 16, 16, 1], out_mean=1.0, out_std=2.5)
        big_l = lipschitz_inf(f)
        rng = np.random.default_rng(8)
        for _ in range(200):
            a, b = rng.uniform(size=3), rng.uniform(size=3)
            gap = abs(forward(f, a) - forward(f, b))
            assert gap <= big_l * np.abs(a - b).max() + 1e-12


class TestGradInput:
    def test_constant_network_zero_gradient(self):
        f = constant_net(4, 3.3)
        assert np.array_equal(grad_input(f, np.full(4, 0.5)), np.zeros(4))

    def test_single_affine_layer_gradient(self):
        w = np.array([[2.0, -3.0, 0.5]])
        f = Mlp([w], [np.zeros(1)], out_mean=1.0, out_std=1.7)
        g = grad_input(f, np.array([0.1, 0.2, 0.3]))
        assert np.allclose(g, 1.7 * w[0], rtol=0, atol=0)

    def test_matches_central_differences(self):
        f = random_net(11, [4, 24, 24, 1], out_mean=0.5, out_std=2.0)
        rng = np.random.default_rng(17)
        h = 1e-5
        checked = 0
        while checked < 100:
            theta = rng.uniform(0.05, 0.95, size=4)
            if _near_activation_boundary(f, theta, 1e-4):
                continue
            g = grad_input(f, theta)
            fd = np.empty(4)
            for i in range(4):
                up, dn = theta.copy(), theta.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (forward(f, up) - forward(f, dn)) / (2 * h)
            scale = max(1.0, np.abs(fd).max())
            assert np.abs(g - fd).max() <= 1e-4 * scale, (g, fd)
            checked += 1


def _near_activation_boundary(f: Mlp, theta: np.ndarray, margin: float) -> bool:
    a = theta.copy()
    for i, (w, b) in enumerate(zip(f.weights[:-1], f.biases[:-1])):
        z = w @ a + b
        if np.any(np.abs(z) < margin):
            return True
        a = np.maximum(z, 0.0)
    return False


class TestTrain:
    def test_constant_target(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(200, 3))
        data = Dataset(x, np.full(200, 3.7))
        f = train(
            mlp_init([3, 16, 1], seed=1), data, TrainConfig(epochs=2000, batch=32, lr=1e-2, seed=2)
        )
        assert np.abs(forward_batch(f, x) - 3.7).max() <= 1e-3

    def test_linear_target(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(500, 2))
        data = Dataset(x, x[:, 0] + 2 * x[:, 1])
        f = train(
            mlp_init([2, 64, 64, 1], seed=5),
            data,
            TrainConfig(epochs=200, batch=32, lr=2e-2, seed=12),
        )
        assert np.abs(forward_batch(f, x) - data.rhos).max() <= 1e-2

    def test_final_loss_never_worse(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(size=(100, 2))
        y = np.sin(6 * x[:, 0]) + x[:, 1]
        f0 = mlp_init([2, 16, 1], seed=0)
        f1 = train(f0, Dataset(x, y), TrainConfig(epochs=3, batch=16, seed=1))
        before = np.mean((forward_batch(f0, x) - y) ** 2)
        after = np.mean((forward_batch(f1, x) - y) ** 2)
        assert np.isfinite(after) and after <= before

    def test_bit_reproducible(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(size=(80, 3))
        data = Dataset(x, x.sum(axis=1))
        cfg = TrainConfig(epochs=10, batch=16, seed=9)
        a = train(mlp_init([3, 12, 1], seed=5), data, cfg)
        b = train(mlp_init([3, 12, 1], seed=5), data, cfg)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        assert all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))

    def test_divergence_raises(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(32, 1))
        data = Dataset(x, x[:, 0])
        with pytest.raises(TrainingDiverged):
            train(mlp_init([1, 4, 1], seed=0), data, TrainConfig(epochs=5, batch=8, lr=1e155))

    def test_warm_start_improves_on_more_data(self):
        # continuing training on a grown dataset starts from the learned
        # standardized shape and keeps improving
        rng = np.random.default_rng(3)
        target = lambda x: 20 * x[:, 0] * x[:, 1] + 5
        x1 = rng.uniform(size=(300, 2))
        f = train(
            mlp_init([2, 24, 1], seed=1),
            Dataset(x1, target(x1)),
            TrainConfig(epochs=60, batch=64, lr=3e-3, seed=1),
        )
        x2 = np.vstack([x1, rng.uniform(size=(300, 2))])
        g = train(f, Dataset(x2, target(x2)), TrainConfig(epochs=60, batch=64, lr=3e-3, seed=2))
        probe = rng.uniform(size=(500, 2))
        err_f = np.abs(forward_batch(f, probe) - target(probe)).mean()
        err_g = np.abs(forward_batch(g, probe) - target(probe)).mean()
        assert err_g < err_f


class TestPgdExtremes:
    def test_constant_net_endpoints_equal_starts(self):
        f = constant_net(3, 1.0)
        pts = pgd_extremes(f, 4, "min", restarts=4, seed=7)
        starts = np.random.default_rng(7).uniform(size=(4, 3))
        got = np.array(sorted(p.tolist() for p in pts))
        want = np.array(sorted(starts.tolist()))
        assert np.allclose(got, want, atol=0, rtol=0)

    def test_linear_max_hits_all_ones_corner(self):
        f = Mlp([np.array([[1.0, 2.0, 0.5]])], [np.zeros(1)])
        for p in pgd_extremes(f, 3, "max", seed=1):
            assert np.allclose(p, 1.0)

    def test_min_beats_random_search(self):
        f = random_net(23, [3, 20, 20, 1], out_std=1.5)
        best_pgd = min(forward(f, p) for p in pgd_extremes(f, 5, "min", seed=3))
        samples = np.random.default_rng(99).uniform(size=(10_000, 3))
        assert best_pgd <= forward_batch(f, samples).min() + 1e-9

    def test_endpoints_inside_unit_box(self):
        f = random_net(31, [4, 16, 1])
        for direction in ("min", "max"):
            for p in pgd_extremes(f, 6, direction, seed=2):
                assert np.all(p >= 0.0) and np.all(p <= 1.0)

    def test_zero_count(self):
        assert pgd_extremes(random_net(1, [2, 4, 1]), 0, "min") == []


class TestPersistence:
    def test_round_trip_value_exact(self, tmp_path):
        f = mlp_init([3, 7, 1], seed=42)
        f.out_mean = 0.1 + 0.2  # deliberately non-representable decimal
        f.out_std = np.pi
        path = tmp_path / "model.json"
        save_mlp(f, path)
        g = load_mlp(path)
        assert g.dims == f.dims
        assert g.out_mean == f.out_mean and g.out_std == f.out_std
        assert all(np.array_equal(a, b) for a, b in zip(f.weights, g.weights))
        assert all(np.array_equal(a, b) for a, b in zip(f.biases, g.biases))

    def test_save_deterministic_bytes(self, tmp_path):
        f = mlp_init([2, 5, 1], seed=1)
        save_mlp(f, tmp_path / "a.json")
        save_mlp(f, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_dict_shape_validation(self):
        d = mlp_to_dict(mlp_init([2, 3, 1], seed=0))
        d["dims"] = [2, 4, 1]
        with pytest.raises(ContractViolation):
            mlp_from_dict(d)

    def test_missing_field(self):
        d = mlp_to_dict(mlp_init([2, 3, 1], seed=0))
        del d["out_std"]
        with pytest.raises(ContractViolation):
            mlp_from_dict(d)
