import gzip
import math
import struct

import numpy as np
import pytest

from oracles import central_diff_grad
from sparsecomm.engine import TrainConfig, train
from sparsecomm.errors import FormatError
from sparsecomm.models import MLP, grad, load_idx, load_idx_labels, logistic_regression, synth_dataset


def write_idx_labels(path, labels, magic=0x00000801):
    path.write_bytes(struct.pack(">II", magic, len(labels)) + bytes(labels))


def write_idx_images(path, images, magic=0x00000803):
    n, r, c = images.shape
    path.write_bytes(struct.pack(">IIII", magic, n, r, c) + images.astype(np.uint8).tobytes())


class TestIdx:
    def test_labels(self, tmp_path):
        write_idx_labels(tmp_path / "l", [7, 2, 1])
        assert load_idx_labels(tmp_path / "l").tolist() == [7, 2, 1]

    def test_pair_scaled(self, tmp_path):
        imgs = np.zeros((2, 2, 3), dtype=np.uint8)
        imgs[0, 0, 0] = 255
        imgs[1, 1, 2] = 51
        write_idx_images(tmp_path / "i", imgs)
        write_idx_labels(tmp_path / "l", [3, 0])
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        assert (ds.n, ds.m, ds.n_classes) == (2, 6, 4)
        assert ds.features[0, 0] == 1.0 and ds.features[1, 5] == pytest.approx(0.2)

    def test_gzip(self, tmp_path):
        write_idx_labels(tmp_path / "l", [1, 0])
        (tmp_path / "l.gz").write_bytes(gzip.compress((tmp_path / "l").read_bytes()))
        assert load_idx_labels(tmp_path / "l.gz").tolist() == [1, 0]

    def test_count_mismatch(self, tmp_path):
        write_idx_images(tmp_path / "i", np.zeros((3, 2, 2)))
        write_idx_labels(tmp_path / "l", [1, 2])
        with pytest.raises(FormatError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_bad_magic_names_offset(self, tmp_path):
        write_idx_labels(tmp_path / "l", [1], magic=0x00000803)
        with pytest.raises(FormatError, match="offset 0"):
            load_idx_labels(tmp_path / "l")

    def test_truncated(self, tmp_path):
        (tmp_path / "l").write_bytes(struct.pack(">II", 0x801, 10) + b"\x01\x02")
        with pytest.raises(FormatError, match="truncated"):
            load_idx_labels(tmp_path / "l")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope"):
            load_idx_labels(tmp_path / "nope")


class TestSynth:
    def test_deterministic(self):
        a, b = synth_dataset(3, 50, 4, 3), synth_dataset(3, 50, 4, 3)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_single_class(self):
        assert synth_dataset(0, 20, 3, 1).labels.tolist() == [0] * 20

    def test_separable_enough_for_logreg(self):
        data = synth_dataset(0, 1000, 20, 2)
        cfg = TrainConfig(logistic_regression(20, 2), data, None, P=1, lr=0.1, epochs=5, batch_size=32, global_seed=0)
        assert train(cfg).epochs[-1][2] >= 0.95


class TestGrad:
    def test_zero_weight_logreg(self):
        model = logistic_regression(3, 2)
        X = np.array([[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0]])
        y = np.array([0, 1])
        loss, g = grad(model, np.zeros(model.dim), (X, y))
        assert loss == pytest.approx(math.log(2))
        np.testing.assert_allclose(g[-2:], 0.0, atol=1e-15)

    def test_single_sample_closed_form(self):
        model = logistic_regression(3, 3)
        rng = np.random.default_rng(0)
        params = rng.standard_normal(model.dim)
        x = rng.standard_normal(3)
        W, b = params[:9].reshape(3, 3), params[9:]
        z = x @ W + b
        p = np.exp(z - z.max())
        p /= p.sum()
        err = p - np.eye(3)[1]
        _, g = model.grad(params, x[None, :], np.array([1]))
        np.testing.assert_allclose(g[:9], np.outer(x, err).ravel(), rtol=1e-12)
        np.testing.assert_allclose(g[9:], err, rtol=1e-12)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_mlp_finite_differences(self, activation):
        model = MLP((20, 16, 2), activation)
        rng = np.random.default_rng(1)
        params = rng.standard_normal(model.dim) * 0.3
        X = rng.standard_normal((8, 20))
        y = rng.integers(0, 2, 8)
        _, g = model.grad(params, X, y)
        fd = central_diff_grad(lambda p: model.loss(p, X, y), params, h=1e-4)
        assert np.max(np.abs(g - fd)) <= 1e-5

    def test_deep_mlp_finite_differences(self):
        model = MLP((5, 7, 6, 3), "tanh")
        rng = np.random.default_rng(2)
        params = rng.standard_normal(model.dim) * 0.5
        X, y = rng.standard_normal((4, 5)), rng.integers(0, 3, 4)
        fd = central_diff_grad(lambda p: model.loss(p, X, y), params)
        assert np.max(np.abs(model.grad(params, X, y)[1] - fd)) <= 1e-5

    def test_fnn_stand_in_size(self):
        assert MLP((784, 100, 10)).dim == 79_510

    def test_full_batch_step_decreases_loss(self):
        data = synth_dataset(1, 500, 10, 3)
        model = MLP((10, 16, 3))
        p = model.init_params(0)
        loss, g = model.grad(p, data.features, data.labels)
        assert model.loss(p - 0.01 * g, data.features, data.labels) < loss

    def test_xavier_init(self):
        model = MLP((30, 20, 5))
        p = model.init_params(4)
        (W1, b1), (W2, b2) = model.unflatten(p)
        assert np.abs(W1).max() <= math.sqrt(6 / 50) and np.abs(W2).max() <= math.sqrt(6 / 25)
        assert not b1.any() and not b2.any()
        np.testing.assert_array_equal(p, model.init_params(4))

    def test_bell_shape_of_accumulated_gradient(self):
        data = synth_dataset(0, 4000, 50, 5, separation=2.0)
        model = MLP((50, 32, 5))
        seen = []
        cfg = TrainConfig(model, data, None, P=2, lr=0.05, iters=60, batch_size=32, global_seed=0)
        train(cfg, on_iteration=lambda t, us: seen.append(us[0]) if t == 59 else None)
        u = seen[0]
        c = u - u.mean()
        kurt = np.mean(c**4) / np.mean(c**2) ** 2 - 3
        assert kurt > 0
        lim = np.max(np.abs(u))
        counts, _ = np.histogram(u, bins=21, range=(-lim, lim))
        assert abs(int(np.argmax(counts)) - 10) <= 1
