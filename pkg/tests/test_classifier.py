import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfdlr import classifier as clf
from mfdlr.errors import LabelError, ShapeError, SingularSystemError


def dense_ridge(X, Y, lam):
    return np.linalg.solve(X.T @ X + lam * np.eye(X.shape[1]), X.T @ Y)


class TestTrain:
    @given(st.integers(0, 2**31), st.integers(3, 12), st.integers(2, 5), st.floats(1e-3, 10.0))
    def test_matches_dense_solve(self, seed, n, c, lam):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, n))
        y = np.arange(40) % c
        model = clf.train(X, y, lam)
        np.testing.assert_allclose(model.W, dense_ridge(X, clf.one_hot(y, range(c)), lam), rtol=1e-8, atol=1e-10)
        assert clf.normal_equation_residual(model, X, y) <= 1e-10

    def test_identity_states(self):
        model = clf.train(np.eye(3), [0, 1, 2], lam=1.0)
        np.testing.assert_allclose(model.W, 0.5 * np.eye(3), rtol=1e-14)

    def test_zero_states(self):
        model = clf.train(np.zeros((4, 3)), [0, 1, 0, 1], lam=0.1)
        assert np.all(model.W == 0)

    def test_singular_without_regularization(self):
        with pytest.raises(SingularSystemError):
            clf.train(np.zeros((4, 3)), [0, 1, 0, 1], lam=0.0)

    def test_full_rank_unregularized_is_least_squares(self, rng):
        X = rng.normal(size=(30, 4))
        y = np.arange(30) % 3
        want = np.linalg.lstsq(X, clf.one_hot(y, range(3)), rcond=None)[0]
        np.testing.assert_allclose(clf.train(X, y, 0.0).W, want, rtol=1e-9)

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            clf.train(np.eye(2), [0, 1], -1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            clf.train(np.eye(3), [0, 1])

    def test_unknown_label(self):
        with pytest.raises(LabelError):
            clf.train(np.eye(3), [0, 1, 7], classes=[0, 1, 2])

    def test_default_lambda(self):
        X = np.full((5, 4), 2.0)
        assert clf.default_lambda(X) == pytest.approx(1e-3 * 80 / 4)
        assert clf.train(X, [0, 1, 0, 1, 0]).lam == pytest.approx(0.02)

    def test_weight_norm_shrinks_with_lambda(self, rng):
        X = rng.normal(size=(50, 8))
        y = np.arange(50) % 4
        norms = [np.linalg.norm(clf.train(X, y, lam).W) for lam in (1e-3, 1e-1, 1.0, 10.0, 1e3)]
        assert all(a > b for a, b in zip(norms, norms[1:]))

    def test_train_targets_zero_rows(self, rng):
        X = rng.normal(size=(20, 5))
        Y = np.zeros((20, 3))
        Y[:10, 1] = 1.0
        model = clf.train_targets(X, Y, 0.5, [4, 5, 6])
        np.testing.assert_allclose(model.W, dense_ridge(X, Y, 0.5), rtol=1e-10)
        assert model.classes == (4, 5, 6)
        with pytest.raises(ShapeError):
            clf.train_targets(X, Y[:, :2], 0.5, [4, 5, 6])


class TestPredict:
    def test_argmax_and_classes(self):
        model = clf.RidgeModel(W=np.eye(3), lam=1.0, classes=(10, 20, 30))
        dev, s = clf.predict(np.array([0.1, 0.9, 0.2]), model)
        assert dev == 20 and s.shape == (3,)

    def test_tie_first_class(self):
        model = clf.RidgeModel(W=np.eye(3), lam=1.0, classes=(10, 20, 30))
        assert clf.predict(np.array([0.5, 0.5, 0.5]), model)[0] == 10

    def test_dimension_check(self):
        model = clf.RidgeModel(W=np.eye(3), lam=1.0, classes=(0, 1, 2))
        with pytest.raises(ShapeError):
            clf.predict(np.ones(4), model)
        with pytest.raises(ShapeError):
            clf.predict(np.ones((2, 3)), model)

    def test_many_matches_single(self, rng):
        model = clf.RidgeModel(W=rng.normal(size=(6, 4)), lam=1.0, classes=(0, 1, 2, 3))
        X = rng.normal(size=(10, 6))
        pred, _ = clf.predict_many(X, model)
        assert list(pred) == [clf.predict(x, model)[0] for x in X]

    @given(st.integers(0, 2**31), st.floats(0.01, 100.0), st.floats(-5, 5))
    def test_argmax_invariant_to_positive_scale_and_shift(self, seed, a, b):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=7)
        assert np.argmax(a * s + b) == np.argmax(s)


class TestEntropy:
    def test_uniform(self):
        assert clf.entropy(np.zeros(20)) == pytest.approx(np.log(20), rel=1e-14)

    def test_peaked(self):
        assert clf.entropy(np.array([1000.0, 0.0, 0.0])) <= 1e-12

    def test_two_class_closed_form(self):
        p = 1 / (1 + np.exp(-1.0))
        want = -(p * np.log(p) + (1 - p) * np.log(1 - p))
        assert clf.entropy(np.array([1.0, 0.0])) == pytest.approx(want, rel=1e-14)

    def test_temperature_is_scaling(self, rng):
        s = rng.normal(size=5)
        assert clf.entropy(s, temperature=0.05) == pytest.approx(clf.entropy(s / 0.05), rel=1e-14)
        with pytest.raises(ValueError):
            clf.entropy(s, temperature=0.0)

    def test_batched_axis(self, rng):
        S = rng.normal(size=(3, 4, 6))
        out = clf.entropy(S, axis=-1)
        assert out.shape == (3, 4)
        assert out[1, 2] == pytest.approx(clf.entropy(S[1, 2]), rel=1e-14)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=25), st.randoms(use_true_random=False))
    def test_bounds_and_permutation(self, values, rnd):
        s = np.array(values)
        h = clf.entropy(s)
        assert -1e-12 <= h <= np.log(len(s)) + 1e-12
        perm = list(values)
        rnd.shuffle(perm)
        assert clf.entropy(np.array(perm)) == pytest.approx(h, abs=1e-12)
        assert clf.entropy(s + 3.7) == pytest.approx(h, abs=1e-12)
