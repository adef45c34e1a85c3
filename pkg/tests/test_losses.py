import math

import numpy as np
import pytest

from sedlab.errors import InvalidInputError
from sedlab.losses import (
    BatchLayout,
    bce,
    bce_grad,
    loss_crst,
    loss_ict,
    loss_mt,
    loss_srst,
    loss_supervised,
    mse,
    mse_grad,
)

LAYOUT = BatchLayout(n_strong=2, n_weak=2, n_unlabeled=3)
T_OUT, C = 6, 3


def random_batch(rng, layout=LAYOUT):
    pred = rng.uniform(0.05, 0.95, (layout.total, T_OUT, C))
    y_strong = (rng.random((layout.n_strong, T_OUT, C)) < 0.4).astype(float)
    y_weak = (rng.random((layout.n_weak, C)) < 0.5).astype(float)
    return pred, y_strong, y_weak


def loss_grad_fd(loss_fn, pred, rng, tol=1e-6, n_probe=60):
    """FD check of d(total)/d(pred) at interior points.

    A directional derivative carries the 1e-6 relative tolerance (its
    magnitude is far above float64 round-off); per-coordinate checks get
    a small absolute floor so round-off on near-zero entries cannot fail
    them spuriously.
    """
    _, dpred = loss_fn(pred)
    direction = rng.standard_normal(pred.shape)
    direction /= np.linalg.norm(direction)
    h = 1e-6
    up = loss_fn(pred + h * direction)[0].total
    down = loss_fn(pred - h * direction)[0].total
    directional = (up - down) / (2 * h)
    analytic = float(np.sum(dpred * direction))
    assert abs(directional - analytic) <= tol * max(abs(directional), abs(analytic), 1e-8)

    flat = pred.reshape(-1)
    gflat = dpred.reshape(-1)
    idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        per_up = loss_fn(pred)[0].total
        flat[i] = orig - h
        per_down = loss_fn(pred)[0].total
        flat[i] = orig
        num = (per_up - per_down) / (2 * h)
        assert abs(num - gflat[i]) <= tol * max(abs(num), abs(gflat[i]), 1e-3)


class TestBce:
    def test_matching_binary_is_near_zero(self):
        target = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert bce(target, target) < 1e-10

    def test_half_everywhere_is_ln2(self):
        pred = np.full((4, 5), 0.5)
        assert bce(pred, np.ones((4, 5))) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_matches_scalar_oracle(self, rng):
        pred = rng.uniform(0.01, 0.99, (3, 4))
        target = rng.random((3, 4))
        acc = 0.0
        for i in range(3):
            for j in range(4):
                acc -= target[i, j] * math.log(pred[i, j]) + (1 - target[i, j]) * math.log(1 - pred[i, j])
        assert bce(pred, target) == pytest.approx(acc / 12, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            bce(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_grad_matches_fd(self, rng):
        pred = rng.uniform(0.1, 0.9, (3, 4))
        target = rng.random((3, 4))
        g = bce_grad(pred, target)
        h = 1e-7
        for i in range(3):
            for j in range(4):
                up, down = pred.copy(), pred.copy()
                up[i, j] += h
                down[i, j] -= h
                num = (bce(up, target) - bce(down, target)) / (2 * h)
                assert abs(num - g[i, j]) < 1e-6 * max(abs(num), 1.0)


class TestMse:
    def test_identical_zero(self, rng):
        x = rng.random((4, 4))
        assert mse(x, x) == 0.0

    def test_constant_offset(self, rng):
        x = rng.random((4, 4))
        assert mse(x + 0.3, x) == pytest.approx(0.09, abs=1e-12)

    def test_matches_scalar_oracle(self, rng):
        a, b = rng.random(10), rng.random(10)
        acc = sum((a[i] - b[i]) ** 2 for i in range(10)) / 10
        assert mse(a, b) == pytest.approx(acc, abs=1e-12)

    def test_grad(self, rng):
        a, b = rng.random(6), rng.random(6)
        np.testing.assert_allclose(mse_grad(a, b), 2 * (a - b) / 6, atol=1e-15)


class TestSupervised:
    def test_strong_only(self, rng):
        layout = BatchLayout(2, 0, 0)
        pred = rng.uniform(0.1, 0.9, (2, T_OUT, C))
        y_strong = (rng.random((2, T_OUT, C)) < 0.5).astype(float)
        bd, dpred = loss_supervised(pred, y_strong, None, layout)
        assert bd.total == pytest.approx(bce(pred, y_strong))
        assert bd.weak_bce == 0.0

    def test_empty_weak_term_zero(self, rng):
        pred, y_strong, _ = random_batch(rng, BatchLayout(2, 0, 5))
        bd, _ = loss_supervised(pred, y_strong, None, BatchLayout(2, 0, 5))
        assert bd.weak_bce == 0.0

    def test_weak_term_is_clip_pooled(self, rng):
        layout = BatchLayout(0, 2, 0)
        pred = rng.uniform(0.1, 0.9, (2, T_OUT, C))
        y_weak = (rng.random((2, C)) < 0.5).astype(float)
        bd, _ = loss_supervised(pred, None, y_weak, layout)
        assert bd.total == pytest.approx(bce(pred.mean(axis=1), y_weak))

    def test_no_labels_rejected(self, rng):
        with pytest.raises(InvalidInputError):
            loss_supervised(rng.random((2, T_OUT, C)), None, None, BatchLayout(0, 0, 2))

    def test_total_equals_parts(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        bd, _ = loss_supervised(pred, y_strong, y_weak, LAYOUT)
        assert bd.total == pytest.approx(bd.strong_bce + bd.weak_bce + bd.expectation, abs=1e-12)

    def test_grad_fd(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        loss_grad_fd(lambda p: loss_supervised(p, y_strong, y_weak, LAYOUT), pred, rng)


class TestMeanTeacher:
    def test_zero_delta_reduces_to_supervised(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        teacher = rng.uniform(0.1, 0.9, pred.shape)
        bd, _ = loss_mt(pred, teacher, y_strong, y_weak, LAYOUT, delta=0.0)
        sup, _ = loss_supervised(pred, y_strong, y_weak, LAYOUT)
        assert bd.total == pytest.approx(sup.total, abs=1e-12)

    def test_matching_teacher_zero_consistency(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        bd, _ = loss_mt(pred, pred.copy(), y_strong, y_weak, LAYOUT, delta=2.0)
        assert bd.expectation == 0.0

    def test_matches_scalar_recomputation(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        teacher = rng.uniform(0.1, 0.9, pred.shape)
        delta = 1.3
        bd, _ = loss_mt(pred, teacher, y_strong, y_weak, LAYOUT, delta=delta)
        expected = (
            bce(pred[LAYOUT.strong], y_strong)
            + bce(pred[LAYOUT.weak].mean(axis=1), y_weak)
            + delta * mse(pred, teacher)
        )
        assert bd.total == pytest.approx(expected, abs=1e-12)

    def test_grad_fd(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        teacher = rng.uniform(0.1, 0.9, pred.shape)
        loss_grad_fd(lambda p: loss_mt(p, teacher, y_strong, y_weak, LAYOUT, 1.7), pred, rng)


class TestIct:
    def test_lambda_one_pairs_with_first_teacher(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        t1 = rng.uniform(0.1, 0.9, (3, T_OUT, C))
        t2 = rng.uniform(0.1, 0.9, (3, T_OUT, C))
        bd, _ = loss_ict(pred, t1, t2, 1.0, y_strong, y_weak, LAYOUT, delta=1.0)
        assert bd.expectation == pytest.approx(mse(pred[LAYOUT.unlabeled], t1), abs=1e-12)

    def test_same_inputs_reduce_to_direct_mse(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        t1 = rng.uniform(0.1, 0.9, (3, T_OUT, C))
        bd, _ = loss_ict(pred, t1, t1.copy(), 0.4, y_strong, y_weak, LAYOUT, delta=1.0)
        assert bd.expectation == pytest.approx(mse(pred[LAYOUT.unlabeled], t1), abs=1e-12)

    def test_grad_fd(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        t1 = rng.uniform(0.1, 0.9, (3, T_OUT, C))
        t2 = rng.uniform(0.1, 0.9, (3, T_OUT, C))
        loss_grad_fd(
            lambda p: loss_ict(p, t1, t2, 0.3, y_strong, y_weak, LAYOUT, 2.0), pred, rng
        )

    def test_lambda_range_checked(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        t = rng.random((3, T_OUT, C))
        with pytest.raises(InvalidInputError):
            loss_ict(pred, t, t, 1.2, y_strong, y_weak, LAYOUT, 1.0)


class TestSrst:
    def test_weight_cap_constant(self, rng):
        from sedlab.losses import SELF_TRAIN_WEIGHT_CAP

        assert SELF_TRAIN_WEIGHT_CAP == 5.0
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = np.concatenate([y_strong, rng.random((5, T_OUT, C))])
        # perfect pseudo labels on strong -> zero denominator -> cap
        bd, _ = loss_srst(pred, np.clip(pseudo, 0, 1), y_strong, y_weak, LAYOUT, omega=3.0)
        assert bd.weights["gamma"] == 5.0

    def test_pseudo_equals_pred_zeroes_expectation(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        bd, _ = loss_srst(pred, pred.copy(), y_strong, y_weak, LAYOUT, omega=3.0)
        assert bd.expectation == 0.0

    def test_matches_scalar_recomputation(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = rng.uniform(0.1, 0.9, pred.shape)
        omega = 2.0
        bd, _ = loss_srst(pred, pseudo, y_strong, y_weak, LAYOUT, omega=omega)
        gamma = min(omega / bce(pseudo[LAYOUT.strong], y_strong), 5.0)
        expected = (
            bce(pred[LAYOUT.strong], y_strong)
            + bce(pred[LAYOUT.weak].mean(axis=1), y_weak)
            + gamma * mse(pred[LAYOUT.weak_and_unlabeled], pseudo[LAYOUT.weak_and_unlabeled])
        )
        assert bd.total == pytest.approx(expected, abs=1e-12)

    def test_grad_fd(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = rng.uniform(0.1, 0.9, pred.shape)
        loss_grad_fd(lambda p: loss_srst(p, pseudo, y_strong, y_weak, LAYOUT, 2.5), pred, rng)


class TestCrst:
    def test_zero_reliability_reduces_to_supervised(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = rng.uniform(0.1, 0.9, pred.shape)
        bd, _ = loss_crst(pred, pseudo, y_strong, y_weak, LAYOUT, 0.0, 0.0)
        sup, _ = loss_supervised(pred, y_strong, y_weak, LAYOUT)
        assert bd.total == pytest.approx(sup.total, abs=1e-12)

    def test_pseudo_equals_pred_zeroes_expectation(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        bd, _ = loss_crst(pred, pred.copy(), y_strong, y_weak, LAYOUT, 1.5, 0.5)
        assert bd.expectation == 0.0

    def test_matches_scalar_recomputation(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = rng.uniform(0.1, 0.9, pred.shape)
        gs, gw = 1.2, 0.8
        bd, _ = loss_crst(pred, pseudo, y_strong, y_weak, LAYOUT, gs, gw)
        expected = (
            bce(pred[LAYOUT.strong], y_strong)
            + bce(pred[LAYOUT.weak].mean(axis=1), y_weak)
            + gs * mse(pred[LAYOUT.unlabeled], pseudo[LAYOUT.unlabeled])
            + gw * mse(pred[LAYOUT.weak], pseudo[LAYOUT.weak])
        )
        assert bd.total == pytest.approx(expected, abs=1e-12)

    def test_sides_symmetric(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = rng.uniform(0.1, 0.9, pred.shape)
        one, _ = loss_crst(pred, pseudo, y_strong, y_weak, LAYOUT, 1.0, 0.5, side="I")
        two, _ = loss_crst(pred, pseudo, y_strong, y_weak, LAYOUT, 1.0, 0.5, side="II")
        assert one.total == two.total

    def test_missing_pseudo_rejected(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        with pytest.raises(InvalidInputError):
            loss_crst(pred, None, y_strong, y_weak, LAYOUT, 1.0, 1.0)

    def test_grad_fd(self, rng):
        pred, y_strong, y_weak = random_batch(rng)
        pseudo = rng.uniform(0.1, 0.9, pred.shape)
        loss_grad_fd(lambda p: loss_crst(p, pseudo, y_strong, y_weak, LAYOUT, 1.2, 0.7), pred, rng)

    def test_nonnegative_totals(self, rng):
        for _ in range(10):
            pred, y_strong, y_weak = random_batch(rng)
            pseudo = rng.uniform(0.1, 0.9, pred.shape)
            bd, _ = loss_crst(pred, pseudo, y_strong, y_weak, LAYOUT, 1.0, 1.0)
            assert bd.total >= 0.0
