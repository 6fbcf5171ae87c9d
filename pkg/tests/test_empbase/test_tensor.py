# tests/test_empbase/test_tensor.py
"""This module tests the differentiable tensor operations."""
import threading

import numpy as np

from . import BaseTestCase, FULL_ACCEPTANCE


class TestTensorValue(BaseTestCase):
    def setUp(self):
        super().setUp()
        self.T = self.empbase.tensor
        self.rng = np.random.default_rng(0)

    def param(self, *shape):
        return self.T.TensorValue(
            self.rng.normal(size=shape), requires_grad=True
        )

    def check(self, f, params, tol=1e-5):
        report = self.empbase.gradcheck.grad_check(f, params, tol=tol)
        self.assertTrue(report.passed, f"{report.worst}: {report.errors}")

    def test_arithmetic_gradients(self):
        T = self.T
        a = self.param(3, 4)
        b = self.param(4)
        c = T.TensorValue(self.rng.uniform(1.0, 2.0, size=(3, 4)))

        def f():
            out = (a * b - a / c + 2.0 * a) * T.tanh(a) + T.sigmoid(b)
            out = out + T.exp(a * 0.1) + T.power(c + a * a, 0.5)
            return T.reduce_sum(out * out) + T.reduce_mean(T.neg(a))

        self.check(f, [a, b])

    def test_matmul_broadcast_gradients(self):
        T = self.T
        a = self.param(2, 3, 4)
        b = self.param(4, 5)
        self.check(lambda: T.reduce_sum(T.matmul(a, b)), [a, b])

    def test_shape_gradients(self):
        T = self.T
        a = self.param(2, 3, 4)
        b = self.param(2, 3, 2)

        def f():
            joined = T.concat([a, b], axis=-1)
            moved = joined.transpose(0, 2, 1).reshape(2, 18)
            picked = moved[:, 1:7] * moved[0, 2:8]
            return T.reduce_sum(picked * picked) + T.reduce_sum(
                T.swap_last(joined)[..., 0]
            )

        self.check(f, [a, b])

    def test_fancy_index_gradients(self):
        T = self.T
        a = self.param(5, 3)
        rows = np.array([0, 2, 2, 4])

        def f():
            return T.reduce_sum(a[rows] * a[rows])

        self.check(f, [a])

    def test_probability_gradients(self):
        T = self.T
        a = self.param(3, 5)
        mask = np.array(
            [[1, 1, 0, 1, 0], [1, 1, 1, 1, 1], [0, 1, 0, 0, 0]], dtype=bool
        )
        weights = self.rng.normal(size=(3, 5))

        def f():
            probs = T.softmax(a, mask=mask)
            logs = T.log_softmax(a)
            unit = T.normalize(a)
            return (
                T.reduce_sum(probs * weights)
                + T.reduce_sum(logs * weights)
                + T.reduce_sum(unit * weights)
            )

        self.check(f, [a])

    def test_loss_gradients(self):
        T = self.T
        logits = self.param(4, 6)
        target = np.array([0, 5, 2, 2])
        mask = np.array([True, True, False, True])
        soft = self.rng.dirichlet(np.ones(6), size=4)

        def f():
            probs = T.softmax(logits)
            return T.cross_entropy(probs, target, mask) + (
                T.soft_cross_entropy(soft, probs)
            )

        self.check(f, [logits])

    def test_cosine_similarity(self):
        T = self.T
        a = self.param(2, 3, 4)
        b = self.param(5, 4)
        sims = T.cosine_similarity(a, b).data
        manual = np.einsum(
            "bnd,kd->bnk",
            a.data / np.linalg.norm(a.data, axis=-1, keepdims=True),
            b.data / np.linalg.norm(b.data, axis=-1, keepdims=True),
        )
        np.testing.assert_allclose(sims, manual, atol=1e-12)
        self.assertTrue(np.all(np.abs(sims) <= 1.0 + 1e-12))
        self.check(lambda: T.reduce_sum(T.cosine_similarity(a, b)), [a, b])

        # zero rows are similar to nothing
        zeros = T.TensorValue(np.zeros((1, 4)))
        self.assertTrue(np.all(T.cosine_similarity(zeros, b).data == 0.0))

    def test_embedding_padding_row(self):
        T = self.T
        table = self.param(6, 3)
        ids = np.array([[1, 0, 2], [0, 0, 5]])
        out = T.embedding(table, ids, padding_idx=0)
        np.testing.assert_array_equal(out.data, table.data[ids])
        T.reduce_sum(out).backward()
        np.testing.assert_array_equal(table.grad[0], np.zeros(3))
        np.testing.assert_array_equal(table.grad[1], np.ones(3))
        np.testing.assert_array_equal(table.grad[3], np.zeros(3))

        self.assertRaises(
            self.empbase.errors.DataError,
            T.embedding,
            table,
            np.array([6]),
        )

    def test_scatter_sum(self):
        T = self.T
        src = self.param(2, 3, 4)
        index = np.array([[0, 2, 2, 5], [1, 1, 1, 0]])
        out = T.scatter_sum(src, index, 6)
        self.assertTupleEqual(out.shape, (2, 3, 6))
        np.testing.assert_allclose(
            out.data[0, :, 2], src.data[0, :, 1] + src.data[0, :, 2]
        )
        np.testing.assert_allclose(
            out.data[1, :, 1], src.data[1, :, :3].sum(-1)
        )
        np.testing.assert_array_equal(out.data[1, :, 2:], 0.0)
        weights = self.rng.normal(size=(2, 3, 6))
        self.check(
            lambda: T.reduce_sum(T.scatter_sum(src, index, 6) * weights),
            [src],
        )

    def test_masked_softmax(self):
        """Masked entries get exactly zero; rows sum to one."""
        T = self.T
        rounds = 1000 if FULL_ACCEPTANCE else 50
        for _ in range(rounds):
            logits = self.rng.normal(scale=5.0, size=(4, 7))
            mask = self.rng.random((4, 7)) > 0.4
            mask[0] = False
            mask[1, 3] = True
            probs = T.softmax(T.TensorValue(logits), mask=mask).data
            self.assertTrue(np.all(probs[~mask] == 0.0))
            np.testing.assert_array_equal(probs[0], np.zeros(7))
            sums = probs[1:].sum(axis=-1)
            has_keys = mask[1:].any(axis=-1)
            np.testing.assert_allclose(sums[has_keys], 1.0, atol=1e-9)

    def test_log_clamps(self):
        T = self.T
        a = T.TensorValue(np.array([0.0, 1.0]), requires_grad=True)
        out = T.log(a)
        self.assertAlmostEqual(out.data[0], np.log(T.LOG_EPS))
        T.reduce_sum(out).backward()
        self.assertEqual(a.grad[0], 0.0)
        self.assertEqual(a.grad[1], 1.0)

    def test_shape_errors(self):
        T = self.T
        ShapeError = self.empbase.errors.ShapeError
        a = T.TensorValue(np.ones((2, 3)))
        b = T.TensorValue(np.ones((4, 2)))
        self.assertRaises(ShapeError, T.matmul, a, b)
        self.assertRaises(ShapeError, T.add, a, b)
        self.assertRaises(ShapeError, T.concat, [a, b], 0)
        self.assertRaises(ShapeError, T.pick, a, np.zeros(3, dtype=int))
        try:
            T.matmul(a, b)
        except ShapeError as exc:
            self.assertIn("(2, 3)", str(exc))
            self.assertIn("(4, 2)", str(exc))

        c = self.param(2, 2)
        self.assertRaises(ShapeError, (c * 2.0).backward)

    def test_accumulation_over_shared_nodes(self):
        T = self.T
        a = T.TensorValue(np.array([2.0]), requires_grad=True)
        b = a * a
        out = T.reduce_sum(b + b * a)
        out.backward()
        # d/da (a^2 + a^3) = 2a + 3a^2
        self.assertAlmostEqual(a.grad[0], 2 * 2.0 + 3 * 4.0)

    def test_no_grad(self):
        T = self.T
        a = self.param(2, 2)
        with T.no_grad():
            self.assertFalse(T.is_grad_enabled())
            out = a * a
        self.assertTrue(T.is_grad_enabled())
        self.assertFalse(out.requires_grad)
        self.assertTrue((a * a).requires_grad)

        # the switch belongs to one thread
        seen = []
        with T.no_grad():
            thread = threading.Thread(
                target=lambda: seen.append(T.is_grad_enabled())
            )
            thread.start()
            thread.join()
        self.assertListEqual(seen, [True])

    def test_dropout(self):
        T = self.T
        a = self.param(200, 50)
        self.assertIs(T.dropout(a, 0.0, self.rng), a)
        with T.no_grad():
            self.assertIs(T.dropout(a, 0.5, self.rng), a)
        out = T.dropout(a, 0.5, self.rng).data
        dropped = out == 0.0
        self.assertTrue(0.4 < dropped.mean() < 0.6)
        np.testing.assert_allclose(out[~dropped], 2.0 * a.data[~dropped])

    def test_detach(self):
        T = self.T
        a = self.param(3)
        out = T.detach(a * 2.0)
        self.assertFalse(out.requires_grad)
        np.testing.assert_array_equal(out.data, 2.0 * a.data)
