"""Tests for the reverse-mode core: primitive semantics, backward rules
against central finite differences, and the grad_check harness itself."""

import numpy as np
import pytest

from vectraj import autodiff as ad
from vectraj.errors import EmptyReduction, NotScalarLoss, ShapeMismatch


def fd_gradient(f, x, h=1e-5):
    """Independent central-difference oracle for a scalar f of an array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def analytic_gradient(build, x):
    """Gradient of build(tensor) w.r.t. x via the tape."""
    p = ad.Tensor(x.copy(), requires_grad=True)
    with ad.Tape() as tape:
        loss = build(p)
    grads = ad.backward(tape, loss)
    return grads.get(p, np.zeros_like(x))


def check_op(build, x, tol=1e-4, h=1e-5):
    a = analytic_gradient(build, x)
    n = fd_gradient(lambda arr: float(build(ad.Tensor(arr)).data), x.copy(), h)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
    assert (np.abs(a - n) / denom).max() < tol


class TestForwardSemantics:
    def test_relu(self):
        out = ad.relu(ad.Tensor([-1.0, 0.0, 2.0]))
        assert out.data.tolist() == [0.0, 0.0, 2.0]

    def test_softmax_symmetry(self):
        out = ad.softmax(ad.Tensor([0.0, 0.0]))
        assert out.data.tolist() == [0.5, 0.5]

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = ad.Tensor(rng.normal(scale=5, size=(6, 9)))
        out = ad.softmax(x, axis=1)
        assert np.abs(out.data.sum(axis=1) - 1.0).max() < 1e-12

    def test_max_pool_coordinatewise(self):
        x = ad.Tensor([[1.0, 5.0], [3.0, 2.0]])
        out = ad.max_pool_over_set(x)
        assert out.data.tolist() == [[3.0, 5.0]]

    def test_max_pool_masked_entry_never_wins(self):
        x = ad.Tensor([[10.0, 10.0], [3.0, 2.0]])
        out = ad.max_pool_over_set(x, mask=np.array([False, True]))
        assert out.data.tolist() == [[3.0, 2.0]]

    def test_max_pool_empty_reduction(self):
        x = ad.Tensor([[1.0, 2.0]])
        with pytest.raises(EmptyReduction):
            ad.max_pool_over_set(x, mask=np.array([False]))

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))

    def test_huber_values(self):
        out = ad.huber(ad.Tensor([0.5, 10.0]), 1.0)
        assert out.data[0] == pytest.approx(0.125, abs=1e-15)
        assert out.data[1] == pytest.approx(9.5, abs=1e-15)

    def test_primitive_registry_dispatch(self):
        out = ad.primitive_forward("relu", ad.Tensor([-2.0, 2.0]))
        assert out.data.tolist() == [0.0, 2.0]
        with pytest.raises(ShapeMismatch):
            ad.primitive_forward("not_a_primitive", ad.Tensor([1.0]))


class TestBackward:
    def test_linear(self):
        w = ad.Tensor(np.array(2.0), requires_grad=True)
        with ad.Tape() as tape:
            loss = ad.mul(w, 3.0)
        grads = ad.backward(tape, loss)
        assert grads[w] == pytest.approx(3.0)

    def test_dead_relu_zero_gradient(self):
        w = ad.Tensor(np.array(-1.0), requires_grad=True)
        with ad.Tape() as tape:
            loss = ad.relu(w)
        grads = ad.backward(tape, loss)
        assert grads[w] == pytest.approx(0.0)

    def test_non_participating_param_gets_zeros(self):
        params = ad.Params()
        used = params.add("used", np.ones(3))
        params.add("unused", np.ones(2))
        with ad.Tape() as tape:
            loss = ad.reduce_sum(ad.mul(used, used))
        out = ad.grads_for(params, ad.backward(tape, loss))
        assert np.array_equal(out["unused"], np.zeros(2))
        assert np.allclose(out["used"], 2.0 * np.ones(3))

    def test_not_scalar_loss(self):
        w = ad.Tensor(np.ones(3), requires_grad=True)
        with ad.Tape() as tape:
            loss = ad.mul(w, 2.0)
        with pytest.raises(NotScalarLoss):
            ad.backward(tape, loss)

    def test_backward_deterministic(self):
        rng = np.random.default_rng(5)
        w = ad.Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        x = ad.Tensor(rng.normal(size=(3, 4)))

        def run():
            with ad.Tape() as tape:
                loss = ad.reduce_sum(ad.relu(ad.matmul(x, w)))
            return ad.backward(tape, loss)[w]

        g1, g2 = run(), run()
        assert np.array_equal(g1, g2)

    def test_max_pool_gradient_routes_to_first_argmax(self):
        x = ad.Tensor(np.array([[2.0, 1.0], [2.0, 3.0]]), requires_grad=True)
        with ad.Tape() as tape:
            loss = ad.reduce_sum(ad.max_pool_over_set(x))
        g = ad.backward(tape, loss)[x]
        # column 0 ties at 2.0 -> gradient goes to row 0 only
        assert g.tolist() == [[1.0, 0.0], [0.0, 1.0]]


# every primitive gets a finite-difference pass; inputs sampled away from
# kinks (|x| > 1e-3 for relu, |r| outside [delta-1e-3, delta+1e-3] for huber)
def _away_from(x, bad, half_width):
    shift = np.where(np.abs(np.abs(x) - bad) < half_width, 2 * half_width, 0.0)
    return x + np.sign(x) * shift


PRIMITIVE_CASES = [
    ("add", lambda p: ad.reduce_sum(ad.add(p, 1.5))),
    ("sub", lambda p: ad.reduce_sum(ad.sub(3.0, p))),
    ("mul", lambda p: ad.reduce_sum(ad.mul(p, p))),
    ("div", lambda p: ad.reduce_sum(ad.div(1.0, p))),
    ("neg", lambda p: ad.reduce_sum(ad.neg(p))),
    ("log", lambda p: ad.reduce_sum(ad.log(ad.add(ad.mul(p, p), 1.0)))),
    ("sqrt", lambda p: ad.reduce_sum(ad.sqrt(ad.add(ad.mul(p, p), 1.0)))),
    ("softmax", lambda p: ad.reduce_sum(ad.mul(ad.softmax(p, axis=-1),
                                               ad.constant(np.arange(12.0).reshape(3, 4))))),
    ("reduce_mean", lambda p: ad.reduce_mean(ad.mul(p, p))),
    ("reduce_sum_axis", lambda p: ad.reduce_sum(ad.mul(
        ad.reduce_sum(p, axis=0), ad.reduce_sum(p, axis=0)))),
    ("transpose", lambda p: ad.reduce_sum(ad.matmul(ad.transpose(p), p))),
    ("reshape", lambda p: ad.reduce_sum(ad.mul(ad.reshape(p, (4, 3)),
                                               ad.constant(np.arange(12.0).reshape(4, 3))))),
    ("concat", lambda p: ad.reduce_sum(ad.mul(
        ad.concat([p, ad.mul(p, 2.0)], axis=1),
        ad.constant(np.arange(24.0).reshape(3, 8))))),
    ("take", lambda p: ad.reduce_sum(ad.mul(
        ad.take(p, [0, 2, 2]), ad.constant(np.arange(12.0).reshape(3, 4))))),
    ("tile_rows", lambda p: ad.reduce_sum(ad.mul(
        ad.tile_rows(ad.reshape(p, (1, 12)), 3),
        ad.constant(np.arange(36.0).reshape(3, 12))))),
    ("matmul", lambda p: ad.reduce_sum(ad.matmul(p, ad.transpose(p)))),
    ("layer_norm", lambda p: ad.reduce_sum(ad.mul(
        ad.layer_norm(p, ad.constant(np.ones(4)), ad.constant(np.zeros(4))),
        ad.constant(np.arange(12.0).reshape(3, 4))))),
]


@pytest.mark.parametrize("name,build", PRIMITIVE_CASES, ids=[c[0] for c in PRIMITIVE_CASES])
def test_primitive_gradients_match_finite_differences(name, build):
    rng = np.random.default_rng(hash(name) % 2**32)
    x = rng.normal(scale=1.0, size=(3, 4)) + 0.1
    check_op(build, x, tol=1e-4)


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(11)
    x = _away_from(rng.normal(size=(3, 4)), 0.0, 1e-3)
    check_op(lambda p: ad.reduce_sum(ad.mul(ad.relu(p),
                                            ad.constant(np.arange(12.0).reshape(3, 4)))),
             x, tol=1e-2)


def test_huber_gradient_away_from_kink():
    rng = np.random.default_rng(12)
    x = _away_from(rng.normal(scale=2.0, size=(3, 4)), 1.0, 2e-3)
    check_op(lambda p: ad.reduce_sum(ad.huber(p, 1.0)), x, tol=1e-4)


def test_max_pool_gradient_fd():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(6, 3))
    ids = np.array([0, 0, 1, 1, 1, 0], dtype=np.int64)
    check_op(lambda p: ad.reduce_sum(ad.mul(
        ad.max_pool_over_set(p, set_ids=ids, n_sets=2),
        ad.constant(np.arange(6.0).reshape(2, 3)))), x, tol=1e-4)


def test_two_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(21)
    params = ad.Params()
    ad.init_mlp2(params, "mlp", 5, 8, 2, rng)
    x = ad.constant(rng.normal(size=(4, 5)))
    target = rng.normal(size=(4, 2))

    def f(p):
        out = ad.mlp2(x, p, "mlp")
        diff = ad.sub(out, ad.constant(target))
        return ad.reduce_mean(ad.mul(diff, diff))

    report = ad.grad_check(f, params, h=1e-5, tol=1e-4)
    assert report.passed, "\n".join(report.lines())


class TestGradCheckHarness:
    def test_quadratic_exact(self):
        params = ad.Params()
        params.add("w", np.array([1.0, -2.0, 3.0]))

        def f(p):
            return ad.mul(ad.reduce_sum(ad.mul(p["w"], p["w"])), 0.5)

        report = ad.grad_check(f, params, h=1e-5, tol=1e-4)
        assert report.passed
        assert report.worst() < 1e-9

    def test_softmax_ce_composite(self):
        rng = np.random.default_rng(9)
        params = ad.Params()
        params.add("logits", rng.normal(size=(7,)))
        labels = rng.dirichlet(np.ones(7))

        def f(p):
            logp = ad.log(ad.softmax(p["logits"], axis=-1))
            return ad.neg(ad.reduce_sum(ad.mul(ad.constant(labels), logp)))

        report = ad.grad_check(f, params, h=1e-5, tol=1e-4)
        assert report.passed, "\n".join(report.lines())

    def test_wrong_gradient_detected(self):
        params = ad.Params()
        w = params.add("w", np.array([0.7]))

        def f(p):
            # deliberately corrupt rule: forward is w^2 but vjp claims 3w
            t = p["w"]
            out = ad.Tensor(t.data * t.data, requires_grad=True,
                            tape=ad._active_tape())
            tape = ad._active_tape()
            if tape is not None:
                tape.nodes.append(ad._Node(out, (t,), (lambda g: g * 3.0 * t.data,)))
            return ad.reduce_sum(out)

        report = ad.grad_check(f, params, h=1e-5, tol=1e-4)
        assert not report.passed
