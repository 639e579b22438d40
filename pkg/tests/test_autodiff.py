import numpy as np
import pytest

from acresnet import autodiff as ad
from acresnet import tensor


def test_sum_gradient_is_ones():
    x = ad.Variable(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
    grads = ad.backward(ad.sum_all(x))
    assert np.array_equal(grads[x], np.ones((3, 4)))


def test_relu_mask_gradient():
    x = ad.Variable(np.array([-1.0, 2.0]), requires_grad=True)
    ad.backward(ad.sum_all(ad.relu(x)))
    assert np.array_equal(x.grad, [0.0, 1.0])


def test_conv_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    x = ad.Variable(rng.standard_normal((1, 2, 4, 4)))
    k = ad.Variable(rng.standard_normal((2, 2, 3, 3)))

    def f(leaves):
        return ad.sum_all(ad.conv2d(leaves[0], leaves[1], stride=1, padding=1))

    report = ad.grad_check(f, [x, k], h=1e-3, tol=1e-4)
    assert report.passed, report.entries


def test_non_scalar_loss_rejected():
    x = ad.Variable(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(tensor.ShapeError):
        ad.backward(ad.relu(x))


def test_backward_twice_rejected():
    x = ad.Variable(np.ones(3), requires_grad=True)
    loss = ad.sum_all(x)
    ad.backward(loss)
    with pytest.raises(ad.TapeConsumedError):
        ad.backward(loss)


def test_gradient_accumulation_over_two_consumers():
    rng = np.random.default_rng(2)
    val = rng.standard_normal(5)

    x = ad.Variable(val.copy(), requires_grad=True)
    y = ad.add(ad.relu(x), ad.mul(x, x))
    ad.backward(ad.sum_all(y))
    combined = x.grad.copy()

    # graph surgery: each consumer alone, gradients must sum to the combined one
    x1 = ad.Variable(val.copy(), requires_grad=True)
    ad.backward(ad.sum_all(ad.relu(x1)))
    x2 = ad.Variable(val.copy(), requires_grad=True)
    ad.backward(ad.sum_all(ad.mul(x2, x2)))
    assert np.allclose(combined, x1.grad + x2.grad)


def test_each_record_visited_exactly_once():
    rng = np.random.default_rng(3)
    x = ad.Variable(rng.standard_normal((2, 3)), requires_grad=True)
    h = ad.relu(x)
    y = ad.add(h, h)
    z = ad.mul(y, y)
    loss = ad.sum_all(z)
    nodes = [v.node for v in (h, y, z, loss)]
    ad.backward(loss)
    assert all(n.calls == 1 for n in nodes)


def test_broadcast_add_gradient_unbroadcasts():
    a = ad.Variable(np.ones((2, 3)), requires_grad=True)
    b = ad.Variable(np.ones(3), requires_grad=True)
    ad.backward(ad.sum_all(ad.add(a, b)))
    assert np.array_equal(a.grad, np.ones((2, 3)))
    assert np.array_equal(b.grad, np.full(3, 2.0))


def test_grad_check_exact_for_linear_functional():
    x = ad.Variable(np.random.default_rng(4).standard_normal((3, 3)))
    report = ad.grad_check(lambda lv: ad.sum_all(lv[0]), [x])
    assert report.passed
    assert report.max_rel_err < 1e-10


def test_grad_check_flags_wrong_backward_rule():
    def bad_double(v):
        value = v.value * 2.0

        def bwd(g):
            return (g * 3.0,)  # deliberately wrong, true factor is 2

        return ad._from_op("bad_double", value, [v], bwd)

    x = ad.Variable(np.random.default_rng(5).standard_normal(4))
    report = ad.grad_check(lambda lv: ad.sum_all(bad_double(lv[0])), [x])
    assert not report.passed


def test_no_grad_suppresses_recording():
    x = ad.Variable(np.ones(3), requires_grad=True)
    with ad.no_grad():
        y = ad.relu(x)
    assert y.node is None and not y.requires_grad


def test_softmax_cross_entropy_out_of_range_label():
    logits = ad.Variable(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ad.softmax_cross_entropy(logits, np.array([0, 3]))
