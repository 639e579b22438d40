"""Named gradient checks used by the CLI and the acceptance suite.

Every check runs in float64 with central differences and compares the
analytic gradients of a small scalar loss against the numeric ones,
covering the input and every learned parameter.
"""

import numpy as np

from . import autodiff as ad
from .blocks import BlockSpec, ResidualAccumulator, ResidualBlock
from .layers import BatchNormLayer, Conv2dLayer, DenseLayer


def _rand(rng, shape, shift=0.0):
    return (rng.standard_normal(shape) + shift).astype(np.float64)


def _rng(seed, salt):
    # per-check salt keeps the default test points away from ReLU kinks,
    # where central differences are unreliable
    return np.random.default_rng([seed, salt])


def check_conv2d(seed=0, h=1e-3, tol=1e-4):
    rng = _rng(seed, 1)
    x = ad.Variable(_rand(rng, (1, 2, 4, 4)))
    k = ad.Variable(0.5 * _rand(rng, (3, 2, 3, 3)))

    def f(leaves):
        xv, kv = leaves
        return ad.sum_all(ad.conv2d(xv, kv, stride=2, padding=1))

    return ad.grad_check(f, [x, k], h=h, tol=tol, names=["input", "kernel"])


def check_batchnorm(seed=0, h=1e-3, tol=1e-4):
    rng = _rng(seed, 2)
    layer = BatchNormLayer(3, dtype=np.float64)
    x = ad.Variable(2.0 * _rand(rng, (2, 3, 4, 4)))
    gamma, beta = layer.gamma, layer.beta
    gamma.value = 1.0 + 0.2 * _rand(rng, (3,))
    beta.value = 0.2 * _rand(rng, (3,))

    def f(leaves):
        xv = leaves[0]
        # square the output so batch statistics carry nontrivial gradient
        out = layer.forward(xv, training=True)
        return ad.sum_all(ad.mul(out, out))

    return ad.grad_check(f, [x, gamma, beta], h=h, tol=tol,
                         names=["input", "gamma", "beta"])


def check_dense(seed=0, h=1e-3, tol=1e-4):
    rng = _rng(seed, 3)
    layer = DenseLayer(5, 3, rng, dtype=np.float64)
    x = ad.Variable(_rand(rng, (4, 5)))

    def f(leaves):
        xv = leaves[0]
        out = layer.forward(xv)
        return ad.sum_all(ad.mul(out, out))

    return ad.grad_check(f, [x, layer.weight, layer.bias], h=h, tol=tol,
                         names=["input", "weight", "bias"])


def check_softmax(seed=0, h=1e-3, tol=1e-4):
    rng = _rng(seed, 4)
    logits = ad.Variable(_rand(rng, (4, 6)))
    labels = rng.integers(0, 6, size=4)

    def f(leaves):
        return ad.softmax_cross_entropy(leaves[0], labels)

    return ad.grad_check(f, [logits], h=h, tol=tol, names=["logits"])


def _block_leaves(block, x):
    leaves = [x] + block.parameters()
    names = ["input"] + [f"param{i}" for i in range(len(block.parameters()))]
    return leaves, names


def check_classic_block(seed=0, h=1e-3, tol=1e-4):
    rng = _rng(seed, 5)
    block = ResidualBlock(BlockSpec(4, 4, 1, "classic"), rng, dtype=np.float64)
    x = ad.Variable(_rand(rng, (2, 4, 6, 6), shift=0.5))
    leaves, names = _block_leaves(block, x)

    def f(lv):
        out = block.forward(lv[0], training=True)
        return ad.sum_all(ad.mul(out, out))

    return ad.grad_check(f, leaves, h=h, tol=tol, names=names)


def check_accumulated_block(seed=0, h=1e-3, tol=1e-4):
    rng = _rng(seed, 23)
    b1 = ResidualBlock(BlockSpec(4, 4, 1, "accumulated"), rng, dtype=np.float64)
    b2 = ResidualBlock(BlockSpec(4, 4, 1, "accumulated"), rng, dtype=np.float64)
    x = ad.Variable(_rand(rng, (2, 4, 6, 6), shift=0.5))
    leaves = [x] + b1.parameters() + b2.parameters()
    names = (["input"] + [f"b1.param{i}" for i in range(len(b1.parameters()))]
             + [f"b2.param{i}" for i in range(len(b2.parameters()))])

    def f(lv):
        acc = ResidualAccumulator()
        h1 = b1.forward(lv[0], training=True, acc=acc)
        h2 = b2.forward(h1, training=True, acc=acc)
        return ad.sum_all(ad.mul(h2, h2))

    return ad.grad_check(f, leaves, h=h, tol=tol, names=names)


ALL_CHECKS = {
    "conv2d": check_conv2d,
    "batchnorm": check_batchnorm,
    "dense": check_dense,
    "softmax": check_softmax,
    "classic_block": check_classic_block,
    "accumulated_block": check_accumulated_block,
}


def run_checks(only=None, seed=0, h=1e-3, tol=1e-4):
    """Run the named checks (all by default); returns {name: report}."""
    names = [only] if only else list(ALL_CHECKS)
    unknown = [n for n in names if n not in ALL_CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s) {unknown}; available: {sorted(ALL_CHECKS)}")
    return {n: ALL_CHECKS[n](seed=seed, h=h, tol=tol) for n in names}
