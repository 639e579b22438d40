"""Parameterized layers: convolution, batch norm, dense, and the loss head.

Each layer owns its parameter Variables and exposes ``parameters()`` in a
stable order (running statistics excluded). He-normal initialization is
used for all weights; BN scale/shift start at 1/0.
"""

import numpy as np

from . import autodiff as ad
from .tensor import ShapeError


def he_normal(rng, shape, fan_in, dtype=np.float32):
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape).astype(dtype)


class Conv2dLayer:
    """3x3 / 1x1 convolution without bias (a BN always follows)."""

    def __init__(self, in_channels, out_channels, ksize, stride, padding, rng,
                 dtype=np.float32):
        fan_in = in_channels * ksize * ksize
        self.kernel = ad.Variable(
            he_normal(rng, (out_channels, in_channels, ksize, ksize), fan_in, dtype),
            requires_grad=True, name="conv.kernel")
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return ad.conv2d(x, self.kernel, self.stride, self.padding)

    def parameters(self):
        return [self.kernel]


class BatchNormLayer:
    """Per-channel batch normalization over N,H,W with running statistics.

    Training mode normalizes by current batch statistics (biased variance)
    and updates the running estimates (unbiased correction applied to the
    variance). Inference mode uses the running estimates.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = ad.Variable(np.ones(channels, dtype=dtype), requires_grad=True,
                                 name="bn.gamma")
        self.beta = ad.Variable(np.zeros(channels, dtype=dtype), requires_grad=True,
                                name="bn.beta")
        self.gamma.no_decay = True
        self.beta.no_decay = True
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, training=False):
        x = ad.as_variable(x)
        if x.value.ndim != 4 or x.value.shape[1] != self.channels:
            raise ShapeError(
                f"batchnorm: expected N,{self.channels},H,W input, got {x.value.shape}")
        n, c, h, w = x.value.shape
        if training:
            count = n * h * w
            if count < 2:
                raise ShapeError(
                    f"batchnorm: training mode needs N*H*W >= 2, got {count}")
            mu = ad.mean(x, axis=(0, 2, 3), keepdims=True)
            xc = ad.sub(x, mu)
            var = ad.mean(ad.mul(xc, xc), axis=(0, 2, 3), keepdims=True)
            xhat = ad.div(xc, ad.sqrt(ad.add(var, ad.as_variable(
                np.asarray(self.eps, dtype=x.value.dtype)))))
            m = self.momentum
            batch_mean = mu.value.reshape(c)
            batch_var = var.value.reshape(c)
            if count > 1:
                batch_var = batch_var * (count / (count - 1))
            self.running_mean = ((1 - m) * self.running_mean + m * batch_mean).astype(
                self.running_mean.dtype)
            self.running_var = ((1 - m) * self.running_var + m * batch_var).astype(
                self.running_var.dtype)
        else:
            rm = self.running_mean.reshape(1, c, 1, 1).astype(x.value.dtype)
            rv = self.running_var.reshape(1, c, 1, 1).astype(x.value.dtype)
            xhat = ad.div(ad.sub(x, ad.as_variable(rm)),
                          ad.as_variable(np.sqrt(rv + self.eps)))
        gamma = ad.reshape(self.gamma, (1, c, 1, 1))
        beta = ad.reshape(self.beta, (1, c, 1, 1))
        return ad.add(ad.mul(xhat, gamma), beta)

    def parameters(self):
        return [self.gamma, self.beta]


class DenseLayer:
    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        self.weight = ad.Variable(
            he_normal(rng, (out_features, in_features), in_features, dtype),
            requires_grad=True, name="dense.weight")
        self.bias = ad.Variable(np.zeros(out_features, dtype=dtype),
                                requires_grad=True, name="dense.bias")

    def forward(self, x):
        return ad.linear(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


def batchnorm_forward(x, layer, training=False):
    return layer.forward(x, training=training)


def softmax_cross_entropy(logits, labels):
    return ad.softmax_cross_entropy(logits, labels)


def layer_parameters(layer):
    return list(layer.parameters())
