"""Residual blocks: the classic identity-shortcut form and the accumulated
form, where the additive term is a running sum of batch-normalized block
inputs maintained in a single accumulator variable.

Accumulator semantics:
  - same-shape block: the block's own BN of its input is folded into the
    accumulator (fresh start when the accumulator is empty or holds
    tensors of a different shape), and the sum joins the block output.
  - downsampling block (stride 2, channel doubling): the accumulated sum
    cannot be added across the shape change, so the block falls back to a
    projection shortcut and leaves the accumulator untouched; the next
    block then reinitializes it from its freshly-shaped input.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import BatchNormLayer, Conv2dLayer
from .tensor import ShapeError


@dataclass(frozen=True)
class BlockSpec:
    in_channels: int
    out_channels: int
    stride: int = 1
    kind: str = "classic"

    def __post_init__(self):
        if self.kind not in ("classic", "accumulated"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.stride not in (1, 2):
            raise ValueError(f"block stride must be 1 or 2, got {self.stride}")
        if self.stride == 2 and self.out_channels != 2 * self.in_channels:
            raise ValueError("stride-2 blocks must double the channel count")
        if self.stride == 1 and self.out_channels != self.in_channels:
            raise ValueError("stride-1 blocks must preserve the channel count")

    @property
    def changes_shape(self):
        return self.stride != 1 or self.out_channels != self.in_channels


class ResidualAccumulator:
    """Running sum of batch-normalized block inputs since the last shape change."""

    def __init__(self, record_terms=False):
        self.value = None
        self.tag = None
        self.reinit_count = 0
        self.record_terms = record_terms
        self.terms = []
        self.history = []

    def fold(self, bn_out, tag):
        if self.value is None or tag != self.tag:
            self.value = bn_out
            self.tag = tag
            self.reinit_count += 1
            if self.record_terms:
                self.terms = [bn_out.value.copy()]
        else:
            self.value = ad.add(self.value, bn_out)
            if self.record_terms:
                self.terms.append(bn_out.value.copy())
        if self.record_terms:
            self.history.append((self.value.value.copy(), tuple(self.terms)))
        return self.value


class ResidualBlock:
    """Two 3x3 conv/BN layers (F) plus the residual path chosen by the spec."""

    def __init__(self, spec, rng, dtype=np.float32):
        self.spec = spec
        self.conv1 = Conv2dLayer(spec.in_channels, spec.out_channels, 3, spec.stride, 1,
                                 rng, dtype)
        self.bn1 = BatchNormLayer(spec.out_channels, dtype=dtype)
        self.conv2 = Conv2dLayer(spec.out_channels, spec.out_channels, 3, 1, 1, rng, dtype)
        self.bn2 = BatchNormLayer(spec.out_channels, dtype=dtype)
        self.projection = None
        if spec.changes_shape:
            self.projection = Conv2dLayer(spec.in_channels, spec.out_channels, 1,
                                          spec.stride, 0, rng, dtype)
        self.bn_acc = None
        if spec.kind == "accumulated":
            self.bn_acc = BatchNormLayer(spec.in_channels, dtype=dtype)

    def residual_function(self, x, training=False):
        h = self.conv1.forward(x)
        h = self.bn1.forward(h, training)
        h = ad.relu(h)
        h = self.conv2.forward(h)
        return self.bn2.forward(h, training)

    def _check_input(self, x):
        if x.value.ndim != 4 or x.value.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"block expects N,{self.spec.in_channels},H,W input, got {x.value.shape}")

    def shortcut(self, x):
        if self.projection is not None:
            return self.projection.forward(x)
        return x

    def forward(self, x, training=False, acc=None, ablate_accumulator=False):
        x = ad.as_variable(x)
        self._check_input(x)
        f = self.residual_function(x, training)
        if self.spec.kind == "classic" or ablate_accumulator or self.spec.changes_shape:
            residual = self.shortcut(x)
        else:
            bn_out = self.bn_acc.forward(x, training)
            residual = acc.fold(bn_out, x.value.shape[1:])
        return ad.relu(ad.add(f, residual))

    def parameters(self):
        params = (self.conv1.parameters() + self.bn1.parameters()
                  + self.conv2.parameters() + self.bn2.parameters())
        if self.projection is not None:
            params += self.projection.parameters()
        if self.bn_acc is not None:
            params += self.bn_acc.parameters()
        return params


def classic_block_forward(x, block, training=False):
    if block.spec.kind != "classic":
        raise ValueError("classic_block_forward requires a classic block")
    return block.forward(x, training=training)


def accumulated_block_forward(x, acc, block, training=False):
    if block.spec.kind != "accumulated":
        raise ValueError("accumulated_block_forward requires an accumulated block")
    y = block.forward(x, training=training, acc=acc)
    return y, acc


def block_parameters(block):
    return list(block.parameters())
