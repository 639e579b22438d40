"""Network assembly for the CIFAR-sized depth-6n+2 family, plus weight I/O.

Layout: 3x3 stem conv (16 channels) -> 3 stages of n blocks at 16/32/64
channels (stride-2 entry into stages 2 and 3) -> global average pool ->
dense 10-way head. Both variants draw their shared parameters from the
same seeded stream, so classic and accumulated models agree wherever
their structure overlaps.
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .blocks import BlockSpec, ResidualAccumulator, ResidualBlock
from .layers import BatchNormLayer, Conv2dLayer, DenseLayer
from .tensor import ShapeError

WEIGHT_MAGIC = b"ACRN"
WEIGHT_VERSION = 1
_VARIANTS = ("classic", "accumulated")


class WeightFormatError(ValueError):
    """Raised on malformed, truncated, or mismatched weight files."""


@dataclass(frozen=True)
class ModelSpec:
    depth: int = 32
    variant: str = "classic"
    num_classes: int = 10
    stage_channels: tuple = (16, 32, 64)

    def __post_init__(self):
        if self.depth < 8 or self.depth % 6 != 2:
            raise ValueError(
                f"depth must be of the form 6n+2 with n >= 1, got {self.depth}")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def blocks_per_stage(self):
        return (self.depth - 2) // 6

    @property
    def total_blocks(self):
        return 3 * self.blocks_per_stage


class Model:
    def __init__(self, spec, seed=0, dtype=np.float32):
        self.spec = spec
        self.seed = seed
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        stem_ch = spec.stage_channels[0]
        self.stem_conv = Conv2dLayer(3, stem_ch, 3, 1, 1, rng, dtype)
        self.stem_bn = BatchNormLayer(stem_ch, dtype=dtype)
        self.blocks = []
        in_ch = stem_ch
        for stage, ch in enumerate(spec.stage_channels):
            for i in range(spec.blocks_per_stage):
                stride = 2 if stage > 0 and i == 0 else 1
                bspec = BlockSpec(in_channels=in_ch, out_channels=ch, stride=stride,
                                  kind=spec.variant)
                self.blocks.append(ResidualBlock(bspec, rng, dtype))
                in_ch = ch
        self.head = DenseLayer(spec.stage_channels[-1], spec.num_classes, rng, dtype)
        self.last_accumulator = None

    def forward(self, x, training=False, record_accumulator=False):
        x = ad.as_variable(x)
        if x.value.ndim != 4 or x.value.shape[1:] != (3, 32, 32):
            raise ShapeError(f"model expects N,3,32,32 input, got {x.value.shape}")
        h = ad.relu(self.stem_bn.forward(self.stem_conv.forward(x), training))
        acc = ResidualAccumulator(record_terms=record_accumulator)
        self.last_accumulator = acc
        for block in self.blocks:
            h = block.forward(h, training=training, acc=acc)
        pooled = ad.global_avg_pool(h)
        return self.head.forward(pooled)

    def parameters(self):
        params = self.stem_conv.parameters() + self.stem_bn.parameters()
        for block in self.blocks:
            params += block.parameters()
        return params + self.head.parameters()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def batchnorm_layers(self):
        bns = [self.stem_bn]
        for block in self.blocks:
            bns += [block.bn1, block.bn2]
            if block.bn_acc is not None:
                bns.append(block.bn_acc)
        return bns

    def state_arrays(self):
        """All persisted tensors: parameters in registry order, then BN
        running statistics in layer order."""
        arrays = [p.value for p in self.parameters()]
        for bn in self.batchnorm_layers():
            arrays.append(bn.running_mean)
            arrays.append(bn.running_var)
        return arrays


def build_model(spec, seed=0, dtype=np.float32):
    return Model(spec, seed=seed, dtype=dtype)


def forward(model, x, training=False):
    return model.forward(x, training=training)


# ---------------------------------------------------------------------------
# weight serialization: magic, version u32, header, tensors as
# (rank u32, dims u32*rank, f32 little-endian payload)
# ---------------------------------------------------------------------------

def save_weights(model, path):
    buf = io.BytesIO()
    buf.write(WEIGHT_MAGIC)
    buf.write(struct.pack("<IIII", WEIGHT_VERSION, model.spec.depth,
                          _VARIANTS.index(model.spec.variant), model.spec.num_classes))
    arrays = model.state_arrays()
    buf.write(struct.pack("<I", len(arrays)))
    for arr in arrays:
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise WeightFormatError(f"weight file truncated while reading {what}")
    return data


def load_weights(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != WEIGHT_MAGIC:
            raise WeightFormatError(f"bad magic bytes {magic!r}, expected {WEIGHT_MAGIC!r}")
        version, depth, variant_idx, num_classes = struct.unpack(
            "<IIII", _read_exact(fh, 16, "header"))
        if version != WEIGHT_VERSION:
            raise WeightFormatError(f"unsupported weight format version {version}")
        if variant_idx >= len(_VARIANTS):
            raise WeightFormatError(f"unknown variant code {variant_idx}")
        try:
            spec = ModelSpec(depth=depth, variant=_VARIANTS[variant_idx],
                             num_classes=num_classes)
        except ValueError as exc:
            raise WeightFormatError(f"invalid model header: {exc}") from exc
        model = Model(spec, seed=0)
        expected = model.state_arrays()
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        if count != len(expected):
            raise WeightFormatError(
                f"weight file holds {count} tensors, model needs {len(expected)}")
        loaded = []
        for i, target in enumerate(expected):
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"tensor {i} rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, f"tensor {i} dims"))
            if dims != target.shape:
                raise WeightFormatError(
                    f"tensor {i}: file shape {dims} does not match model shape {target.shape}")
            n = int(np.prod(dims)) if rank else 1
            payload = _read_exact(fh, 4 * n, f"tensor {i} payload")
            loaded.append(np.frombuffer(payload, dtype="<f4").reshape(dims).copy())
        if fh.read(1):
            raise WeightFormatError("trailing bytes after final tensor")

    params = model.parameters()
    for p, arr in zip(params, loaded[: len(params)]):
        p.value = arr
    it = iter(loaded[len(params):])
    for bn in model.batchnorm_layers():
        bn.running_mean = next(it)
        bn.running_var = next(it)
    return model
