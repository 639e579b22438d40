"""Dense float tensor kernels.

All activations use the N,C,H,W row-major layout. Kernels are plain
functions over numpy arrays and preserve the input dtype, so the same
code path serves float32 training and float64 gradient checking.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def elementwise_add(a, b):
    """Strict same-shape addition (the residual '+')."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise_add: shape mismatch {a.shape} vs {b.shape}")
    return a + b


def relu(x):
    return np.maximum(np.asarray(x), 0)


def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    return a @ b


def global_avg_pool(x):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected N,C,H,W input, got {x.shape}")
    return x.mean(axis=(2, 3))


def conv_output_size(h, w, kh, kw, stride, padding):
    """Spatial output dims for a 2-D convolution (floor convention)."""
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"conv2d: padding must be >= 0, got {padding}")
    if h + 2 * padding - kh < 0 or w + 2 * padding - kw < 0:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    return (h + 2 * padding - kh) // stride + 1, (w + 2 * padding - kw) // stride + 1


def im2col(x, kh, kw, stride, padding):
    """Lower input patches to a dense array of shape (N, Ho, Wo, C, kh, kw)."""
    n, c, h, w = x.shape
    ho, wo = conv_output_size(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (N,C,H',W',kh,kw)
    win = win[:, :, ::stride, ::stride][:, :, :ho, :wo]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))


def conv2d(x, kernel, stride=1, padding=0):
    """2-D cross-correlation with zero padding, via patch-matrix lowering."""
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input/kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    cout, cin, kh, kw = kernel.shape
    if cin != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {cin}")
    ho, wo = conv_output_size(h, w, kh, kw, stride, padding)
    cols = im2col(x, kh, kw, stride, padding).reshape(n * ho * wo, c * kh * kw)
    out = cols @ kernel.reshape(cout, -1).T
    return np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))


def conv2d_input_grad(dout, kernel, x_shape, stride=1, padding=0):
    """Gradient of conv2d w.r.t. its input (col2im scatter of the lowered grad)."""
    n, c, h, w = x_shape
    cout, _, kh, kw = kernel.shape
    _, _, ho, wo = dout.shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
    dcols = (dmat @ kernel.reshape(cout, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dout.dtype)
    for dy in range(kh):
        for dx in range(kw):
            dxp[:, :, dy : dy + stride * ho : stride, dx : dx + stride * wo : stride] += (
                dcols[:, :, :, :, dy, dx].transpose(0, 3, 1, 2)
            )
    if padding:
        dxp = dxp[:, :, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(dxp)


def conv2d_kernel_grad(dout, x, kernel_shape, stride=1, padding=0):
    """Gradient of conv2d w.r.t. its kernel."""
    cout, c, kh, kw = kernel_shape
    n, _, ho, wo = dout.shape
    cols = im2col(x, kh, kw, stride, padding).reshape(n * ho * wo, c * kh * kw)
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
    return (dmat.T @ cols).reshape(kernel_shape)
