"""Shared test helpers, including the brute-force convolution oracle.

The oracle is written as direct quadruple loops over the output, entirely
independent of the package's lowered conv2d kernel.
"""

import numpy as np


def conv2d_reference(x, kernel, stride=1, padding=0):
    """Direct-loop 2-D convolution oracle (zero padding, floor output size)."""
    n, c, h, w = x.shape
    cout, cin, kh, kw = kernel.shape
    assert cin == c
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for b in range(n):
        for co in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for dy in range(kh):
                            for dx in range(kw):
                                iy = oy * stride + dy - padding
                                ix = ox * stride + dx - padding
                                if 0 <= iy < h and 0 <= ix < w:
                                    acc += float(x[b, ci, iy, ix]) * float(kernel[co, ci, dy, dx])
                    out[b, co, oy, ox] = acc
    return out.astype(x.dtype)
