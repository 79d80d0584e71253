"""Dense f32 tensor kernels: matrix multiply and im2col/col2im.

Tensors are C-contiguous numpy arrays (row-major, last index fastest),
float32 by default. All functions here are pure and preserve the input
dtype, so gradient checks can run the same code in float64.

Reproducibility: every kernel lowers to a fixed sequence of numpy/BLAS
calls, so repeated runs on one machine are bit-identical.
"""

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


def as_tensor(values, dtype=DTYPE) -> np.ndarray:
    """Coerce to a contiguous row-major array of the given dtype."""
    return np.ascontiguousarray(values, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[i, j] = sum_t a[i, t] * b[t, j] for 2-D a, b."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return np.matmul(a, b)


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    """Output extent of a valid/padded convolution; must be a positive integer."""
    span = size + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"convolution geometry does not tile: size={size} kernel={k} "
            f"stride={stride} pad={pad}"
        )
    return span // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Unfold a C x H x W image into a (C*kh*kw) x (Ho*Wo) patch matrix.

    Column j holds the receptive field of output position j (row-major over
    the output grid); within a column the layout is channel-major, then
    row-major over the kernel window. Padded positions contribute zeros.
    """
    if x.ndim != 3:
        raise ShapeError(f"im2col expects C x H x W input, got {x.shape}")
    c, h, w = x.shape
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    if pad > 0:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.empty((c, kh * kw, ho * wo), dtype=x.dtype)
    # one strided slice per kernel slot; avoids a huge gather index
    for ki in range(kh):
        for kj in range(kw):
            block = x[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride]
            out[:, ki * kw + kj, :] = block.reshape(c, ho * wo)
    return out.reshape(c * kh * kw, ho * wo)


def col2im(
    cols: np.ndarray,
    c: int,
    h: int,
    w: int,
    kh: int,
    kw: int,
    stride: int,
    pad: int,
) -> np.ndarray:
    """Adjoint of im2col: sum patch columns back into image coordinates.

    Overlapping contributions accumulate; anything that landed in the
    padding border is discarded.
    """
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(w, kw, stride, pad)
    if cols.shape != (c * kh * kw, ho * wo):
        raise ShapeError(
            f"col2im expects {(c * kh * kw, ho * wo)} for C={c} H={h} W={w} "
            f"k={kh}x{kw} stride={stride} pad={pad}, got {cols.shape}"
        )
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    patches = cols.reshape(c, kh * kw, ho * wo)
    for ki in range(kh):
        for kj in range(kw):
            window = patches[:, ki * kw + kj].reshape(c, ho, wo)
            padded[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += window
    if pad > 0:
        padded = padded[:, pad:-pad, pad:-pad]
    return np.ascontiguousarray(padded)
