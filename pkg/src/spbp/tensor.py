"""Dense NCHW float32 kernels.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n, c, h, w)`` and
dtype ``float32``. Every kernel here is a pure function: it never mutates its
inputs and produces bitwise-identical results for identical inputs.

Convolutions accumulate in float64 and round to float32 once at the end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# im2col buffers above this many float64 elements are processed in batch chunks
_MAX_COLUMN_ELEMENTS = 1 << 23


class ShapeError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


def as_tensor(x, name: str = "input") -> np.ndarray:
    """Validate ``x`` as a 4-D float32 tensor and return it (no copy if possible)."""
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 4:
        raise ShapeError(f"{name}: expected 4-D (n, c, h, w), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name}: all dimensions must be >= 1, got {arr.shape}")
    return arr


@dataclass
class ConvParams:
    """Weights ``(out_ch, in_ch, k, k)``, bias ``(out_ch,)``, stride and zero padding.

    ``padding=None`` means "same" padding, ``k // 2``.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int | None = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError(f"weight must be (out, in, k, k), got {self.weight.shape}")
        if self.k % 2 != 1:
            raise ShapeError(f"kernel size must be odd, got {self.k}")
        if self.bias.shape != (self.out_ch,):
            raise ShapeError(f"bias must have shape ({self.out_ch},), got {self.bias.shape}")
        if self.stride < 1:
            raise ShapeError(f"stride must be positive, got {self.stride}")
        if self.padding is None:
            self.padding = self.k // 2
        if self.padding < 0:
            raise ShapeError(f"padding must be non-negative, got {self.padding}")

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1]

    @property
    def k(self) -> int:
        return self.weight.shape[2]


@dataclass
class PreluParams:
    slopes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))

    def __post_init__(self):
        self.slopes = np.asarray(self.slopes, dtype=np.float32).reshape(-1)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    """Output length along one axis; floor division as in every mainstream framework."""
    out = (size + 2 * padding - k) // stride + 1
    if out < 1:
        raise ShapeError(
            f"convolution output is empty: size={size}, k={k}, stride={stride}, padding={padding}"
        )
    return out


def _check_conv(x: np.ndarray, p: ConvParams) -> tuple[int, int]:
    if x.shape[1] != p.in_ch:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weights expect {p.in_ch}")
    ho = conv_output_size(x.shape[2], p.k, p.stride, p.padding)
    wo = conv_output_size(x.shape[3], p.k, p.stride, p.padding)
    return ho, wo


def _pad64(x: np.ndarray, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    out[:, :, pad:pad + h, pad:pad + w] = x
    return out


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Columns of shape ``(k*k*c, n*ho*wo)``; rows ordered by (dy, dx, channel)."""
    n, c = xp.shape[:2]
    cols = np.empty((k, k, c, n, ho, wo), dtype=np.float64)
    for dy in range(k):
        for dx in range(k):
            patch = xp[:, :, dy:dy + stride * (ho - 1) + 1:stride, dx:dx + stride * (wo - 1) + 1:stride]
            cols[dy, dx] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(k * k * c, n * ho * wo)


def _weight_matrix(weight: np.ndarray) -> np.ndarray:
    o, c, k, _ = weight.shape
    return weight.astype(np.float64).transpose(0, 2, 3, 1).reshape(o, k * k * c)


def _batch_chunks(n: int, per_item: int):
    step = max(1, _MAX_COLUMN_ELEMENTS // max(per_item, 1))
    for start in range(0, n, step):
        yield start, min(n, start + step)


def conv2d(x, p: ConvParams) -> np.ndarray:
    """2-D cross-correlation with zero padding.

    ``out[n, o, y, x] = bias[o] + sum_{dy, dx, i} w[o, i, dy, dx] * in_pad[n, i, y*s + dy, x*s + dx]``
    """
    x = as_tensor(x)
    ho, wo = _check_conv(x, p)
    n = x.shape[0]
    k, s, pad = p.k, p.stride, p.padding
    wmat = _weight_matrix(p.weight)
    bias = p.bias.astype(np.float64)[:, None]
    out = np.empty((n, p.out_ch, ho, wo), dtype=np.float32)
    for a, b in _batch_chunks(n, k * k * p.in_ch * ho * wo):
        if k == 1 and s == 1 and pad == 0:
            cols = x[a:b].astype(np.float64).transpose(1, 0, 2, 3).reshape(p.in_ch, -1)
        else:
            cols = _im2col(_pad64(x[a:b], pad), k, s, ho, wo)
        res = wmat @ cols
        res += bias
        out[a:b] = res.reshape(p.out_ch, b - a, ho, wo).transpose(1, 0, 2, 3)
    return out


def prelu(x, p: PreluParams) -> np.ndarray:
    """Per-channel parametric ReLU: ``x`` if ``x >= 0`` else ``a_c * x``."""
    x = as_tensor(x)
    if p.slopes.shape[0] != x.shape[1]:
        raise ShapeError(f"prelu: {p.slopes.shape[0]} slopes for {x.shape[1]} channels")
    a = p.slopes.reshape(1, -1, 1, 1)
    return np.where(x >= 0, x, a * x).astype(np.float32)


def pixel_shuffle(x, r: int) -> np.ndarray:
    """Rearrange ``(n, c*r*r, h, w)`` into ``(n, c, h*r, w*r)``.

    ``out[n, c, y, x] = in[n, c*r*r + r*(y % r) + (x % r), y // r, x // r]``
    """
    x = as_tensor(x)
    if r < 1:
        raise ShapeError(f"pixel_shuffle: factor must be positive, got {r}")
    n, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"pixel_shuffle: {c} channels not divisible by r^2={r * r}")
    oc = c // (r * r)
    out = x.reshape(n, oc, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out.reshape(n, oc, h * r, w * r))


def pixel_unshuffle(x, r: int) -> np.ndarray:
    """Exact inverse of :func:`pixel_shuffle`."""
    x = as_tensor(x)
    if r < 1:
        raise ShapeError(f"pixel_unshuffle: factor must be positive, got {r}")
    n, c, h, w = x.shape
    if h % r or w % r:
        raise ShapeError(f"pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}")
    out = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out.reshape(n, c * r * r, h // r, w // r))


def concat_channels(inputs) -> np.ndarray:
    inputs = [as_tensor(t) for t in inputs]
    if not inputs:
        raise ShapeError("concat_channels: empty input list")
    n, _, h, w = inputs[0].shape
    for t in inputs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat_channels: {t.shape} incompatible with batch/spatial {(n, h, w)}")
    return np.concatenate(inputs, axis=1)


def add(a, b) -> np.ndarray:
    a, b = as_tensor(a, "a"), as_tensor(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return (a + b).astype(np.float32)


# -- reverse-mode kernels ---------------------------------------------------

def backward_conv2d(grad_out, x, p: ConvParams):
    """Gradients of :func:`conv2d` w.r.t. input, weight and bias."""
    x = as_tensor(x)
    ho, wo = _check_conv(x, p)
    g = as_tensor(grad_out, "grad_out")
    if g.shape != (x.shape[0], p.out_ch, ho, wo):
        raise ShapeError(f"backward_conv2d: grad_out {g.shape} != output {(x.shape[0], p.out_ch, ho, wo)}")
    n, c, h, w = x.shape
    k, s, pad = p.k, p.stride, p.padding
    wmat = _weight_matrix(p.weight)
    grad_w = np.zeros_like(wmat)
    grad_b = g.astype(np.float64).sum(axis=(0, 2, 3))
    grad_x = np.empty_like(x)
    for a, b in _batch_chunks(n, k * k * c * ho * wo):
        m = b - a
        gmat = g[a:b].astype(np.float64).transpose(1, 0, 2, 3).reshape(p.out_ch, m * ho * wo)
        if k == 1 and s == 1 and pad == 0:
            cols = x[a:b].astype(np.float64).transpose(1, 0, 2, 3).reshape(c, -1)
            grad_w += gmat @ cols.T
            gcols = wmat.T @ gmat
            grad_x[a:b] = gcols.reshape(c, m, h, w).transpose(1, 0, 2, 3)
            continue
        cols = _im2col(_pad64(x[a:b], pad), k, s, ho, wo)
        grad_w += gmat @ cols.T
        gcols = (wmat.T @ gmat).reshape(k, k, c, m, ho, wo)
        gp = np.zeros((m, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
        for dy in range(k):
            for dx in range(k):
                gp[:, :, dy:dy + s * (ho - 1) + 1:s, dx:dx + s * (wo - 1) + 1:s] += gcols[dy, dx].transpose(1, 0, 2, 3)
        grad_x[a:b] = gp[:, :, pad:pad + h, pad:pad + w]
    grad_w = grad_w.reshape(p.out_ch, k, k, c).transpose(0, 3, 1, 2)
    return grad_x, grad_w.astype(np.float32), grad_b.astype(np.float32)


def backward_prelu(grad_out, x, p: PreluParams):
    """Returns ``(grad_input, grad_slopes)``; the derivative at exactly 0 is taken as 1."""
    x = as_tensor(x)
    g = as_tensor(grad_out, "grad_out")
    if g.shape != x.shape:
        raise ShapeError(f"backward_prelu: grad_out {g.shape} != input {x.shape}")
    if p.slopes.shape[0] != x.shape[1]:
        raise ShapeError(f"backward_prelu: {p.slopes.shape[0]} slopes for {x.shape[1]} channels")
    a = p.slopes.reshape(1, -1, 1, 1)
    grad_x = np.where(x >= 0, g, a * g).astype(np.float32)
    grad_a = (g.astype(np.float64) * np.minimum(x, 0)).sum(axis=(0, 2, 3))
    return grad_x, grad_a.astype(np.float32)


def backward_pixel_shuffle(grad_out, r: int) -> np.ndarray:
    return pixel_unshuffle(grad_out, r)


def backward_concat(grad_out, channel_splits) -> list[np.ndarray]:
    g = as_tensor(grad_out, "grad_out")
    splits = [int(c) for c in channel_splits]
    if not splits or any(c < 1 for c in splits) or sum(splits) != g.shape[1]:
        raise ShapeError(f"backward_concat: splits {splits} do not sum to {g.shape[1]} channels")
    bounds = np.cumsum([0] + splits)
    return [np.ascontiguousarray(g[:, bounds[i]:bounds[i + 1]]) for i in range(len(splits))]
