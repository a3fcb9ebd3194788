"""Parameter and Mult-Adds accounting.

One Mult-Add is a fused multiply-accumulate. Biases, activations, pixel
shuffles, the residual add and the bicubic upsample cost nothing. All counts
are exact Python integers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from .network import LayerSpec, NetworkConfig, layer_plan

MAC_CONVENTION = (
    "one multiply-accumulate counted as one op; biases, activations, pixel shuffle, "
    "residual add and bicubic upsampling excluded"
)


@dataclass(frozen=True)
class LayerCost:
    name: str
    params: int
    mult_adds: int | None
    in_shape: tuple[int, ...] | None = None
    out_shape: tuple[int, ...] | None = None


@dataclass
class ComplexityReport:
    layers: list[LayerCost]
    hr_size: tuple[int, int] | None = None  # (width, height)
    notes: str = MAC_CONVENTION
    config: dict = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return sum(l.params for l in self.layers)

    @property
    def total_mult_adds(self) -> int | None:
        if self.hr_size is None:
            return None
        return sum(l.mult_adds for l in self.layers)

    def summary(self) -> str:
        return f"params={self.total_params}, mult_adds={self.total_mult_adds}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["layer", "in_shape", "out_shape", "params", "mult_adds"])
        for l in self.layers:
            w.writerow([l.name, _fmt_shape(l.in_shape), _fmt_shape(l.out_shape), l.params,
                        "" if l.mult_adds is None else l.mult_adds])
        total = self.total_mult_adds
        w.writerow(["total", "", "", self.total_params, "" if total is None else total])
        return buf.getvalue()


def _fmt_shape(shape) -> str:
    return "" if shape is None else "x".join(str(d) for d in shape)


def _layer_params(spec: LayerSpec) -> int:
    if spec.kind == "conv":
        return spec.out_ch * spec.in_ch * spec.k * spec.k + spec.out_ch
    if spec.kind == "prelu":
        return spec.out_ch
    return 0


def count_params(cfg: NetworkConfig) -> ComplexityReport:
    """Parameter count per layer, from the layer plan alone."""
    rows = [LayerCost(spec.name, _layer_params(spec), None) for spec in layer_plan(cfg)]
    return ComplexityReport(rows, None, config=cfg.to_dict())


def count_multadds(cfg: NetworkConfig, hr_w: int = 1280, hr_h: int = 720) -> ComplexityReport:
    """Per-layer parameters and Mult-Adds for one forward pass producing an ``hr_w`` x ``hr_h`` image."""
    s = cfg.s
    if hr_w < 1 or hr_h < 1 or hr_w % s or hr_h % s:
        raise ValueError(f"HR size {hr_w}x{hr_h} must be positive and divisible by s={s}")
    dims = {"lr": (hr_h // s, hr_w // s), "hr": (hr_h, hr_w)}
    rows = []
    for spec in layer_plan(cfg):
        oh, ow = dims[spec.space]
        if spec.kind == "conv":
            ih, iw = (oh * spec.stride, ow * spec.stride)
            macs = spec.k * spec.k * spec.in_ch * spec.out_ch * oh * ow
        elif spec.kind == "pixel_shuffle":
            ih, iw = oh // s, ow // s
            macs = 0
        else:
            ih, iw = oh, ow
            macs = 0
        rows.append(LayerCost(spec.name, _layer_params(spec), macs,
                              (spec.in_ch, ih, iw), (spec.out_ch, oh, ow)))
    return ComplexityReport(rows, (hr_w, hr_h), config=cfg.to_dict())


# -- sub-pixel convolution vs transposed convolution ------------------------

def spc_layer_cost(n: int, k: int, s: int, W: int, H: int) -> tuple[int, int]:
    """(ops, params) of a k x k, n -> n conv run in LR space ahead of a pixel shuffle."""
    if W % s or H % s:
        raise ValueError(f"W={W}, H={H} must be divisible by s={s}")
    params = n * n * k * k
    return params * (W // s) * (H // s), params


def dconv_layer_cost(n: int, k: int, s: int, W: int, H: int) -> tuple[int, int]:
    """(ops, params) of an sk x sk, n/s^2 -> n/s^2 transposed conv run in HR space."""
    if n % (s * s):
        raise ValueError(f"n={n} must be divisible by s^2={s * s}")
    m = n // (s * s)
    params = m * m * (s * k) ** 2
    return params * W * H, params


@dataclass(frozen=True)
class SpcDconvComparison:
    spc_ops: int
    spc_params: int
    dconv_ops: int
    dconv_params: int

    @property
    def ops_ratio(self) -> Fraction:
        return Fraction(self.spc_ops, self.dconv_ops)

    @property
    def params_ratio(self) -> Fraction:
        return Fraction(self.spc_params, self.dconv_params)


def compare_spc_dconv(n: int, k: int, s: int, W: int, H: int) -> SpcDconvComparison:
    spc = spc_layer_cost(n, k, s, W, H)
    dconv = dconv_layer_cost(n, k, s, W, H)
    return SpcDconvComparison(spc[0], spc[1], dconv[0], dconv[1])
