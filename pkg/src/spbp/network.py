"""The sub-pixel back-projection super-resolution network.

Three stages run on the low-resolution input:

* feature extraction: ``Conv(3, 4f) -> PReLU -> Conv(1, f) -> PReLU``
* the back-projection block: groups of up-projection (conv + pixel shuffle)
  and down-projection (strided conv) with dense connections, fused by a 1x1
  compression conv
* reconstruction: ``Conv(3, 3 s^2) -> pixel shuffle -> Conv(3, 3)`` added to a
  bicubic upsample of the input

The layer graph is described once by :func:`layer_plan`; weight construction
and the complexity analyzer both consume that plan.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from . import autograd as ag
from . import tensor as T
from .autograd import Var
from .imaging import bicubic_resize

PRESETS = {
    "S": dict(f=16, G=1),
    "M": dict(f=16, G=10),
    "L": dict(f=32, G=10),
}

PRELU_INIT = 0.25


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters.

    ``group_indexing`` chooses how ``G`` is read. ``"interior"`` builds the
    exterior unit plus ``G`` densely connected interior groups and fuses the
    interior outputs ``L_1 .. L_G``. ``"all"`` counts the exterior unit as one
    of the ``G`` groups and fuses ``L_0 .. L_{G-1}``.

    ``fusion`` chooses how a group consumes its dense concatenation.
    ``"bottleneck"`` first squeezes it to ``f`` channels with a 1x1 conv.
    ``"direct"`` feeds it straight into the 3x3 projection conv.
    """

    f: int = 16
    G: int = 1
    s: int = 2
    in_ch: int = 3
    f_out: int = 3
    group_indexing: Literal["interior", "all"] = "interior"
    fusion: Literal["bottleneck", "direct"] = "bottleneck"

    def __post_init__(self):
        for name in ("f", "G", "in_ch", "f_out"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)!r}")
        if not isinstance(self.s, int) or self.s < 2:
            raise ValueError(f"scale s must be an integer >= 2, got {self.s!r}")
        if self.group_indexing not in ("interior", "all"):
            raise ValueError(f"unknown group_indexing {self.group_indexing!r}")
        if self.fusion not in ("bottleneck", "direct"):
            raise ValueError(f"unknown fusion {self.fusion!r}")

    @classmethod
    def preset(cls, name: str, **overrides) -> "NetworkConfig":
        try:
            base = PRESETS[name.upper()]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
        return cls(**{**base, **overrides})

    @property
    def num_groups(self) -> int:
        """Number of up/down projection pairs actually built."""
        return self.G + 1 if self.group_indexing == "interior" else self.G

    @property
    def first_fused_group(self) -> int:
        return 1 if self.group_indexing == "interior" else 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LayerSpec:
    """One node of the layer graph.

    ``space`` is the resolution a layer's output lives at: ``"lr"`` or ``"hr"``.
    Channel counts for pixel shuffle refer to its input and output.
    """

    name: str
    kind: Literal["conv", "prelu", "pixel_shuffle", "add"]
    in_ch: int
    out_ch: int
    k: int = 0
    stride: int = 1
    space: Literal["lr", "hr"] = "lr"

    @property
    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "conv":
            return {
                f"{self.name}.weight": (self.out_ch, self.in_ch, self.k, self.k),
                f"{self.name}.bias": (self.out_ch,),
            }
        if self.kind == "prelu":
            return {f"{self.name}.slope": (self.out_ch,)}
        return {}


def layer_plan(cfg: NetworkConfig) -> list[LayerSpec]:
    """Every layer of the network in execution order."""
    f, s = cfg.f, cfg.s
    plan = [
        LayerSpec("fe0", "conv", cfg.in_ch, 4 * f, 3),
        LayerSpec("fe0.act", "prelu", 4 * f, 4 * f),
        LayerSpec("fe1", "conv", 4 * f, f, 1),
        LayerSpec("fe1.act", "prelu", f, f),
    ]
    for g in range(cfg.num_groups):
        fan_in = f * (g + 1)
        up_in = fan_in
        down_in = fan_in
        p = f"nlm.g{g}"
        if cfg.fusion == "bottleneck" and g > 0:
            plan.append(LayerSpec(f"{p}.up_fuse", "conv", fan_in, f, 1))
            up_in = f
        plan += [
            LayerSpec(f"{p}.up", "conv", up_in, f * s * s, 3),
            LayerSpec(f"{p}.up.shuffle", "pixel_shuffle", f * s * s, f, space="hr"),
            LayerSpec(f"{p}.up.act", "prelu", f, f, space="hr"),
        ]
        if cfg.fusion == "bottleneck" and g > 0:
            plan.append(LayerSpec(f"{p}.down_fuse", "conv", fan_in, f, 1, space="hr"))
            down_in = f
        plan += [
            LayerSpec(f"{p}.down", "conv", down_in, f, 3, stride=s),
            LayerSpec(f"{p}.down.act", "prelu", f, f),
        ]
    fused = cfg.num_groups - cfg.first_fused_group
    plan += [
        LayerSpec("nlm.out", "conv", f * fused, f, 1),
        LayerSpec("rec0", "conv", f, cfg.f_out * s * s, 3),
        LayerSpec("rec0.shuffle", "pixel_shuffle", cfg.f_out * s * s, cfg.f_out, space="hr"),
        LayerSpec("rec1", "conv", cfg.f_out, cfg.f_out, 3, space="hr"),
        LayerSpec("residual", "add", cfg.f_out, cfg.f_out, space="hr"),
    ]
    return plan


# layers whose output feeds a PReLU get the PReLU-aware init gain
def _init_slope(plan: list[LayerSpec], idx: int) -> float:
    nxt = plan[idx + 1] if idx + 1 < len(plan) else None
    while nxt is not None and nxt.kind == "pixel_shuffle":
        idx += 1
        nxt = plan[idx + 1] if idx + 1 < len(plan) else None
    return PRELU_INIT if nxt is not None and nxt.kind == "prelu" else 1.0


class SpbpNetwork:
    """A configured network and its parameters (name -> float32 array, in plan order)."""

    def __init__(self, cfg: NetworkConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.plan = layer_plan(cfg)
        expected = {k: v for spec in self.plan for k, v in spec.param_shapes.items()}
        if list(params) != list(expected):
            raise ValueError("parameter names do not match the layer plan for this config")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.params = {k: np.ascontiguousarray(v, dtype=np.float32) for k, v in params.items()}
        self.layers = {spec.name: spec for spec in self.plan}

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def zero_(self) -> "SpbpNetwork":
        for v in self.params.values():
            v[...] = 0
        return self

    def copy(self) -> "SpbpNetwork":
        return SpbpNetwork(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def conv_params(self, name: str) -> T.ConvParams:
        return T.ConvParams(self.params[f"{name}.weight"], self.params[f"{name}.bias"], self.layers[name].stride)

    def prelu_params(self, name: str) -> T.PreluParams:
        return T.PreluParams(self.params[f"{name}.slope"])


def build_network(cfg: NetworkConfig, seed: int = 0) -> SpbpNetwork:
    """Instantiate weights: He-uniform convs, zero biases, PReLU slopes at 0.25."""
    rng = np.random.default_rng(seed)
    plan = layer_plan(cfg)
    params: dict[str, np.ndarray] = {}
    for i, spec in enumerate(plan):
        if spec.kind == "conv":
            fan_in = spec.in_ch * spec.k * spec.k
            a = _init_slope(plan, i)
            bound = np.sqrt(6.0 / ((1.0 + a * a) * fan_in))
            shape = (spec.out_ch, spec.in_ch, spec.k, spec.k)
            params[f"{spec.name}.weight"] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
            params[f"{spec.name}.bias"] = np.zeros(spec.out_ch, np.float32)
        elif spec.kind == "prelu":
            params[f"{spec.name}.slope"] = np.full(spec.out_ch, PRELU_INIT, np.float32)
    return SpbpNetwork(cfg, params)


# -- forward graph, written once over Var so training can reuse it ----------

def _conv(P, net, name, x: Var) -> Var:
    return ag.conv2d(x, P[f"{name}.weight"], P[f"{name}.bias"], net.layers[name].stride)


def _act(P, name, x: Var) -> Var:
    return ag.prelu(x, P[f"{name}.slope"])


def _feature_extract(net, P, x: Var, trace=None) -> Var:
    if x.shape[1] != net.cfg.in_ch:
        raise T.ShapeError(f"expected {net.cfg.in_ch} input channels, got {x.shape[1]}")
    f0 = _act(P, "fe0.act", _conv(P, net, "fe0", x))
    f1 = _act(P, "fe1.act", _conv(P, net, "fe1", f0))
    if trace is not None:
        trace["F_in0"] = f0.value
        trace["F_in1"] = f1.value
    return f1


def _spbp_block(net, P, f1: Var, trace=None) -> Var:
    cfg = net.cfg
    lows: list[Var] = []
    highs: list[Var] = []
    for g in range(cfg.num_groups):
        p = f"nlm.g{g}"
        x = ag.concat_channels([f1] + lows)
        if cfg.fusion == "bottleneck" and g > 0:
            x = _conv(P, net, f"{p}.up_fuse", x)
        h = _act(P, f"{p}.up.act", ag.pixel_shuffle(_conv(P, net, f"{p}.up", x), cfg.s))
        highs.append(h)
        y = ag.concat_channels(highs)
        if cfg.fusion == "bottleneck" and g > 0:
            y = _conv(P, net, f"{p}.down_fuse", y)
        lows.append(_act(P, f"{p}.down.act", _conv(P, net, f"{p}.down", y)))
    out = _conv(P, net, "nlm.out", ag.concat_channels(lows[cfg.first_fused_group:]))
    if trace is not None:
        for g, (h, l) in enumerate(zip(highs, lows)):
            trace[f"H_{g}"] = h.value
            trace[f"L_{g}"] = l.value
        trace["F_out"] = out.value
    return out


def _reconstruct(net, P, f_out: Var, x: Var, trace=None) -> Var:
    cfg = net.cfg
    res0 = ag.pixel_shuffle(_conv(P, net, "rec0", f_out), cfg.s)
    res1 = _conv(P, net, "rec1", res0)
    up = bicubic_resize(x.value, cfg.s)
    if up.shape != res1.shape:
        raise T.ShapeError(f"residual {res1.shape} does not match bicubic upsample {up.shape}")
    if trace is not None:
        trace["I_res0"] = res0.value
        trace["I_res1"] = res1.value
    return ag.add(res1, Var(up))


def run_graph(net: SpbpNetwork, P: dict[str, Var], x: Var, trace=None) -> Var:
    """Unclamped network output for input ``x``; differentiable through ``P``."""
    f1 = _feature_extract(net, P, x, trace)
    f_out = _spbp_block(net, P, f1, trace)
    return _reconstruct(net, P, f_out, x, trace)


def _frozen(net) -> dict[str, Var]:
    return {k: Var(v) for k, v in net.params.items()}


def _check_input(net, x) -> np.ndarray:
    x = T.as_tensor(x, "I_LR")
    if x.shape[1] != net.cfg.in_ch:
        raise T.ShapeError(f"expected {net.cfg.in_ch} input channels, got {x.shape[1]}")
    return x


def feature_extract(net: SpbpNetwork, lr, trace: dict | None = None) -> np.ndarray:
    return _feature_extract(net, _frozen(net), Var(_check_input(net, lr)), trace).value


def spbp_forward(net: SpbpNetwork, features, trace: dict | None = None) -> np.ndarray:
    features = T.as_tensor(features, "F_in1")
    if features.shape[1] != net.cfg.f:
        raise T.ShapeError(f"expected {net.cfg.f} feature channels, got {features.shape[1]}")
    return _spbp_block(net, _frozen(net), Var(features), trace).value


def reconstruct(net: SpbpNetwork, f_out, lr, trace: dict | None = None) -> np.ndarray:
    out = _reconstruct(net, _frozen(net), Var(T.as_tensor(f_out, "F_out")), Var(_check_input(net, lr)), trace)
    return np.clip(out.value, 0.0, 1.0)


def forward(net: SpbpNetwork, lr, trace: dict | None = None) -> np.ndarray:
    """Super-resolve ``lr`` (n, 3, h, w) in [0, 1]; output clamped to [0, 1]."""
    out = run_graph(net, _frozen(net), Var(_check_input(net, lr)), trace)
    return np.clip(out.value, 0.0, 1.0)


# -- self-ensemble ----------------------------------------------------------

# (quarter turns, horizontal flip); identity first
DIHEDRAL = tuple((k, flip) for flip in (False, True) for k in range(4))


def transform(x: np.ndarray, k: int, flip: bool) -> np.ndarray:
    if flip:
        x = x[..., ::-1]
    return np.ascontiguousarray(np.rot90(x, k, axes=(2, 3)))


def inverse_transform(x: np.ndarray, k: int, flip: bool) -> np.ndarray:
    x = np.rot90(x, -k, axes=(2, 3))
    if flip:
        x = x[..., ::-1]
    return np.ascontiguousarray(x)


def self_ensemble_forward(net: SpbpNetwork, lr, transforms=DIHEDRAL) -> np.ndarray:
    """Average of inverse-transformed predictions over dihedral transforms of the input."""
    lr = _check_input(net, lr)
    transforms = list(transforms)
    if not transforms:
        raise ValueError("self_ensemble_forward: empty transform set")
    total = None
    for k, flip in transforms:
        y = inverse_transform(forward(net, transform(lr, k, flip)), k, flip).astype(np.float64)
        total = y if total is None else total + y
    return np.clip(total / len(transforms), 0.0, 1.0).astype(np.float32)
