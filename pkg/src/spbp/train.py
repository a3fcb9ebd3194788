"""L1 training with Adam and a step-decay learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autograd as ag
from .autograd import Var
from .imaging import augment, sample_patch
from .network import SpbpNetwork, run_graph


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_every: int = 200
    decay_factor: float = 2.0
    epochs: int = 1000
    batch_size: int = 40
    crops_per_image: int = 40
    crop_size: int = 48
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not self.decay_factor > 1:
            raise ValueError("decay_factor must exceed 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        for name in ("decay_every", "epochs", "batch_size", "crops_per_image", "crop_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, value: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(value, dtype=np.float32), np.zeros_like(value, dtype=np.float32))


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return cfg.lr0 * cfg.decay_factor ** -(epoch // cfg.decay_every)


def adam_step(param: Var, state: AdamState, lr: float, cfg: TrainConfig) -> tuple[Var, AdamState]:
    """One bias-corrected Adam update of ``param.value`` in place."""
    g = np.zeros_like(param.value) if param.grad is None else param.grad
    if g.shape != param.value.shape or state.m.shape != param.value.shape:
        raise ValueError("adam_step: gradient/state shape does not match parameter")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("adam_step: non-finite gradient")
    g = g.astype(np.float64)
    state.t += 1
    m = cfg.beta1 * state.m.astype(np.float64) + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v.astype(np.float64) + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1 ** state.t)
    v_hat = v / (1 - cfg.beta2 ** state.t)
    update = lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    param.value[...] = (param.value.astype(np.float64) - update).astype(np.float32)
    state.m[...] = m
    state.v[...] = v
    return param, state


class Adam:
    """Adam over every parameter of a network; parameter arrays are updated in place."""

    def __init__(self, net: SpbpNetwork, cfg: TrainConfig):
        self.net = net
        self.cfg = cfg
        self.params = {k: Var(v, requires_grad=True) for k, v in net.params.items()}
        self.states = {k: AdamState.zeros_like(v) for k, v in net.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr: float):
        for k, p in self.params.items():
            adam_step(p, self.states[k], lr, self.cfg)


def batch_to_tensors(patches) -> tuple[np.ndarray, np.ndarray]:
    lr = np.stack([p[0] for p in patches]).astype(np.float64) / 255.0
    hr = np.stack([p[1] for p in patches]).astype(np.float64) / 255.0
    return (lr.transpose(0, 3, 1, 2).astype(np.float32),
            hr.transpose(0, 3, 1, 2).astype(np.float32))


def train_step(opt: Adam, lr_batch: np.ndarray, hr_batch: np.ndarray, lr: float) -> float:
    """Forward, L1 backward and one Adam update; returns the pre-update loss."""
    opt.zero_grad()
    pred = run_graph(opt.net, opt.params, Var(lr_batch))
    loss, grad = ag.l1_loss(pred.value, hr_batch)
    ag.backward(pred, grad)
    opt.step(lr)
    return loss


def epoch_patches(pairs, cfg: TrainConfig, epoch: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sampled and augmented (LR, HR) patches in seed-fixed shuffled order.

    Each image draws from its own stream keyed by (seed, epoch, image index).
    """
    patches = []
    for idx, (lr, hr) in enumerate(pairs):
        if cfg.crop_size > min(lr.shape[:2]):
            raise ValueError(f"crop size {cfg.crop_size} exceeds LR image {idx} of size {lr.shape[:2]}")
        rng = np.random.default_rng([cfg.seed, epoch, 1, idx])
        for _ in range(cfg.crops_per_image):
            patches.append(augment(*sample_patch(lr, hr, cfg.crop_size, rng), rng))
    order = np.random.default_rng([cfg.seed, epoch, 2]).permutation(len(patches))
    return [patches[i] for i in order]


def train_epoch(net: SpbpNetwork, pairs, cfg: TrainConfig, epoch: int, opt: Adam | None = None) -> float:
    """One pass over ``crops_per_image`` patches per (LR, HR) pair; returns the mean batch loss.

    Pass the same ``opt`` across epochs to keep Adam moments.
    """
    if not pairs:
        raise ValueError("train_epoch: empty dataset")
    if opt is None:
        opt = Adam(net, cfg)
    lr = lr_at_epoch(cfg, epoch)
    patches = epoch_patches(pairs, cfg, epoch)
    losses = []
    for start in range(0, len(patches), cfg.batch_size):
        lr_batch, hr_batch = batch_to_tensors(patches[start:start + cfg.batch_size])
        losses.append(train_step(opt, lr_batch, hr_batch, lr))
    return math.fsum(losses) / len(losses)
