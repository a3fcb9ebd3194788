"""A small reverse-mode tape over the kernels in :mod:`spbp.tensor`.

Each op returns a :class:`Var`. When none of the inputs require gradients the
op records nothing, so the same network code serves inference and training.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T


class Var:
    """A tensor value plus its accumulated gradient.

    Leaves created with ``requires_grad=True`` act as trainable parameters.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Var, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float32, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


Parameter = Var


def _result(value, parents, backward) -> Var:
    needs = any(p.requires_grad for p in parents)
    out = Var(value, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def conv2d(x: Var, weight: Var, bias: Var, stride: int = 1, padding: int | None = None) -> Var:
    p = T.ConvParams(weight.value, bias.value, stride, padding)
    out = T.conv2d(x.value, p)

    def backward(g):
        gx, gw, gb = T.backward_conv2d(g, x.value, p)
        x._accumulate(gx)
        weight._accumulate(gw)
        bias._accumulate(gb)

    return _result(out, (x, weight, bias), backward)


def prelu(x: Var, slopes: Var) -> Var:
    p = T.PreluParams(slopes.value)
    out = T.prelu(x.value, p)

    def backward(g):
        gx, ga = T.backward_prelu(g, x.value, p)
        x._accumulate(gx)
        slopes._accumulate(ga)

    return _result(out, (x, slopes), backward)


def pixel_shuffle(x: Var, r: int) -> Var:
    def backward(g):
        x._accumulate(T.backward_pixel_shuffle(g, r))

    return _result(T.pixel_shuffle(x.value, r), (x,), backward)


def concat_channels(inputs) -> Var:
    inputs = list(inputs)
    if len(inputs) == 1:
        return inputs[0]
    splits = [v.shape[1] for v in inputs]

    def backward(g):
        for v, gv in zip(inputs, T.backward_concat(g, splits)):
            v._accumulate(gv)

    return _result(T.concat_channels([v.value for v in inputs]), inputs, backward)


def add(a: Var, b: Var) -> Var:
    def backward(g):
        a._accumulate(g)
        b._accumulate(g)

    return _result(T.add(a.value, b.value), (a, b), backward)


def l1_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean absolute error and its gradient ``sign(pred - target) / N`` (sign(0) = 0)."""
    pred = np.asarray(pred, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if pred.shape != target.shape:
        raise T.ShapeError(f"l1_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.abs(diff).mean())
    grad = (np.sign(diff) / diff.size).astype(np.float32)
    return loss, grad


def backward(root: Var, grad=None):
    """Propagate ``grad`` (default ones) from ``root`` through the recorded graph."""
    if not root.requires_grad:
        return
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value) if grad is None else np.asarray(grad, dtype=np.float32).copy()
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # free interior gradients once consumed
            node.grad = None
