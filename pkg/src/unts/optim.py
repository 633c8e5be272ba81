"""Parameter updates: plain SGD, Adam, global-norm clipping."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class MissingGradError(RuntimeError):
    pass


def _check_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        if p.grad is None:
            raise MissingGradError(f"parameter {p.name or '<unnamed>'} has no gradient")


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def sgd_step(params: Sequence[Tensor], learning_rate: float) -> None:
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    _check_grads(params)
    for p in params:
        p.data -= learning_rate * p.grad.astype(p.data.dtype, copy=False)
    zero_grad(params)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float | None) -> float:
    """Scale grads in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.  Parameters without grads are ignored.
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))
    if max_norm is not None and max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    """Adam with per-parameter state.

    ``step`` only touches the parameters it is given, so several update sets
    can share one optimizer without moving parameters outside the set.
    """

    def __init__(self, lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.state: dict[int, dict] = {}

    def step(self, params: Sequence[Tensor]) -> None:
        _check_grads(params)
        for p in params:
            st = self.state.get(id(p))
            if st is None:
                st = {"t": 0, "m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "param": p}
                self.state[id(p)] = st
            g = p.grad.astype(p.data.dtype, copy=False)
            st["t"] += 1
            t = st["t"]
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * (g * g)
            mhat = st["m"] / (1 - self.beta1 ** t)
            vhat = st["v"] / (1 - self.beta2 ** t)
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype, copy=False)
        zero_grad(params)

    # checkpoint helpers keyed by parameter name
    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for st in self.state.values():
            name = st["param"].name
            out[f"{prefix}/{name}/m"] = st["m"]
            out[f"{prefix}/{name}/v"] = st["v"]
            out[f"{prefix}/{name}/t"] = np.array(st["t"], dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str, params: Sequence[Tensor]) -> None:
        self.state = {}
        for p in params:
            key = f"{prefix}/{p.name}"
            if f"{key}/t" in arrays:
                self.state[id(p)] = {
                    "t": int(arrays[f"{key}/t"]),
                    "m": np.array(arrays[f"{key}/m"]),
                    "v": np.array(arrays[f"{key}/v"]),
                    "param": p,
                }
