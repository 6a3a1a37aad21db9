"""SGD and Adam over named parameters.

Optimizers refuse frozen parameters at construction (FrozenViolation) so a
freeze-policy bug fails hard instead of silently updating the backbone.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, FrozenViolation
from .params import Parameter


class Optimizer:
    def __init__(self, params: list[Parameter], lr: float):
        if lr <= 0:
            raise ContractError(f"learning rate must be > 0, got {lr}")
        for p in params:
            if p.frozen:
                raise FrozenViolation(f"frozen parameter handed to optimizer: {p.name}")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ContractError("duplicate parameter names in optimizer")
        self.params = list(params)
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.zero_grad()

    def _require_grads(self) -> None:
        for p in self.params:
            if p.tensor.grad is None:
                raise ContractError(f"missing gradient on trainable parameter: {p.name}")

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def step(self) -> None:
        self._require_grads()
        for p in self.params:
            p.tensor.data = p.tensor.data - self.lr * p.tensor.grad


class Adam(Optimizer):
    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.b1, self.b2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        self._require_grads()
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p in self.params:
            g = p.tensor.grad
            m = self._m[p.name] = self.b1 * self._m[p.name] + (1.0 - self.b1) * g
            v = self._v[p.name] = self.b2 * self._v[p.name] + (1.0 - self.b2) * g * g
            p.tensor.data = p.tensor.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def make_optimizer(params: list[Parameter], rule: str = "adam", lr: float = 1e-3,
                   betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> Optimizer:
    if rule == "sgd":
        return SGD(params, lr)
    if rule == "adam":
        return Adam(params, lr, betas, eps)
    raise ContractError(f"unknown optimizer rule: {rule!r}")
