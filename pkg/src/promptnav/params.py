"""Named model parameters, freeze policy, and content digests."""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError
from .tensor import Tensor


class Parameter:
    """A named, optionally frozen tensor. Frozen parameters never accumulate
    gradient (requires_grad is kept in lockstep) and optimizers refuse them."""

    __slots__ = ("name", "tensor", "_frozen")

    def __init__(self, name: str, data, frozen: bool = False):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=np.float64), requires_grad=not frozen)
        self._frozen = bool(frozen)

    @property
    def frozen(self) -> bool:
        return self._frozen

    @frozen.setter
    def frozen(self, value: bool) -> None:
        self._frozen = bool(value)
        self.tensor.requires_grad = not self._frozen

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.tensor.shape}, frozen={self.frozen})"


class ParamSet:
    """Ordered mapping of unique parameter names to Parameters."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, data, frozen: bool = False) -> Parameter:
        if name in self._params:
            raise ContractError(f"duplicate parameter name: {name}")
        p = Parameter(name, data, frozen=frozen)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def t(self, name: str) -> Tensor:
        return self._params[name].tensor

    def merge(self, other: "ParamSet") -> "ParamSet":
        for p in other:
            if p.name in self._params:
                raise ContractError(f"duplicate parameter name on merge: {p.name}")
            self._params[p.name] = p
        return self

    def with_prefix(self, prefix: str) -> list[Parameter]:
        return [p for p in self if p.name.startswith(prefix)]

    def freeze_prefix(self, prefix: str) -> None:
        for p in self.with_prefix(prefix):
            p.frozen = True

    def trainable(self) -> list[Parameter]:
        return [p for p in self if not p.frozen]

    def zero_grad(self) -> None:
        for p in self:
            p.tensor.zero_grad()

    def as_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self if p.name.startswith(prefix)}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            p = self._params.get(name)
            if p is None:
                raise ContractError(f"unknown parameter in checkpoint: {name}")
            if p.data.shape != arr.shape:
                raise ContractError(
                    f"shape mismatch for {name}: have {p.data.shape}, loading {arr.shape}")
            p.tensor.data = arr.astype(np.float64, copy=True)


def digest(arrays: dict[str, np.ndarray] | ParamSet, prefix: str = "") -> str:
    """SHA-256 over (name, shape, little-endian float64 bytes), sorted by name."""
    if isinstance(arrays, ParamSet):
        arrays = arrays.as_arrays()
    h = hashlib.sha256()
    for name in sorted(arrays):
        if not name.startswith(prefix):
            continue
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        h.update(name.encode())
        h.update(repr(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def check_freeze_partition(params: ParamSet, frozen_prefixes: Iterable[str],
                           trainable_prefixes: Iterable[str]) -> None:
    """Every parameter must match exactly one prefix category."""
    frozen_prefixes = tuple(frozen_prefixes)
    trainable_prefixes = tuple(trainable_prefixes)
    for p in params:
        nf = sum(p.name.startswith(x) for x in frozen_prefixes)
        nt = sum(p.name.startswith(x) for x in trainable_prefixes)
        if nf + nt != 1:
            raise ContractError(
                f"parameter {p.name} matches {nf} frozen and {nt} trainable prefixes")
