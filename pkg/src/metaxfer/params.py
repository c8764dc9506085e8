"""Named parameter collections with deterministic (lexicographic) order."""
from __future__ import annotations

from collections.abc import Mapping
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import ContractError
from .tensor import Tensor, grad_tensors


class ParamSet(Mapping):
    """Map from dot-separated parameter path to Tensor.

    Names are unique and iteration is always lexicographic, so anything
    derived from a ParamSet (updates, gradients, serialisation) is
    order-deterministic.
    """

    __slots__ = ("_data",)

    def __init__(self, items: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]]):
        pairs = list(items.items()) if isinstance(items, Mapping) else list(items)
        data: dict[str, Tensor] = {}
        for name, t in pairs:
            if name in data:
                raise ContractError(f"duplicate parameter name {name!r}")
            if not isinstance(t, Tensor):
                raise ContractError(f"parameter {name!r} is not a Tensor")
            data[name] = t
        self._data = {k: data[k] for k in sorted(data)}

    def __getitem__(self, name: str) -> Tensor:
        return self._data[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def map(self, fn: Callable[[Tensor], Tensor]) -> "ParamSet":
        return ParamSet({k: fn(v) for k, v in self._data.items()})

    def map_with(self, other: "ParamSet", fn: Callable[[Tensor, Tensor], Tensor]) -> "ParamSet":
        if set(self) != set(other):
            raise ContractError("ParamSet name mismatch")
        return ParamSet({k: fn(v, other[k]) for k, v in self._data.items()})

    def detached(self, requires_grad: bool = True) -> "ParamSet":
        """Fresh leaf tensors holding copies of the current values."""
        return ParamSet(
            {k: Tensor(v.data.copy(), requires_grad=requires_grad) for k, v in self._data.items()}
        )

    def values_copy(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._data.items()}

    @staticmethod
    def from_arrays(arrays: Mapping[str, np.ndarray], requires_grad: bool = True) -> "ParamSet":
        return ParamSet({k: Tensor(a, requires_grad=requires_grad) for k, a in arrays.items()})

    def n_elements(self) -> int:
        return sum(v.size for v in self._data.values())

    def equals(self, other: "ParamSet") -> bool:
        return set(self) == set(other) and all(
            np.array_equal(self[k].data, other[k].data) for k in self
        )

    def allclose(self, other: "ParamSet", atol: float = 0.0, rtol: float = 1e-12) -> bool:
        return set(self) == set(other) and all(
            np.allclose(self[k].data, other[k].data, atol=atol, rtol=rtol) for k in self
        )

    @staticmethod
    def merged(groups: Mapping[str, "ParamSet"]) -> "ParamSet":
        """Join several sets under name prefixes (for joint optimisation)."""
        items = {}
        for prefix, ps in groups.items():
            for k, v in ps.items():
                items[f"{prefix}.{k}"] = v
        return ParamSet(items)

    def split(self, prefix: str) -> "ParamSet":
        pre = prefix + "."
        return ParamSet({k[len(pre):]: v for k, v in self._data.items() if k.startswith(pre)})


def grad(loss: Tensor, params: ParamSet, create_graph: bool = False) -> ParamSet:
    """Gradients of a scalar loss for every named parameter.

    Parameters unreachable from the loss get exact zeros; with
    ``create_graph=True`` the gradients support further differentiation.
    """
    names = list(params)
    gs = grad_tensors(loss, [params[k] for k in names], create_graph=create_graph)
    return ParamSet(dict(zip(names, gs)))


def global_grad_norm(grads: ParamSet) -> float:
    return float(np.sqrt(sum(float((g.data ** 2).sum()) for g in grads.values())))
