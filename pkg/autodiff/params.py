from collections.abc import Mapping
from typing import Dict, Iterator, List, Optional

import numpy as np

from autodiff.graph import GraphNode, constant


class ParamSet:
    """
    Named trainable arrays shared by every network in a model.

    Names are unique and iteration follows insertion order, so two ParamSets
    built by the same construction sequence iterate identically. Values are
    plain float64 arrays; graphs never hold them directly but go through
    bind(), which hands out fresh leaf nodes for one graph.
    """

    def __init__(self):
        self._arrays: Dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._arrays:
            raise ValueError(f"Duplicate parameter name: {name}")
        array = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise ValueError(f"Parameter {name} initialized with non-finite values")
        self._arrays[name] = array
        return array

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self):
        return self._arrays.items()

    def size(self) -> int:
        """Total number of scalar weights."""
        return int(sum(a.size for a in self._arrays.values()))

    def bind(self) -> "BoundParams":
        return BoundParams(self)

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Deep copy of every array, safe to hand to another thread read-only."""
        return {name: array.copy() for name, array in self._arrays.items()}

    def assign(self, values: Dict[str, np.ndarray], strict: bool = True) -> None:
        """
        Overwrite parameter values in place.

        Args:
            values: Mapping name -> array with matching shapes
            strict: Require every parameter to be present in values
        """
        missing = [name for name in self._arrays if name not in values]
        if strict and missing:
            raise KeyError(f"Missing parameters: {missing}")
        for name, array in values.items():
            if name not in self._arrays:
                raise KeyError(f"Unknown parameter: {name}")
            current = self._arrays[name]
            if current.shape != np.shape(array):
                raise ValueError(
                    f"Shape mismatch for {name}: expected {current.shape}, got {np.shape(array)}"
                )
            current[...] = array

    def subset(self, prefix: str) -> List[str]:
        return [name for name in self._arrays if name.startswith(prefix)]


class BoundParams(Mapping):
    """Per-graph view of a ParamSet: name -> leaf GraphNode created on first use."""

    def __init__(self, params: ParamSet):
        self._params = params
        self._leaves: Dict[str, GraphNode] = {}

    def __getitem__(self, name: str) -> GraphNode:
        leaf: Optional[GraphNode] = self._leaves.get(name)
        if leaf is None:
            leaf = constant(self._params[name], name=name)
            self._leaves[name] = leaf
        return leaf

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)
