"""Gaussian increment field on the binary tree.

Every vertex ``(depth, index)`` with ``depth >= 1`` carries one standard
normal increment.  Increments are never stored by default: they are a pure
function of ``(seed, heap id)`` with ``heap id = 2**depth + index``, obtained
by hashing the pair through a splitmix64-style finalizer and pushing the
53-bit uniform through the inverse normal CDF.  Any subset of the field can
therefore be regenerated in any order, on any worker, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, ResourceError

MAX_DEPTH = 26

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _fmix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, in place on a uint64 array
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def _key(seed: int) -> np.uint64:
    k = _fmix(np.array([(int(seed) & _MASK64)], dtype=np.uint64) + _GOLDEN)
    return k[0]


def mix64(seed: int, counter) -> np.ndarray:
    """Hash ``counter`` (scalar or array) under ``seed`` to uint64 words."""
    c = np.atleast_1d(np.asarray(counter, dtype=np.uint64)).copy()
    key = _key(seed)
    c *= _GOLDEN
    c ^= key
    _fmix(c)
    c += key
    return _fmix(c)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed of the ``index``-th independent stream derived from ``base_seed``."""
    return int(mix64(base_seed, index)[0])


def uniform53(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to floats strictly inside (0, 1)."""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True, order=True)
class NodeRef:
    depth: int
    index: int

    def __post_init__(self):
        if self.depth < 0:
            raise DomainError(f"negative depth {self.depth}")
        if not 0 <= self.index < (1 << self.depth):
            raise DomainError(f"index {self.index} outside [0, 2^{self.depth})")

    @property
    def heap_id(self) -> int:
        return (1 << self.depth) + self.index

    @property
    def is_root(self) -> bool:
        return self.depth == 0

    def parent(self) -> "NodeRef":
        if self.depth == 0:
            raise DomainError("root has no parent")
        return NodeRef(self.depth - 1, self.index >> 1)

    def children(self) -> tuple["NodeRef", "NodeRef"]:
        return NodeRef(self.depth + 1, 2 * self.index), NodeRef(self.depth + 1, 2 * self.index + 1)

    def ancestor(self, depth: int) -> "NodeRef":
        if not 0 <= depth <= self.depth:
            raise DomainError(f"ancestor depth {depth} outside [0, {self.depth}]")
        return NodeRef(depth, self.index >> (self.depth - depth))

    @classmethod
    def from_heap_id(cls, heap_id: int) -> "NodeRef":
        depth = int(heap_id).bit_length() - 1
        return cls(depth, heap_id - (1 << depth))


ROOT = NodeRef(0, 0)


@dataclass(frozen=True)
class FieldParams:
    depth: int
    seed: int
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if self.depth < 1:
            raise DomainError(f"depth must be >= 1, got {self.depth}")
        if self.depth > self.max_depth:
            raise ResourceError(f"depth {self.depth} exceeds the configured maximum {self.max_depth}")
        if not 0 <= int(self.seed) <= _MASK64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


class IncrementOracle:
    """Counter-based source of the i.i.d. standard Gaussian increments."""

    def __init__(self, params: FieldParams):
        self.params = params

    @property
    def depth(self) -> int:
        return self.params.depth

    def level(self, depth: int, start: int = 0, count: int | None = None) -> np.ndarray:
        """Increments of the nodes ``(depth, start) .. (depth, start + count - 1)``."""
        if depth < 1:
            raise DomainError("root has no increment")
        if count is None:
            count = (1 << depth) - start
        ids = np.arange((1 << depth) + start, (1 << depth) + start + count, dtype=np.uint64)
        return ndtri(uniform53(mix64(self.params.seed, ids)))

    def increment(self, node: NodeRef) -> float:
        if node.depth == 0:
            raise DomainError("root has no increment")
        return float(self.level(node.depth, node.index, 1)[0])


class ArrayField(IncrementOracle):
    """Field with explicitly given increments; a test hook for degenerate disorders.

    ``levels[d]`` holds the ``2**d`` increments at depth ``d`` (``levels[0]`` is ignored).
    """

    def __init__(self, levels: Sequence[Sequence[float]], seed: int = 0):
        depth = len(levels) - 1
        super().__init__(FieldParams(depth, seed))
        self._levels = [np.zeros(1)] + [np.asarray(levels[d], dtype=float) for d in range(1, depth + 1)]
        for d in range(1, depth + 1):
            if self._levels[d].shape != (1 << d,):
                raise DomainError(f"level {d} needs {1 << d} increments, got {self._levels[d].shape}")

    @classmethod
    def zeros(cls, depth: int) -> "ArrayField":
        return cls([np.zeros(1 << d) for d in range(depth + 1)])

    def level(self, depth, start=0, count=None):
        if depth < 1:
            raise DomainError("root has no increment")
        if count is None:
            count = (1 << depth) - start
        return self._levels[depth][start:start + count].copy()


class CachedField(IncrementOracle):
    """Memoizes whole levels of another oracle, for reuse across several ``beta``."""

    def __init__(self, base: IncrementOracle):
        super().__init__(base.params)
        self._base = base
        self._cache: dict[int, np.ndarray] = {}

    def level(self, depth, start=0, count=None):
        if depth not in self._cache:
            self._cache[depth] = self._base.level(depth)
        if count is None:
            count = (1 << depth) - start
        return self._cache[depth][start:start + count].copy()


def increment(oracle: IncrementOracle, node: NodeRef) -> float:
    return oracle.increment(node)


def path_sum(oracle: IncrementOracle, leaf: NodeRef, l: int) -> float:
    """Partial sum of the increments on the root-leaf path down to depth ``l``."""
    n = oracle.depth
    if leaf.depth != n:
        raise DomainError(f"leaf must sit at depth {n}, got {leaf.depth}")
    if not 0 <= l <= n:
        raise DomainError(f"l={l} outside [0, {n}]")
    return float(sum(oracle.increment(leaf.ancestor(d)) for d in range(1, l + 1)))


def lca_depth(v: NodeRef, w: NodeRef) -> int:
    """Depth of the deepest common ancestor of two vertices at equal depth."""
    if v.depth != w.depth:
        raise DomainError(f"depths differ: {v.depth} vs {w.depth}")
    return v.depth - (v.index ^ w.index).bit_length()


def lca_depths(a: np.ndarray, b: np.ndarray, depth: int) -> np.ndarray:
    """Vectorized :func:`lca_depth` for leaf index arrays at a common depth."""
    x = np.bitwise_xor(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    _, bit_length = np.frexp(x.astype(np.float64))
    return depth - bit_length.astype(np.int64)


def level_path_sums(oracle: IncrementOracle) -> list[np.ndarray]:
    """Partial sums ``S_w`` for every vertex, one array per depth (depth 0 is ``[0.]``)."""
    out = [np.zeros(1)]
    for d in range(1, oracle.depth + 1):
        out.append(np.repeat(out[-1], 2) + oracle.level(d))
    return out


@dataclass
class SubtreeBlock:
    """Increments of the subtree hanging below one vertex at depth ``top``."""

    top: int
    index: int
    prefix: float
    levels: list[np.ndarray]  # levels[k]: increments at depth top + k, k >= 1


def subtree_blocks(oracle: IncrementOracle, block_depth: int = 16) -> Iterator[SubtreeBlock]:
    """Walk the tree as subtrees of height at most ``block_depth``.

    Only one block is materialized at a time, so memory stays bounded by
    ``2**(block_depth + 1)`` floats however deep the tree is.
    """
    n = oracle.depth
    top = max(0, n - block_depth)
    h = n - top
    prefixes = level_path_sums_upto(oracle, top)
    for t in range(1 << top):
        levels = [np.zeros(1)]
        for k in range(1, h + 1):
            levels.append(oracle.level(top + k, t << k, 1 << k))
        yield SubtreeBlock(top, t, float(prefixes[t]), levels)


def level_path_sums_upto(oracle: IncrementOracle, depth: int) -> np.ndarray:
    s = np.zeros(1)
    for d in range(1, depth + 1):
        s = np.repeat(s, 2) + oracle.level(d)
    return s
