"""Partition function, free energy, exact Gibbs sampling and the leader."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, ResourceError
from .field import (
    FieldParams,
    IncrementOracle,
    NodeRef,
    derive_seed,
    subtree_blocks,
)

BETA_C = math.sqrt(2.0 * math.log(2.0))
LOG2 = math.log(2.0)

MEMORY_BUDGET = 2 * 1024**3


@dataclass(frozen=True)
class GibbsParams:
    field: FieldParams
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")

    @classmethod
    def of(cls, depth: int, beta: float, seed: int) -> "GibbsParams":
        return cls(FieldParams(depth, seed), beta)

    @property
    def depth(self) -> int:
        return self.field.depth


def _oracle(params: GibbsParams | FieldParams, oracle: IncrementOracle | None) -> IncrementOracle:
    if oracle is not None:
        return oracle
    fp = params.field if isinstance(params, GibbsParams) else params
    return IncrementOracle(fp)


def table_bytes(depth: int) -> int:
    """Bytes held by a :class:`PartitionTable` of the given depth."""
    return 2 * 8 * (1 << (depth + 1))


@dataclass
class PartitionTable:
    """Per-vertex subtree log-partition values ``M(w)``.

    ``M(leaf) = 0`` and ``M(w) = log(exp(beta*g_c0 + M(c0)) + exp(beta*g_c1 + M(c1)))``,
    so ``M(root) = log Z_N(beta)``.  ``increments[d]`` and ``log_sub[d]`` are the
    depth-``d`` arrays (``increments[0]`` is a dummy zero for the root).
    """

    params: GibbsParams
    increments: list[np.ndarray]
    log_sub: list[np.ndarray]
    _masses: list[np.ndarray] | None = dc_field(default=None, repr=False)
    _sums: list[np.ndarray] | None = dc_field(default=None, repr=False)

    @property
    def depth(self) -> int:
        return len(self.increments) - 1

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def log_z(self) -> float:
        return float(self.log_sub[0][0])

    def masses(self, depth: int) -> np.ndarray:
        """Gibbs mass of every depth-``depth`` subtree, ``exp(M(w) + beta*S_w - log Z)``."""
        if self._masses is None:
            # top-down: every factor is exp(<= 0), no overflow at any beta
            out = [np.ones(1)]
            for d in range(1, self.depth + 1):
                parent = np.repeat(self.log_sub[d - 1], 2)
                out.append(np.repeat(out[-1], 2) * np.exp(self.beta * self.increments[d] + self.log_sub[d] - parent))
            self._masses = out
        return self._masses[depth]

    def path_sums(self, depth: int) -> np.ndarray:
        if self._sums is None:
            s = [np.zeros(1)]
            for d in range(1, self.depth + 1):
                s.append(np.repeat(s[-1], 2) + self.increments[d])
            self._sums = s
        return self._sums[depth]

    def leaf_weights(self) -> np.ndarray:
        return self.masses(self.depth)

    def is_degenerate(self) -> bool:
        """True when every increment vanishes (no Gaussian disorder at all)."""
        return all(not np.any(g) for g in self.increments[1:])


def build_table(
    params: GibbsParams,
    oracle: IncrementOracle | None = None,
    memory_budget: int = MEMORY_BUDGET,
) -> PartitionTable:
    n = params.depth
    if table_bytes(n) > memory_budget:
        raise ResourceError(
            f"partition table for depth {n} needs {table_bytes(n)} bytes, budget is {memory_budget}"
        )
    src = _oracle(params, oracle)
    beta = params.beta
    increments = [np.zeros(1)] + [src.level(d) for d in range(1, n + 1)]
    log_sub: list[np.ndarray] = [None] * (n + 1)  # type: ignore[list-item]
    log_sub[n] = np.zeros(1 << n)
    for d in range(n, 0, -1):
        a = beta * increments[d] + log_sub[d]
        log_sub[d - 1] = np.logaddexp(a[0::2], a[1::2])
    return PartitionTable(params, increments, log_sub)


def _subtree_reduce(levels: list[np.ndarray], combine, weight: float):
    """Bottom-up reduction of one block; returns the value at the block root."""
    h = len(levels) - 1
    acc = np.zeros(1 << h)
    for k in range(h, 0, -1):
        a = weight * levels[k] + acc
        acc = combine(a[0::2], a[1::2])
    return float(acc[0])


def log_partition_streaming(
    params: GibbsParams,
    oracle: IncrementOracle | None = None,
    block_depth: int = 16,
) -> float:
    """``log Z_N`` without materializing the tree; memory is one block of ``2**block_depth`` leaves."""
    src = _oracle(params, oracle)
    beta = params.beta
    parts = [beta * b.prefix + _subtree_reduce(b.levels, np.logaddexp, beta)
             for b in subtree_blocks(src, block_depth)]
    return float(logsumexp(parts))


def leader(params: FieldParams | GibbsParams, oracle: IncrementOracle | None = None,
           block_depth: int = 16) -> float:
    """Maximum leaf energy ``M_N = max_v S_v(N)`` of one disorder."""
    src = _oracle(params, oracle)
    return max(b.prefix + _subtree_reduce(b.levels, np.maximum, 1.0)
               for b in subtree_blocks(src, block_depth))


def leader_centering(depth: int) -> float:
    """``m_N = beta_c N - 3/(2 beta_c) log N``."""
    return BETA_C * depth - 1.5 / BETA_C * math.log(depth)


@dataclass
class LeaderStats:
    depth: int
    m_n: float
    lambda_n: float
    centered: np.ndarray  # samples of M_N - m_N

    @property
    def median(self) -> float:
        return float(np.median(self.centered))

    @property
    def std(self) -> float:
        return float(np.std(self.centered, ddof=1))


def leader_stats(depth: int, replicates: int, base_seed: int) -> LeaderStats:
    m = leader_centering(depth)
    vals = np.array([leader(FieldParams(depth, derive_seed(base_seed, r))) for r in range(replicates)])
    return LeaderStats(depth, m, m / depth, vals - m)


@dataclass
class FreeEnergyEstimate:
    mean: float
    stderr: float
    replicates: int
    depth: int
    beta: float
    values: np.ndarray = dc_field(repr=False, default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.stderr < 0 or self.replicates < 1:
            raise DomainError("stderr must be >= 0 and replicates >= 1")


def replicate_free_energy(depth: int, beta: float, seed: int) -> float:
    """``(1/N) log Z_N`` for one disorder."""
    return build_table(GibbsParams.of(depth, beta, seed)).log_z / depth


def free_energy(depth: int, beta: float, replicates: int, base_seed: int) -> FreeEnergyEstimate:
    if replicates < 2:
        raise DomainError("free_energy needs at least 2 replicates for a standard error")
    GibbsParams.of(depth, beta, 0)  # validate
    vals = np.array([replicate_free_energy(depth, beta, derive_seed(base_seed, r)) for r in range(replicates)])
    return FreeEnergyEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicates)),
                              replicates, depth, beta, vals)


def limit_free_energy(beta: float) -> float:
    """Quenched free energy of the infinite tree."""
    return LOG2 + beta**2 / 2 if beta < BETA_C else BETA_C * beta


def sample_leaves(table: PartitionTable, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` i.i.d. leaf indices from the Gibbs measure of one disorder.

    Descends from the root, entering child ``c`` with probability proportional
    to ``exp(beta*g_c + M(c))``.
    """
    idx = np.zeros(size, dtype=np.int64)
    beta = table.beta
    for d in range(1, table.depth + 1):
        a = beta * table.increments[d] + table.log_sub[d]
        left = a[2 * idx]
        right = a[2 * idx + 1]
        # P(right) = 1 / (1 + exp(left - right))
        p_right = 0.5 * (1.0 + np.tanh(0.5 * (right - left)))
        idx = 2 * idx + (rng.random(size) < p_right)
    return idx


def sample_leaf(table: PartitionTable, rng: np.random.Generator) -> NodeRef:
    return NodeRef(table.depth, int(sample_leaves(table, 1, rng)[0]))

