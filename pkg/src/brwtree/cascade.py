"""Poisson-Dirichlet weights, Ruelle cascade overlap arrays and Gram-pattern probabilities."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np
from more_itertools import set_partitions

from .errors import DomainError, TruncationError
from .field import derive_seed
from .gibbs import GibbsParams, PartitionTable, build_table, sample_leaves
from .replicas import OverlapArray, overlap_arrays


@dataclass(frozen=True)
class PdParams:
    theta: float
    tail_tol: float = 1e-6
    max_atoms: int = 1 << 25

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise DomainError(f"theta must lie in (0, 1], got {self.theta}")
        if not self.tail_tol > 0:
            raise DomainError("tail_tol must be positive")


@dataclass
class RankedWeights:
    """Decreasing atom weights plus the mass not resolved into atoms.

    ``tail_mass`` is spread over infinitely many vanishing atoms: replicas landing
    there never coincide.  ``weights=[]`` with ``tail_mass=1`` is the diffuse
    measure (every replica in its own cluster, all mutual overlaps 0).
    """

    weights: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or np.any(np.diff(w) > 0):
            raise DomainError("weights must be nonnegative and non-increasing")
        if abs(w.sum() + self.tail_mass - 1.0) > 1e-9:
            raise DomainError(f"weights + tail sum to {w.sum() + self.tail_mass}, not 1")
        self.weights = w

    def power_sum(self, k: int) -> float:
        return float(np.sum(self.weights**k))


def _tail_ratio(theta: float, gamma_last, y_last):
    # expected mass of points below the last kept one, relative to the largest point
    return theta / (1.0 - theta) * gamma_last * y_last


def pd_sample(params: PdParams, rng: np.random.Generator) -> RankedWeights:
    """Ranked normalized points of a Poisson process with intensity ``theta x^(-theta-1) dx``.

    Points are ``Gamma_k^(-1/theta)`` for the arrival times ``Gamma_k`` of a unit
    Poisson process.  Generation stops once the expected mass of the remaining
    points, relative to the total, is below ``tail_tol``.
    """
    theta = params.theta
    if theta == 1.0:
        return RankedWeights(np.empty(0), 1.0)
    gammas = np.cumsum(rng.standard_exponential(1024))
    chunk = 1024
    while True:
        y = (gammas / gammas[0]) ** (-1.0 / theta)
        tail = _tail_ratio(theta, gammas[-1], y[-1])
        total = y.sum() + tail
        if tail / total <= params.tail_tol:
            break
        if gammas.size >= params.max_atoms:
            raise TruncationError("tail tolerance unreachable", atoms=gammas.size, tail_mass=tail / total)
        chunk = min(2 * chunk, params.max_atoms - gammas.size)
        gammas = np.concatenate([gammas, gammas[-1] + np.cumsum(rng.standard_exponential(chunk))])
    return RankedWeights(y / total, tail / total)


def pd_sample_batch(theta: float, size: int, atoms: int, rng: np.random.Generator):
    """``size`` independent PD(theta, 0) samples truncated at ``atoms`` points each.

    Returns ``(weights, tail)`` with shapes ``(size, atoms)`` and ``(size,)``.
    """
    if not 0 < theta < 1:
        raise DomainError(f"batch sampling needs 0 < theta < 1, got {theta}")
    gammas = np.cumsum(rng.standard_exponential((size, atoms)), axis=1)
    y = (gammas / gammas[:, :1]) ** (-1.0 / theta)
    tail = _tail_ratio(theta, gammas[:, -1], y[:, -1])
    total = y.sum(axis=1) + tail
    return y / total[:, None], tail / total


def _labels_from_weights(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Atom index per uniform; draws beyond the atoms get fresh negative labels."""
    lab = np.searchsorted(cum, u, side="right")
    fresh = lab >= cum.shape[-1]
    lab[fresh] = -1 - np.arange(fresh.sum())
    return lab


def rpc_overlap_array(params: PdParams, n: int, rng: np.random.Generator) -> OverlapArray:
    """Overlap array of ``n`` replicas drawn from one PD sample (overlap 1 iff same atom)."""
    if n < 2:
        raise DomainError("need n >= 2 replicas")
    w = pd_sample(params, rng)
    lab = _labels_from_weights(np.cumsum(w.weights), rng.random(n))
    return OverlapArray((lab[:, None] == lab[None, :]).astype(float))


def rpc_overlap_arrays(theta: float, n: int, size: int, rng: np.random.Generator,
                       atoms: int = 2048, batch: int = 4096) -> np.ndarray:
    """``size`` independent RPC overlap arrays, shape ``(size, n, n)``."""
    if theta == 1.0:
        return np.broadcast_to(np.eye(n), (size, n, n)).copy()
    out = np.empty((size, n, n))
    for lo in range(0, size, batch):
        m = min(batch, size - lo)
        w, _ = pd_sample_batch(theta, m, atoms, rng)
        u = rng.random((m, n))
        # one flat search: shifting row r by 2r keeps rows from interleaving
        shift = 2.0 * np.arange(m)[:, None]
        flat = np.searchsorted((np.cumsum(w, axis=1) + shift).ravel(), (u + shift).ravel(), side="right")
        lab = flat.reshape(m, n) - atoms * np.arange(m)[:, None]
        # draws past the last atom land in the tail: a cluster of their own
        lab = np.where(lab >= atoms, -1 - np.arange(n)[None, :], lab)
        out[lo:lo + m] = lab[:, :, None] == lab[:, None, :]
    return out


# --- Gram patterns ---------------------------------------------------------

_BLOCK = re.compile(r"\{([^{}]*)\}")


@dataclass(frozen=True, eq=False)
class GramPattern:
    """Symmetric 0/1 matrix with unit diagonal saying which replicas coincide."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise DomainError(f"pattern must be square with n >= 2, got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise DomainError("pattern entries must be 0 or 1")
        if not np.array_equal(a, a.T) or not np.all(np.diag(a) == 1):
            raise DomainError("pattern must be symmetric with unit diagonal")
        object.__setattr__(self, "matrix", a.astype(np.int8))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_equivalence(self) -> bool:
        a = self.matrix.astype(bool)
        return bool(np.array_equal((a.astype(int) @ a.astype(int)) > 0, a))

    def blocks(self) -> list[list[int]]:
        """Blocks as sorted 0-based index lists, ordered by smallest member."""
        if not self.is_equivalence():
            raise DomainError("not ultrametric: pattern is not an equivalence relation")
        seen, out = set(), []
        for i in range(self.n):
            if i not in seen:
                blk = [int(j) for j in np.flatnonzero(self.matrix[i])]
                seen.update(blk)
                out.append(blk)
        return out

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(sorted((len(b) for b in self.blocks()), reverse=True))

    @classmethod
    def from_blocks(cls, blocks, n: int | None = None) -> "GramPattern":
        """Blocks of 1-based replica labels, e.g. ``[[1, 2], [3]]``."""
        labels = [i for b in blocks for i in b]
        n = n or max(labels)
        if sorted(labels) != list(range(1, n + 1)):
            raise DomainError(f"blocks {blocks} do not partition 1..{n}")
        a = np.zeros((n, n), dtype=np.int8)
        for b in blocks:
            idx = np.array(b) - 1
            a[np.ix_(idx, idx)] = 1
        return cls(a)

    @classmethod
    def parse(cls, text: str) -> "GramPattern":
        """Parse a set-partition descriptor such as ``"{1,2}{3}"``."""
        blocks = [[int(t) for t in m.split(",") if t.strip()] for m in _BLOCK.findall(text)]
        if not blocks or _BLOCK.sub("", text).strip():
            raise DomainError(f"cannot parse pattern {text!r}")
        return cls.from_blocks(blocks)

    def __str__(self) -> str:
        return "".join("{" + ",".join(str(i + 1) for i in b) + "}" for b in self.blocks())

    @classmethod
    def identity(cls, n: int) -> "GramPattern":
        return cls(np.eye(n, dtype=np.int8))

    @classmethod
    def ones(cls, n: int) -> "GramPattern":
        return cls(np.ones((n, n), dtype=np.int8))

    def permuted(self, perm) -> "GramPattern":
        p = np.asarray(perm)
        return GramPattern(self.matrix[np.ix_(p, p)])

    def code(self) -> int:
        return pattern_code(self.matrix[None])[0]


def all_patterns(n: int) -> Iterator[GramPattern]:
    """Every equivalence-relation pattern on ``n`` replicas (one per set partition)."""
    for part in set_partitions(range(1, n + 1)):
        yield GramPattern.from_blocks(part, n)


def pattern_code(arrays: np.ndarray) -> np.ndarray:
    """Integer code of the upper triangle of stacked 0/1 arrays (threshold 1/2)."""
    n = arrays.shape[-1]
    iu = np.triu_indices(n, 1)
    bits = (arrays[..., iu[0], iu[1]] >= 0.5).astype(np.int64)
    return bits @ (1 << np.arange(bits.shape[-1], dtype=np.int64))


@lru_cache(maxsize=None)
def _prob_by_sizes(sizes: tuple[int, ...], mu1: float) -> float:
    n = sum(sizes)
    if n == 2:
        # Case 1: the two replicas coincide or they do not
        return mu1 if sizes == (2,) else 1.0 - mu1
    if sizes[0] >= 2:
        # Case 2: drop one replica from the largest block
        m = sizes[0]
        rest = tuple(sorted((m - 1,) + sizes[1:], reverse=True))
        return _prob_by_sizes(rest, mu1) * (mu1 + m - 2) / (n - 1)
    # Case 3: identity pattern.  Start from Id_{n-1} with replica n away from
    # replica 1, then remove the n-2 patterns where n joins some other replica.
    id_prev = _prob_by_sizes((1,) * (n - 1), mu1)
    pair = _prob_by_sizes((2,) + (1,) * (n - 2), mu1)
    return id_prev * (1.0 - mu1 / (n - 1)) - (n - 2) * pair


def pattern_prob(pattern: GramPattern, mu1: float) -> float:
    """Probability that the first ``n`` replicas of an RPC with ``P(R_12 = 1) = mu1`` form ``pattern``."""
    if not 0 <= mu1 <= 1:
        raise DomainError(f"mu1 must lie in [0, 1], got {mu1}")
    if not pattern.is_equivalence():
        raise DomainError("not ultrametric: pattern is not an equivalence relation")
    return _prob_by_sizes(pattern.block_sizes(), float(mu1))


# --- empirical pattern frequencies -----------------------------------------

class RpcSource:
    """Replica arrays from independent RPC(theta) samples."""

    def __init__(self, theta: float, seed: int, atoms: int = 2048):
        PdParams(theta)
        self.theta = theta
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7270]))
        self.atoms = atoms

    def arrays(self, n: int, draws: int):
        return rpc_overlap_arrays(self.theta, n, draws, self.rng, self.atoms), None


class TreeSource:
    """Replica arrays drawn from the Gibbs measures of independent tree disorders.

    Overlaps are mapped to {0, 1} at ``threshold``; ``groups`` labels the disorder
    of each draw for batched errors.
    """

    def __init__(self, depth: int, beta: float, base_seed: int, draws_per_disorder: int = 100,
                 threshold: float = 0.5):
        self.depth, self.beta, self.base_seed = depth, beta, base_seed
        self.per = draws_per_disorder
        self.threshold = threshold

    def arrays(self, n: int, draws: int):
        disorders = math.ceil(draws / self.per)
        out, groups = [], []
        for r in range(disorders):
            seed = derive_seed(self.base_seed, r)
            table = build_table(GibbsParams.of(self.depth, self.beta, seed))
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7472]))
            leaves = sample_leaves(table, self.per * n, rng).reshape(self.per, n)
            out.append((overlap_arrays(leaves, self.depth) >= self.threshold).astype(float))
            groups.append(np.full(self.per, r))
        return np.concatenate(out)[:draws], np.concatenate(groups)[:draws]


def pattern_prob_empirical(source, pattern: GramPattern, draws: int) -> tuple[float, float]:
    """Frequency of ``pattern`` among ``draws`` sampled arrays, with its standard error."""
    arrays, groups = source.arrays(pattern.n, draws)
    hits = (pattern_code(arrays) == pattern.code()).astype(float)
    return frequency_estimate(hits, groups)


def pattern_frequencies(source, n: int, draws: int) -> dict[str, tuple[float, float]]:
    """Frequencies of every ``n``-replica pattern, all read off one set of ``draws`` arrays."""
    arrays, groups = source.arrays(n, draws)
    codes = pattern_code(arrays)
    return {str(p): frequency_estimate((codes == p.code()).astype(float), groups) for p in all_patterns(n)}


def frequency_estimate(hits: np.ndarray, groups=None) -> tuple[float, float]:
    est = float(hits.mean())
    if groups is None:
        return est, math.sqrt(est * (1 - est) / hits.size)
    _, inv = np.unique(groups, return_inverse=True)
    per = np.bincount(inv, weights=hits) / np.bincount(inv)
    return est, float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else float("nan")


def cluster_weights(table: PartitionTable, epsilon: float) -> RankedWeights:
    """Ranked Gibbs masses of the leaf groups with mutual overlap at least ``1 - epsilon``.

    The groups are the subtrees rooted at depth ``ceil((1 - epsilon) N)`` (at least 1).
    """
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    d0 = cluster_depth(table.depth, epsilon)
    m = np.sort(table.masses(d0))[::-1]
    return RankedWeights(m[m > 0], 0.0)


def cluster_depth(depth: int, epsilon: float) -> int:
    return max(1, math.ceil((1 - epsilon) * depth - 1e-9))
