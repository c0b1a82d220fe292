"""Replica overlaps: exact per-disorder laws, integration by parts, Ghirlanda-Guerra residuals."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import DomainError
from .field import CachedField, FieldParams, IncrementOracle, derive_seed, lca_depths
from .gibbs import GibbsParams, PartitionTable, build_table, sample_leaves


@dataclass
class OverlapArray:
    """Symmetric ``n x n`` matrix of replica overlaps with unit diagonal."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 2:
            raise DomainError(f"overlap array must be square with n >= 2, got shape {v.shape}")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_leaves(cls, leaves, depth: int) -> "OverlapArray":
        idx = np.asarray(leaves, dtype=np.int64)
        return cls(lca_depths(idx[:, None], idx[None, :], depth) / depth)

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.values, self.values.T))

    def is_ultrametric(self) -> bool:
        return is_ultrametric(self.values)


def is_ultrametric(r: np.ndarray) -> bool:
    """``R_ij >= min(R_ik, R_kj)`` for every triple (works on stacked arrays too)."""
    r = np.asarray(r)
    bound = np.minimum(r[..., :, :, None], np.swapaxes(r, -1, -2)[..., None, :, :])
    # bound[..., i, k, j] = min(R_ik, R_kj)
    return bool(np.all(r[..., :, None, :] >= bound))


def overlap_arrays(leaves: np.ndarray, depth: int) -> np.ndarray:
    """Overlap arrays for a batch of replica tuples, ``leaves`` of shape ``(draws, n)``."""
    return lca_depths(leaves[:, :, None], leaves[:, None, :], depth) / depth


@dataclass
class EmpiricalOverlapMeasure:
    """A probability measure on the overlap grid ``{0, 1/N, ..., 1}``."""

    support: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        if abs(self.masses.sum() - 1.0) > 1e-9:
            raise DomainError(f"masses sum to {self.masses.sum()}, not 1")

    @property
    def edges(self) -> np.ndarray:
        """Bin edges putting each atom in the middle of its own bin."""
        mid = (self.support[1:] + self.support[:-1]) / 2
        return np.concatenate([[0.0], mid, [1.0]])

    def mass(self, lo: float, hi: float, closed: str = "neither") -> float:
        """Mass of the interval between ``lo`` and ``hi``; ``closed`` in {neither, left, right, both}."""
        s = self.support
        left = s >= lo if closed in ("left", "both") else s > lo
        right = s <= hi if closed in ("right", "both") else s < hi
        return float(self.masses[left & right].sum())

    def mean(self) -> float:
        return float(self.support @ self.masses)

    def moment(self, p: float) -> float:
        return float(self.support**p @ self.masses)

    def tail(self) -> np.ndarray:
        """``P(R >= support[d])`` for every atom."""
        return np.cumsum(self.masses[::-1])[::-1]


def overlap_law_exact(table: PartitionTable) -> EmpiricalOverlapMeasure:
    """Law of ``R_12`` under the product Gibbs measure of one disorder.

    ``P(R_12 >= d/N) = sum_{|w|=d} mass(w)**2``; atoms come from successive differences.
    """
    n = table.depth
    tail = np.array([np.sum(table.masses(d) ** 2) for d in range(n + 1)])
    tail[0] = 1.0
    masses = tail - np.append(tail[1:], 0.0)
    return EmpiricalOverlapMeasure(np.arange(n + 1) / n, masses)


def mean_overlap(table: PartitionTable) -> float:
    n = table.depth
    return float(sum(np.sum(table.masses(d) ** 2) for d in range(1, n + 1)) / n)


def mean_energy(table: PartitionTable) -> float:
    """``<H_N>`` under the Gibbs measure of one disorder, from subtree masses."""
    return float(sum(table.masses(d) @ table.increments[d] for d in range(1, table.depth + 1)))


def average_overlap_law(depth: int, beta: float, replicates: int, base_seed: int):
    """Disorder average of the exact overlap laws; returns the measure and per-disorder masses."""
    rows = np.array([
        overlap_law_exact(build_table(GibbsParams.of(depth, beta, derive_seed(base_seed, r)))).masses
        for r in range(replicates)
    ])
    return EmpiricalOverlapMeasure(np.arange(depth + 1) / depth, rows.mean(axis=0)), rows


@dataclass
class IbpResult:
    lhs: float
    rhs: float
    stderr: float
    replicates: int
    degenerate: bool = False
    lhs_values: np.ndarray = dc_field(repr=False, default_factory=lambda: np.empty(0))
    rhs_values: np.ndarray = dc_field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def discrepancy(self) -> float:
        return self.lhs - self.rhs


def ibp_terms(table: PartitionTable) -> tuple[float, float]:
    """Per-disorder ``(<H_N>/(beta N), 1 - <R_12>)``."""
    return mean_energy(table) / (table.beta * table.depth), 1.0 - mean_overlap(table)


def ibp_check(
    depth: int,
    beta: float,
    replicates: int,
    base_seed: int,
    oracle_factory: Callable[[int], IncrementOracle] | None = None,
) -> IbpResult:
    """Compare ``E<H_N>/(beta N)`` with ``E<1 - R_12>``.

    The two sides agree in expectation over Gaussian disorder at every finite
    ``N``.  ``stderr`` is the disorder-batched error of the paired difference.
    A field without disorder (all increments zero) is reported via ``degenerate``.
    """
    if replicates < 2:
        raise DomainError("ibp_check needs at least 2 replicates")
    lhs, rhs, degenerate = [], [], False
    for r in range(replicates):
        seed = derive_seed(base_seed, r)
        params = GibbsParams.of(depth, beta, seed)
        table = build_table(params, oracle_factory(seed) if oracle_factory else None)
        degenerate |= table.is_degenerate()
        a, b = ibp_terms(table)
        lhs.append(a)
        rhs.append(b)
    lhs, rhs = np.array(lhs), np.array(rhs)
    diff = lhs - rhs
    return IbpResult(float(lhs.mean()), float(rhs.mean()), float(diff.std(ddof=1) / math.sqrt(replicates)),
                     replicates, degenerate, lhs, rhs)


@dataclass
class FdRow:
    beta: float
    h: float
    fd: float
    identity: float
    discrepancy: float
    stderr: float
    fd_bias: float
    fd_bias_stderr: float


def replicate_fd_terms(depth: int, betas, seed: int) -> np.ndarray:
    """Rows ``(F_N, <H_N>/N, beta (1 - <R_12>))`` of one disorder, one per grid point."""
    oracle = IncrementOracle(FieldParams(depth, seed))
    cached = CachedField(oracle)
    out = np.empty((len(betas), 3))
    for j, b in enumerate(betas):
        table = build_table(GibbsParams(oracle.params, float(b)), cached)
        out[j] = table.log_z / depth, mean_energy(table) / depth, b * (1.0 - mean_overlap(table))
    return out


def _check_grid(betas) -> np.ndarray:
    betas = np.asarray(betas, dtype=float)
    if betas.size < 3:
        raise DomainError("finite-difference grid needs at least 3 points")
    if np.any(np.diff(betas) <= 0) or betas[0] <= 0:
        raise DomainError("grid must be positive and strictly increasing")
    return betas


def fd_report(betas, terms: np.ndarray) -> list[FdRow]:
    """Central differences from stacked per-disorder terms of shape ``(replicates, grid, 3)``."""
    betas = _check_grid(betas)
    reps = terms.shape[0]

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(reps))

    f, deriv, ident = terms[..., 0], terms[..., 1], terms[..., 2]
    rows = []
    for j in range(1, betas.size - 1):
        span = betas[j + 1] - betas[j - 1]
        fd = (f[:, j + 1] - f[:, j - 1]) / span
        disc = fd - ident[:, j]
        bias = fd - deriv[:, j]
        rows.append(FdRow(float(betas[j]), span / 2, float(fd.mean()), float(ident[:, j].mean()),
                          float(disc.mean()), se(disc), float(bias.mean()), se(bias)))
    return rows


def fd_derivative_check(betas, depth: int, replicates: int, base_seed: int) -> list[FdRow]:
    """Central differences of ``F_N`` against ``beta E<1 - R_12>`` at interior grid points.

    The same disorders are used at every ``beta`` so differences are paired.
    ``fd_bias`` isolates the pure finite-difference error by comparing with the
    exact per-disorder derivative ``<H_N>/N``.
    """
    betas = _check_grid(betas)
    if replicates < 2:
        raise DomainError("fd_derivative_check needs at least 2 replicates")
    terms = np.array([replicate_fd_terms(depth, betas, derive_seed(base_seed, r)) for r in range(replicates)])
    return fd_report(betas, terms)


# --- test-function catalog -------------------------------------------------

_MONO = re.compile(r"R(\d)(\d)(?:\^(\d+))?$")
_PATTERN = re.compile(r"pattern:(.+)$")


@dataclass(frozen=True)
class CatalogFunction:
    """A bounded test function of the first ``n`` replicas' overlap array."""

    ident: str
    arity: int  # smallest n the function is defined for
    fn: Callable[[np.ndarray], np.ndarray] = dc_field(compare=False, repr=False)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.fn(r)


def parse_catalog(ident: str) -> CatalogFunction:
    """Parse ``"1"``, a monomial like ``"R12^2*R13"``, or ``"pattern:{1,2}{3}"``.

    Pattern indicators threshold overlaps at 1/2 before comparison.
    """
    ident = ident.strip()
    if ident in ("1", "one", "const"):
        return CatalogFunction(ident, 2, lambda r: np.ones(r.shape[:-2]))
    m = _PATTERN.match(ident)
    if m:
        from .cascade import GramPattern  # local import: cascade imports this module

        pat = GramPattern.parse(m.group(1))
        a = pat.matrix

        def indicator(r):
            n = a.shape[0]
            return np.all((r[..., :n, :n] >= 0.5) == (a == 1), axis=(-1, -2)).astype(float)

        return CatalogFunction(ident, pat.n, indicator)
    factors = []
    arity = 2
    for tok in ident.split("*"):
        fm = _MONO.match(tok.strip())
        if not fm:
            raise DomainError(f"unknown catalog id {ident!r}")
        i, j = int(fm.group(1)), int(fm.group(2))
        if i == j or i < 1 or j < 1:
            raise DomainError(f"unknown catalog id {ident!r}: bad replica pair R{i}{j}")
        factors.append((i - 1, j - 1, int(fm.group(3) or 1)))
        arity = max(arity, i, j)

    def monomial(r):
        out = np.ones(r.shape[:-2])
        for i, j, a in factors:
            out = out * r[..., i, j] ** a
        return out

    return CatalogFunction(ident, arity, monomial)


@dataclass
class GgiResidual:
    n: int
    p: int
    f: str
    lhs: float
    rhs: float
    residual: float
    stderr: float
    replicates: int = 0
    depth: int = 0
    beta: float = 0.0


def ggi_terms(table: PartitionTable, configs, draws: int, rng: np.random.Generator) -> np.ndarray:
    """Per-disorder Gibbs averages for each ``(n, p, f)`` in ``configs``.

    Row ``i`` holds ``(<f R_{1,n+1}^p>, <f>, <R_12^p>, sum_{k=2}^n <f R_{1k}^p>)``.
    ``<R_12^p>`` is exact from the overlap law; the rest average over ``draws``
    replica tuples shared by all configs (the first ``n + 1`` replicas of each tuple).
    """
    width = max(n for n, _, _ in configs) + 1
    leaves = sample_leaves(table, draws * width, rng).reshape(draws, width)
    r = overlap_arrays(leaves, table.depth)
    law = overlap_law_exact(table)
    out = np.empty((len(configs), 4))
    for i, (n, p, f) in enumerate(configs):
        fv = f(r[:, :n, :n])
        out[i] = (np.mean(fv * r[:, 0, n] ** p), np.mean(fv), law.moment(p),
                  np.mean(fv * np.sum(r[:, 0, 1:n] ** p, axis=1)))
    return out


def ggi_from_terms(terms: np.ndarray, n: int) -> tuple[float, float, float, float]:
    """``(lhs, rhs, residual, jackknife stderr)`` from a ``(disorders, 4)`` array of terms."""
    k = terms.shape[0]
    m = terms.mean(axis=0)
    lhs, rhs = float(m[0]), float((m[1] * m[2] + m[3]) / n)
    loo = (terms.sum(axis=0)[None, :] - terms) / (k - 1)
    res_loo = loo[:, 0] - (loo[:, 1] * loo[:, 2] + loo[:, 3]) / n
    se = math.sqrt((k - 1) / k * np.sum((res_loo - res_loo.mean()) ** 2))
    return lhs, rhs, lhs - rhs, se


def _check_config(n, p, f):
    if n < 2 or p < 1:
        raise DomainError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    fn = parse_catalog(f)
    if fn.arity > n:
        raise DomainError(f"catalog function {f!r} needs {fn.arity} replicas, n={n}")
    return n, p, fn


def replicate_ggi_terms(depth: int, beta: float, configs, draws: int, seed: int) -> np.ndarray:
    """Terms of one disorder; ``configs`` holds ``(n, p, catalog id)`` triples."""
    parsed = [_check_config(*c) for c in configs]
    table = build_table(GibbsParams.of(depth, beta, seed))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6767]))
    return ggi_terms(table, parsed, draws, rng)


def ggi_residuals(depth: int, beta: float, configs, replicates: int, draws: int,
                  base_seed: int) -> list[GgiResidual]:
    """Finite-``N`` Ghirlanda-Guerra residuals for several ``(n, p, f)`` on shared disorders.

    ``lhs = E<f(R^n) R_{1,n+1}^p>`` and
    ``rhs = (E<f> E<R_12^p> + sum_{k=2}^n E<f R_{1k}^p>) / n``; the error is a
    jackknife over disorders.
    """
    configs = [tuple(c) for c in configs]
    for c in configs:
        _check_config(*c)
    if replicates < 2:
        raise DomainError("ggi_residual needs at least 2 disorders")
    terms = np.array([replicate_ggi_terms(depth, beta, configs, draws, derive_seed(base_seed, r))
                      for r in range(replicates)])
    out = []
    for i, (n, p, f) in enumerate(configs):
        lhs, rhs, res, se = ggi_from_terms(terms[:, i, :], n)
        out.append(GgiResidual(n, p, f, lhs, rhs, res, se, replicates, depth, beta))
    return out


def ggi_residual(depth: int, beta: float, n: int, p: int, f: str, replicates: int, draws: int,
                 base_seed: int) -> GgiResidual:
    return ggi_residuals(depth, beta, [(n, p, f)], replicates, draws, base_seed)[0]
