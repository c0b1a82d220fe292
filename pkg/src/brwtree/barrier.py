"""Monte Carlo estimates for Gaussian walks below barriers, direct and exponentially tilted."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats

from .errors import DomainError
from .field import FieldParams, IncrementOracle, derive_seed, subtree_blocks
from .gibbs import leader_centering

CHUNK = 1 << 16


@dataclass
class BarrierEstimate:
    probability: float
    stderr: float
    samples: int
    method: str = "direct"
    hits: int | None = None
    upper: float | None = None  # one-sided 95% Clopper-Pearson bound when hits == 0
    flags: tuple[str, ...] = dc_field(default=())
    # probability = scaled * exp(log_scale); tilted estimates at large T underflow
    # double precision, so the scaled pair is what downstream fits should use
    log_scale: float = 0.0
    scaled: float | None = None
    scaled_stderr: float | None = None

    def __post_init__(self):
        if self.stderr < 0:
            raise DomainError("stderr must be >= 0")
        if self.scaled is None:
            self.scaled, self.scaled_stderr = self.probability, self.stderr


def clopper_pearson_upper(hits: int, samples: int, level: float = 0.95) -> float:
    if hits >= samples:
        return 1.0
    return float(stats.beta.ppf(level, hits + 1, samples - hits))


def _binomial(hits: int, samples: int, method: str) -> BarrierEstimate:
    p = hits / samples
    upper = clopper_pearson_upper(hits, samples) if hits == 0 else None
    return BarrierEstimate(p, math.sqrt(p * (1 - p) / samples), samples, method, hits, upper)


def estimates_agree(x: BarrierEstimate, y: BarrierEstimate, k: float = 3.0) -> bool:
    """Whether two estimates of one probability are consistent.

    Normally ``|x - y| < k`` combined standard errors.  A zero-count estimate has
    a degenerate binomial error of 0, so it is replaced by its one-sided
    Clopper-Pearson interval ``[0, upper]`` and the other estimate must fall
    inside it (allowing ``k`` of its own standard errors).
    """
    for zero, other in ((x, y), (y, x)):
        if zero.hits == 0 and zero.upper is not None:
            return other.probability - k * other.stderr <= zero.upper
    return abs(x.probability - y.probability) < k * math.hypot(x.stderr, y.stderr)


def ballot_estimate(n: int, z: float, a: float, b: float, samples: int,
                    rng: np.random.Generator) -> BarrierEstimate:
    """``P^z(S(t) >= 0 for 0 < t < n, S(n) in [a, b])`` by plain simulation."""
    if samples < 100:
        raise DomainError("ballot_estimate needs at least 100 samples")
    if n < 1 or z < 0 or not 0 <= a < a + 1 <= b:
        raise DomainError(f"need n >= 1, z >= 0 and 0 <= a < a + 1 <= b; got n={n}, z={z}, [{a}, {b}]")
    hits = 0
    for lo in range(0, samples, CHUNK):
        pos = np.full(min(CHUNK, samples - lo), float(z))
        for _ in range(n - 1):
            pos += rng.standard_normal(pos.size)
            pos = pos[pos >= 0]
            if pos.size == 0:
                break
        pos = pos + rng.standard_normal(pos.size)
        hits += int(np.count_nonzero((pos >= a) & (pos <= b)))
    return _binomial(hits, samples, "direct")


@dataclass(frozen=True)
class WalkParams:
    """Walk of ``length`` steps from ``start``; barrier ``drift*l + barrier``; end window ``drift*T + [a, b]``."""

    length: int
    start: float = 0.0
    drift: float = 0.0
    barrier: float = 0.0
    window: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.length < 1:
            raise DomainError("length must be >= 1")
        if self.window[0] > self.window[1]:
            raise DomainError("window must satisfy a <= b")


def tilted_barrier_estimate(params: WalkParams, samples: int, method: str,
                            rng: np.random.Generator) -> BarrierEstimate:
    """``P^z(S(l) <= drift*l + K for l = 1..T; S(T) in drift*T + [a, b])``.

    ``method="direct"`` simulates centered walks.  ``method="tilted"`` simulates
    walks with drift ``lambda`` and reweights each by
    ``exp(-lambda (S(T) - z) + T lambda^2 / 2)``, the exact likelihood ratio, so both
    estimate the same number.
    """
    if method not in ("direct", "tilted"):
        raise DomainError(f"unknown method {method!r}")
    if samples < 2:
        raise DomainError("need at least 2 samples")
    t, z, lam, k = params.length, params.start, params.drift, params.barrier
    a, b = params.window
    shift = lam if method == "tilted" else 0.0
    total = 0.0
    total_sq = 0.0
    hits = 0
    for lo in range(0, samples, CHUNK):
        pos = np.full(min(CHUNK, samples - lo), float(z))
        for l in range(1, t + 1):
            pos += shift + rng.standard_normal(pos.size)
            pos = pos[pos <= lam * l + k]
            if pos.size == 0:
                break
        end = pos[(pos >= lam * t + a) & (pos <= lam * t + b)]
        hits += end.size
        if method == "tilted":
            # weight exp(-lam (S(T) - z) + T lam^2 / 2), split as exp(log_scale) * w with w in (0, 1]
            w = np.exp(-lam * (end - lam * t - a))
            total += float(w.sum())
            total_sq += float((w * w).sum())
        else:
            total += end.size
            total_sq += end.size
    log_scale = -lam * (lam * t + a - z) + t * lam * lam / 2 if method == "tilted" else 0.0
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    se = math.sqrt(var / samples)
    scale = math.exp(log_scale)
    est = BarrierEstimate(mean * scale, se * scale, samples, method, hits, log_scale=log_scale,
                          scaled=mean, scaled_stderr=se)
    if method == "direct":
        flags = ("unreliable direct estimate",) if mean < 10 / samples else ()
        est.upper = clopper_pearson_upper(hits, samples) if hits == 0 else None
        est.flags = flags
    return est


def crosses_barrier(oracle: IncrementOracle, slope: float, offset: float, block_depth: int = 16) -> bool:
    """Whether some vertex at depth ``l >= 1`` has ``S_w(l) >= slope*l + offset``."""
    n = oracle.depth
    top = max(0, n - block_depth)
    s = np.zeros(1)
    for d in range(1, top + 1):
        s = np.repeat(s, 2) + oracle.level(d)
        if np.any(s >= slope * d + offset):
            return True
    for blk in subtree_blocks(oracle, block_depth):
        s = np.array([blk.prefix])
        for k in range(1, len(blk.levels)):
            s = np.repeat(s, 2) + blk.levels[k]
            if np.any(s >= slope * (blk.top + k) + offset):
                return True
    return False


def gamma_event_estimate(depth: int, kappa: float, replicates: int, base_seed: int) -> BarrierEstimate:
    """Fraction of disorders where some walker reaches ``lambda_N l + kappa log N``."""
    if kappa < 0:
        raise DomainError("kappa must be >= 0")
    lam = leader_centering(depth) / depth
    k = kappa * math.log(depth)
    hits = sum(crosses_barrier(IncrementOracle(FieldParams(depth, derive_seed(base_seed, r))), lam, k)
               for r in range(replicates))
    return _binomial(int(hits), replicates, "direct")


def loglog_fit(x, y) -> dict:
    """Least-squares line through ``(log x, log y)``."""
    res = stats.linregress(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))
    return {"slope": float(res.slope), "intercept": float(res.intercept), "r2": float(res.rvalue**2),
            "slope_stderr": float(res.stderr)}

