"""Experiment registry: parameter schemas, per-task workers, CSV columns and summaries.

Every experiment splits into independent tasks (usually one per disorder).  A
task is a module-level function plus arguments, so it can run in a worker
process; rows come back in task order whatever the pool size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .. import barrier, cascade, gibbs, replicas
from ..field import FieldParams, IncrementOracle, derive_seed
from ..gibbs import BETA_C, GibbsParams, build_table
from .config import Param

Row = dict[str, Any]


def _pos(x):
    return x > 0


def _pos_list(xs):
    return len(xs) > 0 and all(isinstance(x, (int, float)) and x > 0 for x in xs)


def _depth_ok(n):
    # depths past the field maximum are a resource problem, reported by the field itself
    return n >= 1


def _rng(seed: int, task: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, task]))


def _stats(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()) if x.size else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


@dataclass(frozen=True)
class Experiment:
    name: str
    schema: dict[str, Param]
    columns: tuple[str, ...]
    tasks: Callable[[dict, int], list[tuple]]
    summary: Callable[[dict, list[Row]], dict]


REGISTRY: dict[str, Experiment] = {}


def register(exp: Experiment) -> Experiment:
    REGISTRY[exp.name] = exp
    return exp


BETA = Param(float, None, _pos, "must be > 0")
DEPTH = Param(int, None, _depth_ok, "must be an integer >= 1")
REPLICATES = Param(int, 100, lambda r: r >= 2, "must be >= 2")


# --- free energy -----------------------------------------------------------

def fe_task(depth, beta, replicate, seed):
    s = derive_seed(seed, replicate)
    log_z = gibbs.log_partition_streaming(GibbsParams.of(depth, beta, s))
    return [{"N": depth, "beta": beta, "replicate": replicate, "seed": s, "log_z": log_z,
             "free_energy": log_z / depth}]


def fe_summary(p, rows):
    mean, se = _stats([r["free_energy"] for r in rows])
    return {"N": p["N"], "beta": p["beta"], "mean": mean, "stderr": se,
            "limit": gibbs.limit_free_energy(p["beta"])}


register(Experiment(
    "free-energy",
    {"N": DEPTH, "beta": BETA, "replicates": REPLICATES},
    ("N", "beta", "replicate", "seed", "log_z", "free_energy"),
    lambda p, seed: [(fe_task, p["N"], p["beta"], r, seed) for r in range(p["replicates"])],
    fe_summary,
))


# --- overlap law -----------------------------------------------------------

def overlap_task(depth, beta, replicate, seed):
    s = derive_seed(seed, replicate)
    law = replicas.overlap_law_exact(build_table(GibbsParams.of(depth, beta, s)))
    return [{"replicate": replicate, "seed": s, "d": d, "overlap": float(law.support[d]),
             "mass": float(law.masses[d])} for d in range(depth + 1)]


def overlap_summary(p, rows):
    n = p["N"]
    masses = np.array([r["mass"] for r in rows]).reshape(-1, n + 1)
    q = np.arange(n + 1) / n
    lo, hi = p["low"], p["high"]
    mid = masses[:, (q > lo) & (q < hi)].sum(axis=1)
    top = masses[:, q >= hi].sum(axis=1)
    mean_q = masses @ q
    return {
        "N": n, "beta": p["beta"], "replicates": int(masses.shape[0]),
        "masses": masses.mean(axis=0).tolist(),
        "mass_mid": _stats(mid)[0], "mass_mid_stderr": _stats(mid)[1],
        "mass_high": _stats(top)[0], "mass_high_stderr": _stats(top)[1],
        "mean_overlap": _stats(mean_q)[0], "mean_overlap_stderr": _stats(mean_q)[1],
        "predicted_mass_high": max(0.0, 1 - BETA_C / p["beta"]),
    }


register(Experiment(
    "overlap-law",
    {"N": DEPTH, "beta": BETA, "replicates": REPLICATES,
     "low": Param(float, 0.25, lambda x: 0 <= x <= 1), "high": Param(float, 0.75, lambda x: 0 <= x <= 1)},
    ("replicate", "seed", "d", "overlap", "mass"),
    lambda p, seed: [(overlap_task, p["N"], p["beta"], r, seed) for r in range(p["replicates"])],
    overlap_summary,
))


# --- integration by parts --------------------------------------------------

def ibp_task(depth, beta, replicate, seed):
    s = derive_seed(seed, replicate)
    lhs, rhs = replicas.ibp_terms(build_table(GibbsParams.of(depth, beta, s)))
    return [{"replicate": replicate, "seed": s, "lhs": lhs, "rhs": rhs}]


def ibp_summary(p, rows):
    lhs = np.array([r["lhs"] for r in rows])
    rhs = np.array([r["rhs"] for r in rows])
    _, se = _stats(lhs - rhs)
    return {"N": p["N"], "beta": p["beta"], "lhs": float(lhs.mean()), "rhs": float(rhs.mean()),
            "stderr": se, "z": float((lhs.mean() - rhs.mean()) / se) if se > 0 else float("nan")}


register(Experiment(
    "ibp",
    {"N": DEPTH, "beta": BETA, "replicates": REPLICATES},
    ("replicate", "seed", "lhs", "rhs"),
    lambda p, seed: [(ibp_task, p["N"], p["beta"], r, seed) for r in range(p["replicates"])],
    ibp_summary,
))


# --- finite-difference derivative ------------------------------------------

def fd_task(depth, betas, replicate, seed):
    s = derive_seed(seed, replicate)
    terms = replicas.replicate_fd_terms(depth, betas, s)
    return [{"replicate": replicate, "seed": s, "beta": float(b), "free_energy": float(t[0]),
             "derivative": float(t[1]), "identity": float(t[2])} for b, t in zip(betas, terms)]


def fd_summary(p, rows):
    k = len(p["betas"])
    terms = np.array([[r["free_energy"], r["derivative"], r["identity"]] for r in rows]).reshape(-1, k, 3)
    return {"N": p["N"], "rows": [vars(r) for r in replicas.fd_report(p["betas"], terms)]}


register(Experiment(
    "fd-derivative",
    {"N": DEPTH, "betas": Param(list, [0.4, 0.5, 0.6], lambda b: len(b) >= 3 and _pos_list(b)
                                and all(x < y for x, y in zip(b, b[1:])),
                                "needs >= 3 positive increasing values"),
     "replicates": REPLICATES},
    ("replicate", "seed", "beta", "free_energy", "derivative", "identity"),
    lambda p, seed: [(fd_task, p["N"], [float(b) for b in p["betas"]], r, seed) for r in range(p["replicates"])],
    fd_summary,
))


# --- Ghirlanda-Guerra residuals ---------------------------------------------

def _ggi_configs(p):
    return [(n, q, f) for n in p["n"] for q in p["p"] for f in p["f"]]


def ggi_task(depth, beta, configs, draws, replicate, seed):
    s = derive_seed(seed, replicate)
    terms = replicas.replicate_ggi_terms(depth, beta, configs, draws, s)
    return [{"replicate": replicate, "seed": s, "n": n, "p": q, "f": f, "t_lhs": float(t[0]),
             "t_f": float(t[1]), "t_rp": float(t[2]), "t_sum": float(t[3])}
            for (n, q, f), t in zip(configs, terms)]


def ggi_summary(p, rows):
    out = []
    configs = _ggi_configs(p)
    for i, (n, q, f) in enumerate(configs):
        t = np.array([[r["t_lhs"], r["t_f"], r["t_rp"], r["t_sum"]] for r in rows[i::len(configs)]])
        lhs, rhs, res, se = replicas.ggi_from_terms(t, n)
        out.append({"n": n, "p": q, "f": f, "lhs": lhs, "rhs": rhs, "residual": res, "stderr": se})
    return {"N": p["N"], "beta": p["beta"], "residuals": out}


def _catalog_ok(xs):
    try:
        for x in xs:
            replicas.parse_catalog(x)
    except Exception:
        return False
    return True


register(Experiment(
    "ggi",
    {"N": DEPTH, "beta": BETA, "replicates": REPLICATES,
     "n": Param(list, [2], lambda xs: all(isinstance(x, int) and x >= 2 for x in xs), "entries must be ints >= 2"),
     "p": Param(list, [1], lambda xs: all(isinstance(x, int) and x >= 1 for x in xs), "entries must be ints >= 1"),
     "f": Param(list, ["1"], _catalog_ok, "entries must be catalog ids"),
     "draws": Param(int, 200, lambda d: d >= 1)},
    ("replicate", "seed", "n", "p", "f", "t_lhs", "t_f", "t_rp", "t_sum"),
    lambda p, seed: [(ggi_task, p["N"], p["beta"], _ggi_configs(p), p["draws"], r, seed)
                     for r in range(p["replicates"])],
    ggi_summary,
))


# --- RPC pattern probabilities ----------------------------------------------

def rpc_task(theta, n_max, draws, seed):
    src = cascade.RpcSource(theta, seed)
    arrays, _ = src.arrays(n_max, draws)
    rows = []
    for n in range(2, n_max + 1):
        codes = cascade.pattern_code(arrays[:, :n, :n])
        for pat in cascade.all_patterns(n):
            est, se = cascade.frequency_estimate((codes == pat.code()).astype(float))
            rows.append({"n": n, "pattern": str(pat), "exact": cascade.pattern_prob(pat, 1 - theta),
                         "estimate": est, "stderr": se, "draws": draws})
    return rows


def rpc_summary(p, rows):
    z = [abs(r["estimate"] - r["exact"]) / r["stderr"] if r["stderr"] > 0 else
         (0.0 if r["estimate"] == r["exact"] else math.inf) for r in rows]
    return {"theta": p["theta"], "patterns": len(rows), "max_abs_z": float(max(z)),
            "all_within_3_stderr": bool(max(z) < 3)}


register(Experiment(
    "rpc-compare",
    {"theta": Param(float, 0.5, lambda t: 0 < t <= 1, "must lie in (0, 1]"),
     "n_max": Param(int, 4, lambda n: 2 <= n <= 6), "draws": Param(int, 100_000, lambda d: d >= 100)},
    ("n", "pattern", "exact", "estimate", "stderr", "draws"),
    lambda p, seed: [(rpc_task, p["theta"], p["n_max"], p["draws"], seed)],
    rpc_summary,
))


# --- cluster weights ---------------------------------------------------------

def cluster_task(depth, beta, epsilon, replicate, seed):
    s = derive_seed(seed, replicate)
    w = cascade.cluster_weights(build_table(GibbsParams.of(depth, beta, s)), epsilon)
    return [{"replicate": replicate, "seed": s, "clusters": int(w.weights.size),
             "top_weight": float(w.weights[0]), "sum_w2": w.power_sum(2), "sum_w3": w.power_sum(3)}]


def cluster_summary(p, rows):
    theta = min(1.0, BETA_C / p["beta"])
    m2, s2 = _stats([r["sum_w2"] for r in rows])
    m3, s3 = _stats([r["sum_w3"] for r in rows])
    return {"N": p["N"], "beta": p["beta"], "epsilon": p["epsilon"], "sum_w2": m2, "sum_w2_stderr": s2,
            "sum_w3": m3, "sum_w3_stderr": s3, "pd_theta": theta, "pd_sum_w2": 1 - theta,
            "pd_sum_w3": (1 - theta) * (2 - theta) / 2}


register(Experiment(
    "cluster-weights",
    {"N": DEPTH, "beta": BETA, "replicates": REPLICATES,
     "epsilon": Param(float, 0.25, lambda e: 0 < e < 1, "must lie in (0, 1)")},
    ("replicate", "seed", "clusters", "top_weight", "sum_w2", "sum_w3"),
    lambda p, seed: [(cluster_task, p["N"], p["beta"], p["epsilon"], r, seed) for r in range(p["replicates"])],
    cluster_summary,
))


# --- ballot --------------------------------------------------------------------

def ballot_task(n, z, a, b, samples, task, seed):
    est = barrier.ballot_estimate(n, z, a, b, samples, _rng(seed, task))
    return [{"n": n, "estimate": est.probability, "stderr": est.stderr, "samples": samples,
             "method": "direct"}]


def _fit(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = ys > 0
    if ok.sum() < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan")}
    return barrier.loglog_fit(xs[ok], ys[ok])


def ballot_summary(p, rows):
    fit = _fit([r["n"] for r in rows], [r["estimate"] for r in rows])
    return {"z": p["z"], "window": [p["A"], p["B"]], **fit}


register(Experiment(
    "ballot",
    {"ns": Param(list, [64, 128, 256, 512, 1024], lambda ns: all(isinstance(n, int) and n >= 1 for n in ns)),
     "z": Param(float, 1.0, lambda z: z >= 0), "A": Param(float, 0.0, lambda a: a >= 0),
     "B": Param(float, 1.0), "samples": Param(int, 400_000, lambda s: s >= 100, "must be >= 100")},
    ("n", "estimate", "stderr", "samples", "method"),
    lambda p, seed: [(ballot_task, n, p["z"], p["A"], p["B"], p["samples"], i, seed)
                     for i, n in enumerate(p["ns"])],
    ballot_summary,
))


# --- tilted barrier ---------------------------------------------------------

def tilted_task(t, z, lam, k, a, b, samples, method, task, seed):
    est = barrier.tilted_barrier_estimate(barrier.WalkParams(t, z, lam, k, (a, b)), samples, method,
                                          _rng(seed, task))
    # estimate * exp(T lam^2 / 2 + lam a), formed in log space so large T does not underflow
    norm = math.exp(est.log_scale + t * lam * lam / 2 + lam * a)
    return [{"T": t, "method": method, "estimate": est.probability, "stderr": est.stderr,
             "samples": samples, "normalized": est.scaled * norm}]


def tilted_summary(p, rows):
    out = {"drift": p["drift"], "K": p["K"], "window": [p["a"], p["b"]]}
    for m in sorted({r["method"] for r in rows}):
        sel = [r for r in rows if r["method"] == m]
        out[m] = _fit([r["T"] for r in sel], [r["normalized"] for r in sel])
    return out


def _tilted_tasks(p, seed):
    methods = ["direct", "tilted"] if p["method"] == "both" else [p["method"]]
    out, i = [], 0
    for t in p["Ts"]:
        for m in methods:
            out.append((tilted_task, t, p["z"], p["drift"], p["K"], p["a"], p["b"], p["samples"], m, i, seed))
            i += 1
    return out


register(Experiment(
    "tilted-barrier",
    {"Ts": Param(list, [64, 128, 256, 512], lambda ts: all(isinstance(t, int) and t >= 1 for t in ts)),
     "z": Param(float, 0.0), "drift": Param(float, BETA_C), "K": Param(float, 5.0, lambda k: k >= 0),
     "a": Param(float, 0.0), "b": Param(float, 1.0), "samples": Param(int, 100_000, lambda s: s >= 2),
     "method": Param(str, "tilted", lambda m: m in ("direct", "tilted", "both"),
                     "must be direct, tilted or both")},
    ("T", "method", "estimate", "stderr", "samples", "normalized"),
    _tilted_tasks,
    tilted_summary,
))


# --- barrier event over the tree --------------------------------------------

def gamma_task(depth, kappa, replicate, seed):
    s = derive_seed(seed, replicate)
    lam = gibbs.leader_centering(depth) / depth
    hit = barrier.crosses_barrier(IncrementOracle(FieldParams(depth, s)), lam, kappa * math.log(depth))
    return [{"N": depth, "replicate": replicate, "seed": s, "crossed": int(hit)}]


def _per_depth(rows, key):
    by: dict[int, list] = {}
    for r in rows:
        by.setdefault(r["N"], []).append(r[key])
    return dict(sorted(by.items()))


def gamma_summary(p, rows):
    table = []
    for n, xs in _per_depth(rows, "crossed").items():
        est = sum(xs) / len(xs)
        table.append({"N": n, "estimate": est, "stderr": math.sqrt(est * (1 - est) / len(xs)),
                      "replicates": len(xs),
                      "upper": barrier.clopper_pearson_upper(sum(xs), len(xs)) if sum(xs) == 0 else None})
    return {"kappa": p["kappa"], "by_depth": table, "non_increasing": non_increasing(table, 2.0)}


def non_increasing(table, k_se: float) -> bool:
    """Each estimate exceeds its predecessor by less than ``k_se`` combined standard errors."""
    return all(b["estimate"] - a["estimate"] <= k_se * math.hypot(a["stderr"], b["stderr"])
               for a, b in zip(table, table[1:]))


register(Experiment(
    "gamma-event",
    {"Ns": Param(list, [12, 16, 20], lambda ns: all(isinstance(n, int) and _depth_ok(n) for n in ns)),
     "kappa": Param(float, 4.5, lambda k: k >= 0, "must be >= 0"), "replicates": Param(int, 400, lambda r: r >= 1)},
    ("N", "replicate", "seed", "crossed"),
    lambda p, seed: [(gamma_task, n, p["kappa"], r, derive_seed(seed, n))
                     for n in p["Ns"] for r in range(p["replicates"])],
    gamma_summary,
))


# --- leader ------------------------------------------------------------------

def leader_task(depth, replicate, seed):
    s = derive_seed(seed, replicate)
    m = gibbs.leader(FieldParams(depth, s))
    return [{"N": depth, "replicate": replicate, "seed": s, "leader": m,
             "centered": m - gibbs.leader_centering(depth)}]


def leader_summary(p, rows):
    table = []
    for n, xs in _per_depth(rows, "centered").items():
        xs = np.array(xs)
        table.append({"N": n, "m_N": gibbs.leader_centering(n), "median": float(np.median(xs)),
                      "std": float(xs.std(ddof=1)) if xs.size > 1 else float("nan"), "replicates": int(xs.size)})
    meds = [t["median"] for t in table]
    out = {"by_depth": table, "median_span": float(max(meds) - min(meds))}
    if len(table) >= 2:
        out["std_slope"] = float(np.polyfit([t["N"] for t in table], [t["std"] for t in table], 1)[0])
    return out


register(Experiment(
    "leader",
    {"Ns": Param(list, [10, 14, 18, 22], lambda ns: all(isinstance(n, int) and _depth_ok(n) for n in ns)),
     "replicates": Param(int, 200, lambda r: r >= 2)},
    ("N", "replicate", "seed", "leader", "centered"),
    lambda p, seed: [(leader_task, n, r, derive_seed(seed, n)) for n in p["Ns"] for r in range(p["replicates"])],
    leader_summary,
))
