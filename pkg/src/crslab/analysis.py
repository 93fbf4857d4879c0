"""Estimation, exact enumeration, and the hardness-construction diagnostics.

Estimation engines
------------------
Four distributionally identical paths produce selection counts:

* dense: fixed arrival order, small edge count; whole state/coin matrices
  per trial chunk, arrival steps vectorized across trials.
* sparse: samples only the active edges per trial (binomial count per
  distinct x value + uniform distinct choice).  Valid because greedy never
  reads inactive edges and, under a deterministic order, the Tree-OCRS
  acceptance probabilities depend only on arrival prefixes, so they are
  per-edge constants computable up front.
* vanishing: the two-round reduction, vectorized across a trial chunk with
  integer z'-degree counters (the guard becomes an exact integer compare).
* reference: one `schemes.run_scheme` call per trial; covers every
  scheme/order combination and anchors the faster paths in tests.

All engines draw from counter-based streams keyed by (seed, chunk), so a
given configuration is reproducible bit for bit regardless of worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from mpmath import mp, mpf

from . import rng as _rng
from .constants import ALPHA, beta, gamma
from .instances import Instance, draw_realization, _fmt_float
from .orders import ArrivalModel, draw_order
from .schemes import SchemeSpec, run_scheme, tree_ocrs_acceptance, reduction_parameters
from .stats import wilson_interval

CHUNK = _rng.CHUNK
DENSE_EDGE_LIMIT = 64

#: full-enumeration size limits (edges); beyond these the oracle refuses
ORACLE_EDGE_LIMITS = {"greedy": 14, "tree_ocrs": 10}
ORACLE_UNIFORM_LIMIT = 7


class LimitExceeded(ValueError):
    """An exact or numeric path was asked to exceed its enumeration limit."""


@dataclass
class SelectionReport:
    scheme: str
    order: str
    instance: str
    mode: str
    seed: int
    trials: int
    per_edge: dict[int, dict] = field(default_factory=dict)

    @property
    def min_estimate(self) -> float:
        return min(rec["estimate"] for rec in self.per_edge.values())

    def to_obj(self) -> dict:
        return {
            "scheme": self.scheme, "order": self.order, "instance": self.instance,
            "mode": self.mode, "seed": self.seed, "trials": self.trials,
            "min_estimate": self.min_estimate,
            "per_edge": {str(e): rec for e, rec in sorted(self.per_edge.items())},
        }


def report_to_csv(report: SelectionReport, instance: Instance) -> str:
    lines = ["edge_id,u,v,x,mode,trials,estimate,ci_low,ci_high"]
    for e in sorted(report.per_edge):
        rec = report.per_edge[e]
        lines.append(",".join([
            str(e), str(int(instance.us[e])), str(int(instance.vs[e])),
            _fmt_float(float(instance.xs[e])), rec["mode"], str(rec["trials"]),
            _fmt_float(rec["estimate"]), _fmt_float(rec["ci_low"]),
            _fmt_float(rec["ci_high"]),
        ]))
    return "\n".join(lines) + "\n"


# --- engine helpers ----------------------------------------------------------

def _base_scheme(scheme: SchemeSpec) -> tuple[SchemeSpec, np.ndarray | None]:
    """Unwrap exactly_c into (inner scheme, drop-probability array)."""
    if scheme.kind != "exactly_c":
        return scheme, None
    inner, inner_drops = _base_scheme(scheme.inner)
    if inner_drops is not None:
        raise ValueError("nested exactly_c schemes are not supported")
    return inner, scheme.drops


def _drops_array(drops: dict | None, m: int) -> np.ndarray | None:
    if drops is None:
        return None
    arr = np.zeros(m)
    for e, p in drops.items():
        arr[int(e)] = float(p)
    return arr


def precompute_acceptance(instance: Instance, permutation: np.ndarray,
                          c: float) -> np.ndarray:
    """Tree-OCRS acceptance probability per edge for one fixed order.

    Prefix fractional degrees count every earlier arrival, active or not,
    so for a deterministic order the acceptance coins have constant biases.
    """
    deg = np.zeros(instance.vertex_count)
    a = np.empty(instance.edge_count)
    for e in permutation:
        e = int(e)
        u, v, x = int(instance.us[e]), int(instance.vs[e]), float(instance.xs[e])
        a[e] = tree_ocrs_acceptance(c, deg[u], deg[v])
        if a[e] > 1.0 + 1e-12:
            raise ValueError(f"edge {e}: acceptance probability {a[e]} > 1")
        deg[u] += x
        deg[v] += x
    return a


def _x_groups(instance: Instance, exclude: int | None = None):
    """Edges grouped by x value, optionally with one edge removed."""
    xs = instance.xs
    groups = []
    for x in np.unique(xs):
        ids = np.flatnonzero(xs == x)
        if exclude is not None:
            ids = ids[ids != exclude]
        if ids.size:
            groups.append((float(x), ids))
    return groups


def _draw_distinct(gen: np.random.Generator, n: int, k: int) -> np.ndarray:
    """k distinct uniform indices from range(n); order irrelevant."""
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k * 2 >= n:
        return gen.permutation(n)[:k]
    picked = np.unique((gen.random(k) * n).astype(np.int64))
    while picked.size < k:
        extra = (gen.random(2 * (k - picked.size)) * n).astype(np.int64)
        picked = np.unique(np.concatenate([picked, extra]))
    return picked[:k] if picked.size == k else gen.permutation(picked)[:k]


def _run_chunks(worker, n_trials: int, workers: int) -> list:
    """Evaluate worker(chunk_idx, chunk_trials) over fixed-size chunks.

    Chunk boundaries and the merge order are functions of n_trials alone,
    so results are identical for any worker count.
    """
    spans = []
    done = 0
    idx = 0
    while done < n_trials:
        k = min(CHUNK, n_trials - done)
        spans.append((idx, k))
        done += k
        idx += 1
    if workers <= 1 or len(spans) <= 1:
        return [worker(i, k) for i, k in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(worker, i, k) for i, k in spans]
        return [f.result() for f in futs]


# --- dense engine: deterministic order, small m -------------------------------

def _dense_counts(instance: Instance, base: SchemeSpec, drops: np.ndarray | None,
                  permutation: np.ndarray, trials: int, seed: int,
                  target: int | None, workers: int):
    m = instance.edge_count
    us, vs, xs = instance.us, instance.vs, instance.xs
    nv = instance.vertex_count
    a_pre = None
    if base.kind == "tree_ocrs":
        a_pre = precompute_acceptance(instance, permutation,
                                      ALPHA if base.c is None else base.c)
    perm = [int(e) for e in permutation]

    def worker(chunk_idx: int, k: int):
        gen = _rng.stream(seed, "states", chunk_idx)
        states = gen.random((k, m)) < xs
        if a_pre is not None:
            act = states & (gen.random((k, m)) < a_pre)
        else:
            act = states
        if target is not None:
            if a_pre is not None:
                # state forced to 1; only the acceptance coin remains
                act[:, target] = gen.random(k) < a_pre[target]
            else:
                act[:, target] = True
        matched = np.zeros((k, nv), dtype=bool)
        counts = np.zeros(m, dtype=np.int64)
        hits = 0
        for e in perm:
            u, v = int(us[e]), int(vs[e])
            col = act[:, e] & ~matched[:, u] & ~matched[:, v]
            matched[:, u] |= col
            matched[:, v] |= col
            if drops is not None and drops[e] > 0.0:
                col_counted = col & (gen.random(k) >= drops[e])
            else:
                col_counted = col
            if target is None:
                counts[e] += int(col_counted.sum())
            elif e == target:
                hits = int(col_counted.sum())
                break
        return hits if target is not None else counts

    parts = _run_chunks(worker, trials, workers)
    return sum(parts) if target is not None else np.sum(parts, axis=0)


# --- sparse engine: active edges only -----------------------------------------

def _sparse_counts(instance: Instance, base: SchemeSpec, drops: np.ndarray | None,
                   model: ArrivalModel, trials: int, seed: int,
                   target: int | None, workers: int):
    """Greedy under any supported order, or Tree-OCRS under a deterministic one."""
    m = instance.edge_count
    us, vs = instance.us, instance.vs
    nv = instance.vertex_count
    deterministic = model.is_deterministic
    ranks = None
    if deterministic:
        order_seq = np.asarray(model.sequence(), dtype=np.int64)
        ranks = np.full(m, m, dtype=np.int64)
        ranks[order_seq] = np.arange(order_seq.size)
    a_pre = None
    if base.kind == "tree_ocrs":
        if not deterministic:
            raise ValueError("sparse engine: Tree-OCRS needs a deterministic order")
        a_pre = precompute_acceptance(instance, order_seq,
                                      ALPHA if base.c is None else base.c)
    groups = _x_groups(instance, exclude=target)
    us_l, vs_l = us.tolist(), vs.tolist()
    lex = model.kind == "lex_seeds"
    uniform = model.kind == "uniform_times"

    def worker(chunk_idx: int, k: int):
        gen = _rng.stream(seed, "states", chunk_idx)
        group_counts = [gen.binomial(ids.size, x, size=k) for x, ids in groups]
        matched_stamp = np.full(nv, -1, dtype=np.int64)
        seed_stamp = np.full(nv, -1, dtype=np.int64) if lex else None
        vseed = np.empty(nv) if lex else None
        counts = np.zeros(m, dtype=np.int64)
        hits = 0
        for t in range(k):
            parts = [ids[_draw_distinct(gen, ids.size, int(cnt[t]))]
                     for (x, ids), cnt in zip(groups, group_counts)]
            if target is not None:
                parts.append(np.array([target], dtype=np.int64))
            active = np.concatenate(parts) if parts else np.empty(0, np.int64)
            n_act = active.size
            if n_act == 0:
                continue
            if deterministic:
                order = np.argsort(ranks[active], kind="stable")
            elif uniform:
                order = np.argsort(gen.random(n_act), kind="stable")
            else:  # lex seeds, drawn lazily for touched vertices only
                au = us[active]
                av = vs[active]
                verts = np.unique(np.concatenate([au, av]))
                fresh = seed_stamp[verts] != t + chunk_idx * CHUNK
                nf = int(fresh.sum())
                if nf:
                    vseed[verts[fresh]] = gen.random(nf)
                    seed_stamp[verts[fresh]] = t + chunk_idx * CHUNK
                su, sv = vseed[au], vseed[av]
                lo = np.minimum(su, sv)
                hi = np.maximum(su, sv)
                order = np.lexsort((active, hi, lo))
            arr = active[order]
            if a_pre is not None:
                acc = (gen.random(n_act) < a_pre[active])[order].tolist()
            else:
                acc = None
            token = t + chunk_idx * CHUNK
            arr_l = arr.tolist()
            for j, e in enumerate(arr_l):
                if acc is not None and not acc[j]:
                    continue
                u, v = us_l[e], vs_l[e]
                if matched_stamp[u] == token or matched_stamp[v] == token:
                    if target is not None and e == target:
                        break
                    continue
                matched_stamp[u] = token
                matched_stamp[v] = token
                counted = True
                if drops is not None and drops[e] > 0.0:
                    counted = gen.random() >= drops[e]
                if target is not None:
                    if e == target:
                        hits += counted
                        break
                elif counted:
                    counts[e] += 1
        return hits if target is not None else counts

    parts = _run_chunks(worker, trials, workers)
    return sum(parts) if target is not None else np.sum(parts, axis=0)


# --- vanishing-reduction engine ------------------------------------------------

def _vanishing_counts(instance: Instance, base: SchemeSpec,
                      drops: np.ndarray | None, model: ArrivalModel,
                      trials: int, seed: int, target: int | None, workers: int):
    """Vectorized two-round reduction; trials advance in lockstep per chunk.

    z'-degrees are multiples of z, so the admission guard is the integer
    comparison count <= floor((1-z)/z + tol/z), bit-identical to the
    reference runner's float guard.
    """
    params = reduction_parameters(instance, base.epsilon, base.log_inv_epsilon)
    L, z, y_scale = params["L"], params["z"], params["y_scale"]
    c = ALPHA
    cap_cnt = int(math.floor((1.0 - z) / z + 1e-12 / z))
    m = instance.edge_count
    nv = instance.vertex_count
    us, vs, xs = instance.us, instance.vs, instance.xs
    deterministic = model.is_deterministic
    if model.kind == "lex_seeds":
        raise ValueError("vanishing engine: lex order not supported; use reference")
    fixed_perm = np.asarray(model.sequence(), dtype=np.int64) if deterministic else None
    chunk_cap = 1024

    def worker(chunk_idx: int, k: int):
        gen = _rng.stream(seed, "states", chunk_idx)
        counts = np.zeros(m, dtype=np.int64)
        hits = 0
        done = 0
        while done < k:
            kk = min(chunk_cap, k - done)
            if deterministic:
                orders = None
            else:
                orders = np.argsort(gen.random((kk, m)), axis=1, kind="stable")
            zcnt = np.zeros((kk, nv), dtype=np.int16)
            matched = np.zeros((kk, nv), dtype=bool)
            rows = np.arange(kk)
            for step in range(m):
                if deterministic:
                    e = int(fixed_perm[step])
                    eu = np.full(kk, int(us[e]))
                    ev = np.full(kk, int(vs[e]))
                    ex = float(xs[e])
                    is_target = np.full(kk, e == target) if target is not None else None
                    eid = None
                else:
                    eid = orders[:, step]
                    eu = us[eid]
                    ev = vs[eid]
                    ex = xs[eid]
                    is_target = (eid == target) if target is not None else None
                ey = y_scale * ex
                yz = ey * z
                X = gen.random(kk) < ex
                if is_target is not None:
                    X = X | is_target
                keep = X & (gen.random(kk) < yz / ex)
                split = gen.random(kk)
                a10 = (ey - yz) / (1.0 - yz)
                a01 = z * (1.0 - ey) / (1.0 - yz)
                Y = keep | (~keep & (split < a10))
                Z = keep | (~keep & (split >= a10) & (split < a10 + a01))
                cu = zcnt[rows, eu]
                cv = zcnt[rows, ev]
                admit = Y & (cu <= cap_cnt) & (cv <= cap_cnt)
                acc_p = c / ((1.0 - c * cu * z) * (1.0 - c * cv * z))
                sel = (admit & Z & (gen.random(kk) < acc_p)
                       & ~matched[rows, eu] & ~matched[rows, ev])
                zcnt[rows, eu] += admit
                zcnt[rows, ev] += admit
                matched[rows, eu] |= sel
                matched[rows, ev] |= sel
                if drops is not None:
                    de = drops[e] if deterministic else drops[eid]
                    keep_sel = sel & (gen.random(kk) >= de)
                else:
                    keep_sel = sel
                if target is None:
                    if deterministic:
                        counts[e] += int(keep_sel.sum())
                    else:
                        np.add.at(counts, eid[keep_sel], 1)
                else:
                    hits += int((keep_sel & is_target).sum())
            done += kk
        return hits if target is not None else counts

    parts = _run_chunks(worker, trials, workers)
    return sum(parts) if target is not None else np.sum(parts, axis=0)


# --- reference engine ----------------------------------------------------------

def _reference_counts(instance: Instance, scheme: SchemeSpec, model: ArrivalModel,
                      trials: int, seed: int, target: int | None, workers: int):
    m = instance.edge_count

    def worker(chunk_idx: int, k: int):
        counts = np.zeros(m, dtype=np.int64)
        hits = 0
        for t in range(k):
            trial = chunk_idx * CHUNK + t
            order = draw_order(model, instance, _rng.stream(seed, "order", trial))
            real = draw_realization(instance, seed, trial, forced_edge=target)
            res = run_scheme(scheme, instance, order, real)
            if target is not None:
                hits += int(target in res.selected)
            else:
                for e in res.selected:
                    counts[e] += 1
        return hits if target is not None else counts

    parts = _run_chunks(worker, trials, workers)
    return sum(parts) if target is not None else np.sum(parts, axis=0)


# --- top-level estimation -------------------------------------------------------

def _pick_engine(base: SchemeSpec, model: ArrivalModel, m: int) -> str:
    if base.kind in ("greedy", "tree_ocrs"):
        if model.is_deterministic:
            return "dense" if m <= DENSE_EDGE_LIMIT else "sparse"
        if base.kind == "greedy" and model.kind in ("uniform_times", "lex_seeds"):
            return "sparse"
        return "reference"
    if base.kind == "vanishing_reduction":
        if model.kind in ("uniform_times",) or model.is_deterministic:
            return "vanishing"
        return "reference"
    raise ValueError(f"no engine for scheme kind {base.kind!r}")


def _forced_counts(scheme: SchemeSpec, instance: Instance, model: ArrivalModel,
                   trials: int, seed: int, target: int, workers: int) -> int:
    base, drops = _base_scheme(scheme)
    drops_arr = _drops_array(drops, instance.edge_count)
    engine = _pick_engine(base, model, instance.edge_count)
    if engine == "dense":
        return int(_dense_counts(instance, base, drops_arr,
                                 np.asarray(model.sequence()), trials, seed,
                                 target, workers))
    if engine == "sparse":
        return int(_sparse_counts(instance, base, drops_arr, model, trials,
                                  seed, target, workers))
    if engine == "vanishing":
        return int(_vanishing_counts(instance, base, drops_arr, model, trials,
                                     seed, target, workers))
    return int(_reference_counts(instance, scheme, model, trials, seed,
                                 target, workers))


def _aggregate_counts(scheme: SchemeSpec, instance: Instance, model: ArrivalModel,
                      trials: int, seed: int, workers: int) -> np.ndarray:
    base, drops = _base_scheme(scheme)
    drops_arr = _drops_array(drops, instance.edge_count)
    engine = _pick_engine(base, model, instance.edge_count)
    if engine == "dense":
        return _dense_counts(instance, base, drops_arr,
                             np.asarray(model.sequence()), trials, seed,
                             None, workers)
    if engine == "sparse":
        return _sparse_counts(instance, base, drops_arr, model, trials, seed,
                              None, workers)
    if engine == "vanishing":
        return _vanishing_counts(instance, base, drops_arr, model, trials, seed,
                                 None, workers)
    return _reference_counts(instance, scheme, model, trials, seed, None, workers)


def estimate_selection(scheme: SchemeSpec, instance: Instance,
                       order_model: ArrivalModel, trials: int,
                       mode: str = "forced", seed: int = 0,
                       edges: list[int] | None = None,
                       workers: int = 1) -> SelectionReport:
    """Monte Carlo per-edge conditional selection probabilities.

    forced: per target edge, X_target is pinned to 1 (states are independent,
    so this samples the conditional law directly); the count of selections is
    binomial and gets a Wilson interval.
    aggregate: unconditioned runs shared by all edges; the conditional
    estimate is Pr-hat[e in M]/x_e.  Intervals are Wilson on the selection
    frequency, scaled by 1/x_e and clipped to [0,1].
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in ("forced", "aggregate"):
        raise ValueError(f"unknown mode {mode!r}")
    if edges is None:
        edges = list(range(instance.edge_count))
    report = SelectionReport(scheme.kind, order_model.kind, instance.name,
                             mode, seed, trials)
    if mode == "forced":
        for target in edges:
            hits = _forced_counts(scheme, instance, order_model, trials, seed,
                                  int(target), workers)
            lo, hi = wilson_interval(hits, trials)
            report.per_edge[int(target)] = {
                "estimate": hits / trials, "trials": trials,
                "ci_low": lo, "ci_high": hi, "mode": "forced",
            }
        return report
    counts = _aggregate_counts(scheme, instance, order_model, trials, seed, workers)
    for e in edges:
        e = int(e)
        x = float(instance.xs[e])
        lo, hi = wilson_interval(int(counts[e]), trials)
        report.per_edge[e] = {
            "estimate": min(1.0, counts[e] / trials / x), "trials": trials,
            "ci_low": min(1.0, lo / x), "ci_high": min(1.0, hi / x),
            "mode": "aggregate",
        }
    return report


# --- exact enumeration oracle ---------------------------------------------------

def exact_oracle(scheme: SchemeSpec, instance: Instance,
                 order_model: ArrivalModel, target_edge: int) -> float:
    """Exact Pr[target in M | X_target = 1] by dynamic programming.

    State: the set of matched vertices with its exact probability, advanced
    edge by edge in arrival order.  Given the matched set, each edge's
    selection is an independent Bernoulli with probability x_e (greedy) or
    x_e * a_e (Tree-OCRS; a_e is a constant of the arrival prefix), which is
    why the matched-set marginal is a sufficient statistic.  UniformTimes
    averages the fixed-order value over all m! permutations.  Probabilities
    accumulate in extended precision.
    """
    base, drops = _base_scheme(scheme)
    if base.kind not in ORACLE_EDGE_LIMITS:
        raise ValueError(f"oracle supports greedy/tree_ocrs, not {base.kind!r}")
    m = instance.edge_count
    limit = ORACLE_EDGE_LIMITS[base.kind]
    if m > limit:
        raise LimitExceeded(f"oracle limit for {base.kind} is {limit} edges, got {m}")
    if order_model.kind in ("fixed", "phase_based"):
        perms = [list(order_model.sequence())]
    elif order_model.kind == "uniform_times":
        if m > ORACLE_UNIFORM_LIMIT:
            raise LimitExceeded(
                f"oracle limit under uniform_times is {ORACLE_UNIFORM_LIMIT} "
                f"edges, got {m}")
        import itertools
        perms = [list(p) for p in itertools.permutations(range(m))]
    else:
        raise ValueError(f"oracle does not support order kind {order_model.kind!r}")
    c = ALPHA if base.c is None else base.c
    target_edge = int(target_edge)
    with mp.workdps(40):
        total = mpf(0)
        for perm in perms:
            total += _oracle_fixed(instance, base.kind, c, perm, target_edge)
        value = total / len(perms)
        if drops is not None:
            value *= 1 - mpf(drops.get(target_edge, 0.0))
        return float(value)


def _oracle_fixed(instance: Instance, kind: str, c: float, perm: list[int],
                  target: int) -> mpf:
    us, vs, xs = instance.us, instance.vs, instance.xs
    deg = {}
    states: dict[frozenset, mpf] = {frozenset(): mpf(1)}
    for e in perm:
        u, v, x = int(us[e]), int(vs[e]), float(xs[e])
        if kind == "tree_ocrs":
            a = tree_ocrs_acceptance(c, deg.get(u, 0.0), deg.get(v, 0.0))
            deg[u] = deg.get(u, 0.0) + x
            deg[v] = deg.get(v, 0.0) + x
            p_sel, p_cond = mpf(x) * mpf(a), mpf(a)
        else:
            p_sel, p_cond = mpf(x), mpf(1)
        if e == target:
            return sum(p for s, p in states.items()
                       if u not in s and v not in s) * p_cond
        nxt: dict[frozenset, mpf] = {}
        for s, p in states.items():
            if u in s or v in s:
                nxt[s] = nxt.get(s, mpf(0)) + p
            else:
                s2 = s | {u, v}
                nxt[s2] = nxt.get(s2, mpf(0)) + p * p_sel
                nxt[s] = nxt.get(s, mpf(0)) + p * (1 - p_sel)
        states = nxt
    raise ValueError(f"target edge {target} not in the arrival order")


# --- covariance diagnostics -----------------------------------------------------

@dataclass
class CovarianceReport:
    spokes: list[int]
    avail_mean: np.ndarray
    cov: np.ndarray
    theta_min: float
    var_sum: float
    phase1_rate: float
    predicted_avail: np.ndarray
    trials: int
    seed: int
    samples: np.ndarray | None = None

    def to_obj(self, full_cov: bool = False) -> dict:
        obj = {
            "spokes": [int(s) for s in self.spokes],
            "avail_mean": [float(v) for v in self.avail_mean],
            "theta_min": self.theta_min,
            "var_sum": self.var_sum,
            "phase1_rate": self.phase1_rate,
            "predicted_avail": [float(v) for v in self.predicted_avail],
            "trials": self.trials,
            "seed": self.seed,
        }
        if full_cov:
            obj["cov"] = [[float(v) for v in row] for row in self.cov]
        return obj


def covariance_diagnostics(scheme: SchemeSpec, instance: Instance,
                           order_model: ArrivalModel, trials: int,
                           seed: int = 0, keep_samples: bool = True) -> CovarianceReport:
    """Phase-1 availability indicators of the hub spokes and their covariances.

    Runs only the first arrival phase, records A_i = [spoke i unmatched] per
    trial, and reports means, the covariance matrix, theta (the minimum
    off-diagonal covariance), and Var of the availability sum.  Also
    cross-checks E[A_i] against 1 - rate * deg_i with the measured phase-1
    per-edge selection rate.
    """
    fam = instance.metadata.get("family")
    if fam not in ("general_hard", "tree_hard"):
        raise ValueError("instance must carry hub-spoke role tags "
                         "(general_hard or tree_hard)")
    if order_model.kind != "phase_based":
        raise ValueError("covariance diagnostics need a phase_based order")
    n = int(instance.metadata["n"])
    spokes = list(range(1, n + 1))
    phase1 = np.asarray(order_model.phases[0], dtype=np.int64)
    base, drops = _base_scheme(scheme)
    drops_map = drops or {}
    a_pre = None
    if base.kind == "tree_ocrs":
        a_pre = precompute_acceptance(instance, phase1,
                                      ALPHA if base.c is None else base.c)
    elif base.kind != "greedy":
        raise ValueError("covariance diagnostics support greedy/tree_ocrs")
    groups = _x_groups(instance)
    allowed = np.zeros(instance.edge_count, dtype=bool)
    allowed[phase1] = True
    groups = [(x, ids[allowed[ids]]) for x, ids in groups]
    groups = [(x, ids) for x, ids in groups if ids.size]
    ranks = np.full(instance.edge_count, instance.edge_count, dtype=np.int64)
    ranks[phase1] = np.arange(phase1.size)
    us_l = instance.us.tolist()
    vs_l = instance.vs.tolist()
    nv = instance.vertex_count
    samples = np.ones((trials, n), dtype=np.uint8)
    sel_counts = np.zeros(instance.edge_count, dtype=np.int64)
    matched_stamp = np.full(nv, -1, dtype=np.int64)
    done = 0
    chunk_idx = 0
    while done < trials:
        k = min(CHUNK, trials - done)
        gen = _rng.stream(seed, "states", chunk_idx)
        group_counts = [gen.binomial(ids.size, x, size=k) for x, ids in groups]
        for t in range(k):
            token = done + t
            parts = [ids[_draw_distinct(gen, ids.size, int(cnt[t]))]
                     for (x, ids), cnt in zip(groups, group_counts)]
            active = np.concatenate(parts) if parts else np.empty(0, np.int64)
            if active.size:
                order = np.argsort(ranks[active], kind="stable")
                arr = active[order]
                if a_pre is not None:
                    acc = (gen.random(active.size) < a_pre[active])[order].tolist()
                else:
                    acc = None
                for j, e in enumerate(arr.tolist()):
                    if acc is not None and not acc[j]:
                        continue
                    u, v = us_l[e], vs_l[e]
                    if matched_stamp[u] == token or matched_stamp[v] == token:
                        continue
                    matched_stamp[u] = token
                    matched_stamp[v] = token
                    dropped = (e in drops_map and drops_map[e] > 0.0
                               and gen.random() < drops_map[e])
                    if dropped:
                        continue
                    sel_counts[e] += 1
                    if 1 <= u <= n:
                        samples[token, u - 1] = 0
                    if 1 <= v <= n:
                        samples[token, v - 1] = 0
        done += k
        chunk_idx += 1
    avail_mean = samples.mean(axis=0)
    cov = np.cov(samples.T.astype(np.float64), ddof=1)
    off = cov[~np.eye(n, dtype=bool)]
    rate_terms = [sel_counts[e] / trials / float(instance.xs[e]) for e in phase1]
    phase1_rate = float(np.mean(rate_terms))
    deg1 = np.zeros(n)
    for e in phase1:
        for w in (int(instance.us[e]), int(instance.vs[e])):
            if 1 <= w <= n:
                deg1[w - 1] += float(instance.xs[e])
    predicted = 1.0 - phase1_rate * deg1
    return CovarianceReport(
        spokes=spokes, avail_mean=avail_mean, cov=cov,
        theta_min=float(off.min()), var_sum=float(cov.sum()),
        phase1_rate=phase1_rate, predicted_avail=predicted,
        trials=trials, seed=seed,
        samples=samples if keep_samples else None)


def find_low_variance_subset(samples: np.ndarray, m: int,
                             candidate_count: int = 10000,
                             rng: np.random.Generator | None = None) -> dict:
    """Random search for a size-m spoke subset with small availability variance.

    Evaluates candidate_count uniformly random subsets against the sample
    covariance matrix and reports the best, together with the averaging
    bound 3 * (Var(sum A)/n^2) * m^2.
    """
    trials, n = samples.shape
    if m > n:
        raise ValueError(f"subset size {m} exceeds {n} spokes")
    if candidate_count < 1:
        raise ValueError("candidate_count must be >= 1")
    if rng is None:
        rng = _rng.stream(0, "subset", 0)
    sigma = np.cov(samples.T.astype(np.float64), ddof=1)
    var_sum = float(sigma.sum())
    theta_n = var_sum / (n * n)
    keys = rng.random((candidate_count, n))
    idx = np.argpartition(keys, m - 1, axis=1)[:, :m]
    C = np.zeros((candidate_count, n))
    np.put_along_axis(C, idx, 1.0, axis=1)
    variances = ((C @ sigma) * C).sum(axis=1)
    best = int(np.argmin(variances))
    bound = 3.0 * theta_n * m * m
    return {
        "subset": sorted(int(i) for i in idx[best]),
        "variance": float(variances[best]),
        "bound": bound,
        "theta_n": theta_n,
        "var_sum": var_sum,
        "ok": bool(variances[best] <= bound),
    }


# --- hardness harness -----------------------------------------------------------

HARDNESS_SLACK = 0.02


def hardness_bound_check(normalized: SchemeSpec, instance: Instance,
                         order_model: ArrivalModel, trials: int,
                         seed: int = 0, workers: int = 1,
                         diag: CovarianceReport | None = None) -> dict:
    """Evaluate the upper-bound story on a hard construction.

    Checks (with measured c-hat and theta-hat): c-hat at most the family
    bound (beta for general_hard, gamma for tree_hard) plus slack; the
    covariance lower bound theta >= c - (1-c)^2 - slack; and the feasibility
    inequality 2c + c*exp(c + theta/c - 1) <= 1 + slack.  Forced re-runs on
    one representative edge per structural class confirm the pilot minimum.
    """
    if normalized.kind != "exactly_c":
        raise ValueError("hardness check expects a make_exactly_c scheme")
    fam = instance.metadata.get("family")
    if fam == "general_hard":
        bound = beta().value
    elif fam == "tree_hard":
        bound = gamma().value
    else:
        raise ValueError("hardness check supports general_hard/tree_hard")
    c_hat = float(normalized.c)
    if diag is None:
        diag = covariance_diagnostics(normalized, instance, order_model,
                                      trials, seed=seed, keep_samples=False)
    theta = diag.theta_min
    reps = []
    for phase in order_model.phases:
        reps.extend([int(phase[0]), int(phase[-1])])
    reps = sorted(set(reps))
    forced = estimate_selection(normalized, instance, order_model,
                                trials, mode="forced", seed=seed + 1,
                                edges=reps, workers=workers)
    forced_min = forced.min_estimate
    feas_lhs = 2.0 * c_hat + c_hat * math.exp(c_hat + theta / c_hat - 1.0)
    cov_rhs = c_hat - (1.0 - c_hat) ** 2
    return {
        "family": fam,
        "bound": bound,
        "c_hat": c_hat,
        "c_ok": c_hat <= bound + HARDNESS_SLACK,
        "forced_min": forced_min,
        "forced_ok": forced_min <= bound + HARDNESS_SLACK,
        "forced_edges": {e: forced.per_edge[e]["estimate"] for e in reps},
        "theta_hat": theta,
        "covariance_bound": {"lhs": theta, "rhs": cov_rhs,
                             "ok": theta >= cov_rhs - HARDNESS_SLACK},
        "feasibility": {"lhs": feas_lhs,
                        "ok": feas_lhs <= 1.0 + HARDNESS_SLACK},
        "trials": trials,
        "seed": seed,
    }


def upgrade_frequency(instance: Instance, order_model: ArrivalModel,
                      trials: int, seed: int = 0,
                      epsilon: float | None = None,
                      log_inv_epsilon: float | None = None) -> dict:
    """Per-edge admission frequency of the online fractional matching.

    Runs only the Y-sampling plus degree-guard stage and reports, per edge,
    the fraction of Y_e = 1 trials in which the edge was admitted (upgraded
    to z'_e > 0), plus the pooled rate.
    """
    params = reduction_parameters(instance, epsilon, log_inv_epsilon)
    z, y_scale = params["z"], params["y_scale"]
    cap_cnt = int(math.floor((1.0 - z) / z + 1e-12 / z))
    m = instance.edge_count
    nv = instance.vertex_count
    us, vs, xs = instance.us, instance.vs, instance.xs
    deterministic = order_model.is_deterministic
    fixed_perm = (np.asarray(order_model.sequence(), dtype=np.int64)
                  if deterministic else None)
    if not deterministic and order_model.kind != "uniform_times":
        raise ValueError("upgrade frequency supports fixed/uniform orders")
    y_count = np.zeros(m, dtype=np.int64)
    up_count = np.zeros(m, dtype=np.int64)
    done = 0
    chunk_idx = 0
    chunk_cap = 1024
    while done < trials:
        k = min(chunk_cap, trials - done)
        gen = _rng.stream(seed, "states", chunk_idx)
        orders = (None if deterministic
                  else np.argsort(gen.random((k, m)), axis=1, kind="stable"))
        zcnt = np.zeros((k, nv), dtype=np.int16)
        rows = np.arange(k)
        for step in range(m):
            if deterministic:
                e = int(fixed_perm[step])
                eu = np.full(k, int(us[e]))
                ev = np.full(k, int(vs[e]))
                ey = y_scale * float(xs[e])
                eid = None
            else:
                eid = orders[:, step]
                eu = us[eid]
                ev = vs[eid]
                ey = y_scale * xs[eid]
            Y = gen.random(k) < ey
            admit = Y & (zcnt[rows, eu] <= cap_cnt) & (zcnt[rows, ev] <= cap_cnt)
            zcnt[rows, eu] += admit
            zcnt[rows, ev] += admit
            if deterministic:
                y_count[e] += int(Y.sum())
                up_count[e] += int(admit.sum())
            else:
                np.add.at(y_count, eid[Y], 1)
                np.add.at(up_count, eid[admit], 1)
        done += k
        chunk_idx += 1
    with np.errstate(invalid="ignore"):
        per_edge = np.where(y_count > 0, up_count / np.maximum(y_count, 1), np.nan)
    return {
        "per_edge": per_edge,
        "y_count": y_count,
        "pooled": float(up_count.sum() / max(1, y_count.sum())),
        "min_observed": float(np.nanmin(per_edge)) if (y_count > 0).any() else float("nan"),
        "params": params,
    }
