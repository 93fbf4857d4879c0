"""Contention resolution schemes.

All runners are pure functions of (instance, drawn order, realization) and
are strongly online: the decision on the i-th arriving edge depends only on
the values/states/coins of edges 1..i.  These are the single-trial reference
implementations; the estimation drivers in `analysis` use faster but
distributionally identical paths and are cross-checked against these.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ALPHA
from .instances import Instance, MatchResult, Realization
from .orders import ArrivalModel, DrawnOrder

ACCEPT_TOL = 1e-12
#: slack on the z'-degree guard; absorbs float accumulation of z multiples
GUARD_TOL = 1e-12


@dataclass(frozen=True)
class SchemeSpec:
    kind: str  # "greedy" | "tree_ocrs" | "vanishing_reduction" | "exactly_c"
    c: float | None = None
    epsilon: float | None = None
    log_inv_epsilon: float | None = None
    inner: "SchemeSpec | None" = None
    drops: dict | None = None  # edge_id -> drop probability

    def __post_init__(self):
        if self.kind not in ("greedy", "tree_ocrs", "vanishing_reduction", "exactly_c"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "tree_ocrs":
            c = ALPHA if self.c is None else self.c
            if not (0.0 < c <= ALPHA + 1e-12):
                raise ValueError(f"tree_ocrs constant must be in (0, alpha], got {c}")
        if self.kind == "vanishing_reduction":
            if self.epsilon is not None and self.log_inv_epsilon is not None:
                raise ValueError("give epsilon or log_inv_epsilon, not both")
        if self.kind == "exactly_c" and (self.inner is None or self.drops is None):
            raise ValueError("exactly_c needs an inner scheme and drop probabilities")


def greedy_scheme() -> SchemeSpec:
    return SchemeSpec("greedy")


def tree_ocrs_scheme(c: float = ALPHA) -> SchemeSpec:
    return SchemeSpec("tree_ocrs", c=c)


def vanishing_scheme(epsilon: float | None = None,
                     log_inv_epsilon: float | None = None) -> SchemeSpec:
    return SchemeSpec("vanishing_reduction", epsilon=epsilon,
                      log_inv_epsilon=log_inv_epsilon)


@dataclass
class OnlineState:
    """Mutable single-trial execution state shared by the online runners."""
    matched: np.ndarray                 # bool per vertex
    prefix_deg: np.ndarray              # fractional x-degree of arrivals so far
    zdeg: np.ndarray | None = None      # z'-degree accumulator (reduction only)
    extras: dict = field(default_factory=dict)


def _new_result() -> MatchResult:
    return MatchResult(set(), {})


def run_greedy(instance: Instance, drawn_order: DrawnOrder,
               realization: Realization) -> MatchResult:
    """Select each arriving active edge whose endpoints are both unmatched."""
    state = OnlineState(np.zeros(instance.vertex_count, dtype=bool),
                        np.zeros(instance.vertex_count))
    res = _new_result()
    us, vs = instance.us, instance.vs
    for rank, e in enumerate(drawn_order.permutation):
        e = int(e)
        u, v = int(us[e]), int(vs[e])
        active = bool(realization.states[e])
        sel = active and not state.matched[u] and not state.matched[v]
        if sel:
            res.selected.add(e)
            state.matched[u] = state.matched[v] = True
        res.per_edge[e] = {"selected": sel, "was_active": active, "arrival_rank": rank}
    return res


def tree_ocrs_acceptance(c: float, deg_u: float, deg_v: float) -> float:
    """Acceptance probability c / ((1 - c*x_u(e)) (1 - c*x_v(e)))."""
    return c / ((1.0 - c * deg_u) * (1.0 - c * deg_v))


def run_tree_ocrs(instance: Instance, drawn_order: DrawnOrder,
                  realization: Realization, c: float = ALPHA) -> MatchResult:
    """Greedy filtered by the prefix-degree acceptance coin.

    An arriving e=(u,v) is selected iff both endpoints are unmatched, X_e=1,
    and an independent coin with probability c/((1-c*x_u(e))(1-c*x_v(e)))
    succeeds, where x_w(e) is the fractional degree of w among strictly
    earlier arrivals (active or not).
    """
    state = OnlineState(np.zeros(instance.vertex_count, dtype=bool),
                        np.zeros(instance.vertex_count))
    res = _new_result()
    us, vs, xs = instance.us, instance.vs, instance.xs
    accept_coins = realization.coins["accept"]
    for rank, e in enumerate(drawn_order.permutation):
        e = int(e)
        u, v, x = int(us[e]), int(vs[e]), float(xs[e])
        a = tree_ocrs_acceptance(c, state.prefix_deg[u], state.prefix_deg[v])
        if a > 1.0 + ACCEPT_TOL:
            raise ValueError(
                f"edge {e}: acceptance probability {a} > 1; input is not a "
                "fractional matching")
        active = bool(realization.states[e])
        sel = (active and accept_coins[e] < a
               and not state.matched[u] and not state.matched[v])
        if sel:
            res.selected.add(e)
            state.matched[u] = state.matched[v] = True
        res.per_edge[e] = {"selected": sel, "was_active": active, "arrival_rank": rank}
        state.prefix_deg[u] += x
        state.prefix_deg[v] += x
    return res


def couple_two_round(x: float, y: float, z: float, X: int,
                     keep_coin: float, split_coin: float) -> tuple[int, int]:
    """Split one Ber(x) bit into independent Ber(y), Ber(z) bits with X >= Y*Z.

    Draw X' = X * Ber(yz/x); X'=1 forces (1,1); otherwise (Y,Z) comes from
    the three-point table a10=(y-yz)/(1-yz), a01=(z-yz)/(1-yz), a00=rest.
    """
    if not (0.0 < x <= 1.0 and 0.0 < y <= 1.0 and 0.0 < z <= 1.0):
        raise ValueError(f"probabilities must be in (0,1], got x={x}, y={y}, z={z}")
    yz = y * z
    if x < yz - 1e-15:
        raise ValueError(f"coupling impossible: x={x} < y*z={yz}")
    if X and keep_coin < yz / x:
        return 1, 1
    rem = 1.0 - yz
    if rem <= 0.0:
        # y=z=1 forces x=1 and the X'=1 branch above; reachable only on X=0
        return int(X), int(X)
    a10 = (y - yz) / rem
    a01 = (z - yz) / rem
    if split_coin < a10:
        return 1, 0
    if split_coin < a10 + a01:
        return 0, 1
    return 0, 0


def run_fractional_matching(instance: Instance, drawn_order: DrawnOrder,
                            y_draws: np.ndarray, epsilon: float,
                            log_inv_epsilon: float | None = None) -> np.ndarray:
    """Online fractional matching: z'_e = 1/log(1/eps) for admitted edges.

    An arriving edge with Y_e=1 is admitted iff both endpoints' accumulated
    z'-degrees are still at most 1 - 1/log(1/eps).  Output always validates
    as a fractional matching.
    """
    L = _resolve_log_inv_eps(epsilon, log_inv_epsilon)
    z = 1.0 / L
    cap = 1.0 - z + GUARD_TOL
    zdeg = np.zeros(instance.vertex_count)
    zp = np.zeros(instance.edge_count)
    us, vs = instance.us, instance.vs
    for e in drawn_order.permutation:
        e = int(e)
        if not y_draws[e]:
            continue
        u, v = int(us[e]), int(vs[e])
        if zdeg[u] <= cap and zdeg[v] <= cap:
            zp[e] = z
            zdeg[u] += z
            zdeg[v] += z
    return zp


def _resolve_log_inv_eps(epsilon: float | None,
                         log_inv_epsilon: float | None) -> float:
    if log_inv_epsilon is not None:
        L = float(log_inv_epsilon)
        if L <= 1.0:
            raise ValueError(f"log(1/epsilon) must exceed 1, got {L}")
        return L
    if epsilon is None:
        raise ValueError("need epsilon or log_inv_epsilon")
    if not (0.0 < epsilon < 1.0 / math.e):
        raise ValueError(f"epsilon must be in (0, 1/e), got {epsilon}")
    return math.log(1.0 / epsilon)


def reduction_parameters(instance: Instance, epsilon: float | None = None,
                         log_inv_epsilon: float | None = None) -> dict:
    """Resolve (L, delta, y scale, z, ell) for the vanishing reduction.

    epsilon defaults to max_e x_e.  Errors if the per-edge graph-sampling
    probabilities y_e = (1 - L^-1/4) * x_e * L would exceed 1, reporting the
    threshold.
    """
    xmax = float(instance.xs.max()) if instance.edge_count else 0.0
    if epsilon is None and log_inv_epsilon is None:
        epsilon = xmax
    L = _resolve_log_inv_eps(epsilon, log_inv_epsilon)
    delta = L ** -0.25
    scale = (1.0 - delta) * L
    ymax = scale * xmax
    if ymax > 1.0 + 1e-12:
        raise ValueError(
            f"reduction infeasible: y_max = (1 - log^-1/4)*log(1/eps)*max_x = "
            f"{ymax:.6g} > 1 at max_x={xmax:.6g}; need (1-delta)*L <= {1.0 / xmax:.6g}")
    return {"L": L, "delta": delta, "y_scale": scale, "z": 1.0 / L,
            "ell": int(round(math.log(L)))}


def run_vanishing_reduction(instance: Instance, drawn_order: DrawnOrder,
                            realization: Realization,
                            epsilon: float | None = None,
                            log_inv_epsilon: float | None = None,
                            c: float = ALPHA) -> MatchResult:
    """Two-round exposure + online fractional matching + inner Tree-OCRS.

    Per arriving edge: split X_e into (Y_e, Z_e) with y_e = (1-delta)*x_e*L
    and z = 1/L; admit Y_e=1 edges to the fractional matching while the
    degree guard allows; submit admitted edges with state Z_e and value z to
    an inner Tree-OCRS running on the admitted subgraph.  Every selected
    edge has X_e=1 (coupling domination), asserted per trial.
    """
    params = reduction_parameters(instance, epsilon, log_inv_epsilon)
    L, z = params["L"], params["z"]
    y_scale = params["y_scale"]
    cap = 1.0 - z + GUARD_TOL
    state = OnlineState(np.zeros(instance.vertex_count, dtype=bool),
                        np.zeros(instance.vertex_count),
                        zdeg=np.zeros(instance.vertex_count))
    res = _new_result()
    res.metadata.update(params)
    us, vs, xs = instance.us, instance.vs, instance.xs
    keep = realization.coins["couple_keep"]
    split = realization.coins["couple_split"]
    accept = realization.coins["accept"]
    for rank, e in enumerate(drawn_order.permutation):
        e = int(e)
        u, v, x = int(us[e]), int(vs[e]), float(xs[e])
        active = bool(realization.states[e])
        y_e = y_scale * x
        Y, Z = couple_two_round(x, y_e, z, int(active), keep[e], split[e])
        sel = False
        if Y and state.zdeg[u] <= cap and state.zdeg[v] <= cap:
            a = tree_ocrs_acceptance(c, state.zdeg[u], state.zdeg[v])
            state.zdeg[u] += z
            state.zdeg[v] += z
            if Z and accept[e] < a and not state.matched[u] and not state.matched[v]:
                if not active:  # X >= Y*Z makes this impossible
                    raise AssertionError(f"edge {e} selected while inactive")
                sel = True
                res.selected.add(e)
                state.matched[u] = state.matched[v] = True
        res.per_edge[e] = {"selected": sel, "was_active": active, "arrival_rank": rank}
    return res


def run_exactly_c(instance: Instance, drawn_order: DrawnOrder,
                  realization: Realization, spec: SchemeSpec) -> MatchResult:
    """Inner scheme plus independent post-selection drops (distinct coins)."""
    res = run_scheme(spec.inner, instance, drawn_order, realization)
    drop_coins = realization.coins["drop"]
    for e in sorted(res.selected):
        p_drop = spec.drops.get(e, 0.0)
        if p_drop > 0.0 and drop_coins[e] < p_drop:
            res.selected.discard(e)
            res.per_edge[e]["selected"] = False
            res.per_edge[e]["dropped"] = True
    return res


def run_scheme(spec: SchemeSpec, instance: Instance, drawn_order: DrawnOrder,
               realization: Realization) -> MatchResult:
    if spec.kind == "greedy":
        return run_greedy(instance, drawn_order, realization)
    if spec.kind == "tree_ocrs":
        return run_tree_ocrs(instance, drawn_order, realization,
                             c=ALPHA if spec.c is None else spec.c)
    if spec.kind == "vanishing_reduction":
        return run_vanishing_reduction(instance, drawn_order, realization,
                                       epsilon=spec.epsilon,
                                       log_inv_epsilon=spec.log_inv_epsilon)
    if spec.kind == "exactly_c":
        return run_exactly_c(instance, drawn_order, realization, spec)
    raise ValueError(f"unknown scheme kind {spec.kind!r}")


def make_exactly_c(inner: SchemeSpec, instance: Instance, order_model: ArrivalModel,
                   target_c: float | None, pilot_trials: int,
                   seed: int = 0) -> SchemeSpec:
    """Normalize a scheme to exactly-c selectability by per-edge drops.

    Pilot-estimates p_e = Pr[e in M | X_e=1] for every edge (aggregate mode);
    target_c=None means the empirical minimum.  The wrapped scheme drops each
    selected edge independently with probability 1 - c/p_e, so its
    conditional selection is ~c everywhere.  Errors if any pilot estimate
    falls below the target.
    """
    from .analysis import estimate_selection  # deferred: analysis imports schemes
    report = estimate_selection(inner, instance, order_model, pilot_trials,
                                mode="aggregate", seed=seed)
    est = {e: rec["estimate"] for e, rec in report.per_edge.items()}
    c = min(est.values()) if target_c is None else float(target_c)
    low = [e for e, p in est.items() if p < c]
    if low:
        shown = ", ".join(f"{e}:{est[e]:.4f}" for e in low[:8])
        raise ValueError(
            f"{len(low)} edges have pilot estimate below target c={c:.4f}: {shown}")
    drops = {e: (0.0 if p <= 0.0 else max(0.0, 1.0 - c / p)) for e, p in est.items()}
    return SchemeSpec("exactly_c", c=c, inner=inner, drops=drops)


# --- JSON interchange -------------------------------------------------------

def scheme_to_obj(spec: SchemeSpec) -> dict:
    obj: dict = {"kind": spec.kind}
    if spec.c is not None:
        obj["c"] = spec.c
    if spec.epsilon is not None:
        obj["epsilon"] = spec.epsilon
    if spec.log_inv_epsilon is not None:
        obj["log_inv_epsilon"] = spec.log_inv_epsilon
    if spec.inner is not None:
        obj["inner"] = scheme_to_obj(spec.inner)
    if spec.drops is not None:
        obj["drops"] = {str(e): p for e, p in sorted(spec.drops.items())}
    return obj


def scheme_from_obj(obj: dict) -> SchemeSpec:
    return SchemeSpec(
        obj["kind"],
        c=obj.get("c"),
        epsilon=obj.get("epsilon"),
        log_inv_epsilon=obj.get("log_inv_epsilon"),
        inner=scheme_from_obj(obj["inner"]) if "inner" in obj else None,
        drops={int(e): float(p) for e, p in obj["drops"].items()}
        if "drops" in obj else None,
    )
