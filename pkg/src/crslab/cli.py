"""Batch experiment driver.

Subcommands: gen, run, oracle, gw, hardness, constants.  Machine-first
output (CSV/JSON); seeds default to 0 and CRSLAB_SEED overrides --seed.
Exit codes: 0 success, 2 usage/config error, 3 enumeration-limit error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import generators
from .analysis import (LimitExceeded, covariance_diagnostics, estimate_selection,
                       exact_oracle, find_low_variance_subset,
                       hardness_bound_check, report_to_csv)
from .constants import all_constants
from .gw import estimate_match_prob, estimate_q, match_prob_closed, q_table_closed
from .instances import Instance, load_instance, save_instance, instance_to_json
from .orders import (ArrivalModel, fixed_order, lex_seeds,
                     phase_based_general, phase_based_tree, uniform_times)
from .schemes import (SchemeSpec, greedy_scheme, make_exactly_c, scheme_to_obj,
                      tree_ocrs_scheme, vanishing_scheme)


class UsageError(ValueError):
    pass


GENERATOR_SPECS = ("star_gadget:N", "cycle:G:X", "path:N:X", "general_hard:N",
                   "tree_hard:N", "complete_bipartite:N", "er_one_regular:N[:SEED]")


def parse_gen_spec(spec: str) -> Instance:
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "star_gadget" and len(args) == 1:
            return generators.star_gadget(int(args[0]))
        if name == "cycle" and len(args) == 2:
            return generators.cycle(int(args[0]), float(args[1]))
        if name == "path" and len(args) == 2:
            return generators.path(int(args[0]), float(args[1]))
        if name == "general_hard" and len(args) == 1:
            return generators.general_hard(int(args[0]))
        if name == "tree_hard" and len(args) == 1:
            return generators.tree_hard(int(args[0]))
        if name == "complete_bipartite" and len(args) == 1:
            return generators.complete_bipartite(int(args[0]))
        if name == "er_one_regular" and len(args) in (1, 2):
            seed = int(args[1]) if len(args) == 2 else 0
            return generators.er_one_regular(int(args[0]), seed)
    except ValueError as exc:
        raise UsageError(f"bad generator spec {spec!r}: {exc}") from exc
    raise UsageError(f"unknown generator spec {spec!r}; known: "
                     + ", ".join(GENERATOR_SPECS))


def parse_order_spec(spec: str, instance: Instance) -> ArrivalModel:
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    if name == "uniform_times" and not args:
        return uniform_times()
    if name == "lex_seeds" and not args:
        return lex_seeds()
    if name == "fixed":
        arg = args[0] if args else "canonical"
        if arg == "canonical":
            return fixed_order(range(instance.edge_count))
        if arg == "reverse":
            return fixed_order(range(instance.edge_count - 1, -1, -1))
        try:
            ids = [int(t) for t in arg.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad fixed order spec {spec!r}") from exc
        return fixed_order(ids)
    if name == "phase_based":
        fam = instance.metadata.get("family")
        n = int(instance.metadata.get("n", "0") or 0)
        if fam == "general_hard":
            last = int(args[0]) if args else n
            return phase_based_general(instance, last)
        if fam == "tree_hard":
            k = int(args[0]) if args else n
            return phase_based_tree(instance, list(range(1, k + 1)))
        raise UsageError("phase_based order needs a general_hard/tree_hard instance")
    raise UsageError(f"unknown order spec {spec!r}; known: fixed[:canonical|"
                     "reverse|i,j,...], uniform_times, lex_seeds, phase_based[:K]")


def parse_scheme_spec(spec: str) -> SchemeSpec:
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "greedy" and not args:
            return greedy_scheme()
        if name == "tree_ocrs" and len(args) <= 1:
            return tree_ocrs_scheme(float(args[0])) if args else tree_ocrs_scheme()
        if name == "vanishing":
            if not args:
                return vanishing_scheme()
            if args[0] == "log" and len(args) == 2:
                return vanishing_scheme(log_inv_epsilon=float(args[1]))
            if len(args) == 1:
                return vanishing_scheme(epsilon=float(args[0]))
    except ValueError as exc:
        raise UsageError(f"bad scheme spec {spec!r}: {exc}") from exc
    raise UsageError(f"unknown scheme spec {spec!r}; known: greedy, "
                     "tree_ocrs[:C], vanishing[:EPS|:log:L]")


def _load_instance_arg(args) -> Instance:
    if getattr(args, "gen", None):
        return parse_gen_spec(args.gen)
    if getattr(args, "instance", None):
        try:
            return load_instance(args.instance)
        except FileNotFoundError as exc:
            raise UsageError(f"instance file not found: {args.instance}") from exc
    raise UsageError("one of --gen/--instance is required")


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_gen(args) -> int:
    inst = parse_gen_spec(args.spec)
    if args.out:
        save_instance(inst, args.out)
        print(f"wrote {args.out} ({inst.vertex_count} vertices, "
              f"{inst.edge_count} edges)")
    else:
        sys.stdout.write(instance_to_json(inst) + "\n")
    return 0


def cmd_run(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    inst = _load_instance_arg(args)
    scheme = parse_scheme_spec(args.scheme)
    model = parse_order_spec(args.order, inst)
    edges = None
    if args.edges:
        edges = [int(t) for t in args.edges.split(",")]
        bad = [e for e in edges if not (0 <= e < inst.edge_count)]
        if bad:
            raise UsageError(f"edge ids out of range: {bad}")
    report = estimate_selection(scheme, inst, model, args.trials,
                                mode=args.mode, seed=args.seed, edges=edges,
                                workers=args.workers)
    obj = report.to_obj()
    obj["scheme"] = scheme_to_obj(scheme)
    if args.out_prefix:
        with open(args.out_prefix + ".csv", "w") as fh:
            fh.write(report_to_csv(report, inst))
        with open(args.out_prefix + ".json", "w") as fh:
            fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    summary = {"instance": inst.name, "mode": report.mode,
               "trials": report.trials, "seed": report.seed,
               "edges_reported": len(report.per_edge),
               "min_estimate": report.min_estimate}
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_oracle(args) -> int:
    inst = _load_instance_arg(args)
    scheme = parse_scheme_spec(args.scheme)
    model = parse_order_spec(args.order, inst)
    if not (0 <= args.edge < inst.edge_count):
        raise UsageError(f"--edge out of range 0..{inst.edge_count - 1}")
    value = exact_oracle(scheme, inst, model, args.edge)
    _emit({"instance": inst.name, "edge": args.edge, "value": value}, args.out)
    return 0


def cmd_gw(args) -> int:
    if args.order not in ("uniform", "lex"):
        raise UsageError("--order must be uniform or lex")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    obj = estimate_match_prob(args.order, args.trials, node_cap=args.cap,
                              seed=args.seed)
    obj["closed_match_prob"] = match_prob_closed(args.order)
    if args.grid:
        grid = np.linspace(0.0, 1.0, args.grid)
        qf = estimate_q(args.order, grid, args.trials, node_cap=args.cap,
                        seed=args.seed)
        obj["q_table"] = {
            "grid": [float(g) for g in qf.grid],
            "values": np.asarray(qf.values).tolist(),
            "ci_low": np.asarray(qf.ci_low).tolist(),
            "ci_high": np.asarray(qf.ci_high).tolist(),
            "closed": np.asarray(q_table_closed(args.order, qf.grid)).tolist(),
        }
    _emit(obj, args.out)
    return 0


def cmd_hardness(args) -> int:
    inst = _load_instance_arg(args)
    fam = inst.metadata.get("family")
    if fam not in ("general_hard", "tree_hard"):
        raise UsageError("--gen/--instance must be general_hard:N or tree_hard:N")
    model = parse_order_spec(args.order, inst)
    inner = parse_scheme_spec(args.scheme)
    normalized = make_exactly_c(inner, inst, model, target_c=None,
                                pilot_trials=args.pilot_trials, seed=args.seed)
    diag = covariance_diagnostics(normalized, inst, model, args.trials,
                                  seed=args.seed, keep_samples=True)
    report = hardness_bound_check(normalized, inst, model, args.trials,
                                  seed=args.seed, workers=args.workers, diag=diag)
    obj = dict(report)
    obj["pilot_trials"] = args.pilot_trials
    obj["covariance"] = diag.to_obj(full_cov=args.full_cov)
    if args.subset_size:
        obj["subset"] = find_low_variance_subset(diag.samples, args.subset_size,
                                                 candidate_count=args.subset_candidates)
    obj["forced_edges"] = {str(k): v for k, v in report["forced_edges"].items()}
    _emit(obj, args.out)
    return 0


def cmd_constants(args) -> int:
    obj = {c.name: {"value": c.value, "residual": c.residual, "method": c.method}
           for c in all_constants()}
    _emit(obj, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="crslab",
        description="Edge-arrival contention resolution experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, seed=True, workers=False, out=True):
        if seed:
            p.add_argument("--seed", type=int, default=0,
                           help="stream seed (CRSLAB_SEED overrides)")
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="thread count; results do not depend on it")
        if out:
            p.add_argument("--out", default=None, help="also write JSON here")

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("spec", help="generator spec, e.g. " + GENERATOR_SPECS[0])
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="Monte Carlo selection estimates")
    p.add_argument("--gen", default=None, help="generator spec")
    p.add_argument("--instance", default=None, help="instance JSON file")
    p.add_argument("--scheme", required=True)
    p.add_argument("--order", required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--mode", choices=("forced", "aggregate"), default="forced")
    p.add_argument("--edges", default=None, help="comma-separated edge ids")
    p.add_argument("--out-prefix", default=None,
                   help="write PREFIX.csv and PREFIX.json")
    add_common(p, workers=True, out=False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="exact selection probability")
    p.add_argument("--gen", default=None)
    p.add_argument("--instance", default=None)
    p.add_argument("--scheme", required=True)
    p.add_argument("--order", required=True)
    p.add_argument("--edge", type=int, required=True)
    add_common(p, seed=False)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gw", help="branching-process matching estimates")
    p.add_argument("--order", required=True, choices=("uniform", "lex"))
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--cap", type=int, default=10 ** 6, help="node cap per tree")
    p.add_argument("--grid", type=int, default=0,
                   help="survival-table grid points (0 = skip)")
    add_common(p)
    p.set_defaults(func=cmd_gw)

    p = sub.add_parser("hardness", help="normalize a scheme and check bounds")
    p.add_argument("--gen", default=None)
    p.add_argument("--instance", default=None)
    p.add_argument("--scheme", default="greedy")
    p.add_argument("--order", default="phase_based")
    p.add_argument("--pilot-trials", type=int, default=100000)
    p.add_argument("--trials", type=int, default=50000)
    p.add_argument("--subset-size", type=int, default=0,
                   help="also search for a low-variance spoke subset")
    p.add_argument("--subset-candidates", type=int, default=10000)
    p.add_argument("--full-cov", action="store_true",
                   help="include the full covariance matrix in the JSON")
    add_common(p, workers=True)
    p.set_defaults(func=cmd_hardness)

    p = sub.add_parser("constants", help="all closed-form/root constants")
    add_common(p, seed=False)
    p.set_defaults(func=cmd_constants)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    env_seed = os.environ.get("CRSLAB_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(f"crslab: bad CRSLAB_SEED {env_seed!r}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except LimitExceeded as exc:
        print(f"crslab: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError, OSError) as exc:
        print(f"crslab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
