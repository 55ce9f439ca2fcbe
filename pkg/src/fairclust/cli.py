"""Command-line entry point: ingestion, preprocessing and one report per run."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import audit, hardness
from .core import FairnessConstraintSet, GroupSpec, PointSet, SoftClustering, build_distance_matrix, hard_cost, soft_cost
from .fair_assign import InfeasibleGroupsError, SolverConfig, alg_cf, alg_if, fair_kcenter, lower_bound_lp
from .lp import LpNumericalError
from .vanilla import VanillaConfig, vanilla_cluster

log = logging.getLogger("fairclust")


class InputError(ValueError):
    pass


# --------------------------------------------------------------------------- ingestion


def ingest_csv(path, feature_cols, group_cols=()) -> tuple:
    """Read numeric features and categorical group columns from a headed CSV.

    Returns (PointSet, groups, rejected) where ``groups`` maps "column=value" to the
    member ids (one group per distinct value, in first-seen order per column) and
    ``rejected`` counts rows dropped for a non-numeric feature cell.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    feature_cols, group_cols = list(feature_cols), list(group_cols or ())
    if not feature_cols:
        raise InputError("at least one feature column is required")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in feature_cols + group_cols if c not in header]
        if missing:
            raise InputError(f"missing column(s): {', '.join(missing)}")
        rows, labels, rejected = [], [], 0
        for rec in reader:
            try:
                vals = [float(rec[c]) for c in feature_cols]
            except (TypeError, ValueError):
                rejected += 1
                continue
            if not all(math.isfinite(v) for v in vals):
                rejected += 1
                continue
            rows.append(vals)
            labels.append([rec[c] for c in group_cols])
    if not rows:
        raise InputError("no usable rows")
    if rejected:
        log.warning("rejected %d row(s) with non-numeric features", rejected)
    groups = {}
    for ci, col in enumerate(group_cols):
        for j, lab in enumerate(labels):
            groups.setdefault(f"{col}={lab[ci]}", []).append(j)
    return PointSet(np.array(rows, dtype=float)), groups, rejected


def normalize(ps: PointSet) -> PointSet:
    """Zero mean, unit (population) variance per dimension; constant dimensions become 0."""
    if ps.n < 2:
        raise InputError("normalization needs at least two points")
    x = ps.points
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    out = np.zeros_like(x)
    live = sd > 0
    out[:, live] = (x[:, live] - mean[live]) / sd[live]
    return PointSet(out)


def subsample(ps: PointSet, size: int, seed: int = 0, groups: dict | None = None) -> tuple:
    """Uniform sample without replacement; ids are re-numbered in original order.

    Returns (PointSet, groups remapped to the new ids, kept original ids).
    """
    if size > ps.n:
        raise InputError(f"subsample size {size} exceeds n = {ps.n}")
    if size < 1:
        raise InputError("subsample size must be >= 1")
    keep = np.sort(np.random.default_rng(seed).choice(ps.n, size=size, replace=False))
    new_id = {int(o): i for i, o in enumerate(keep)}
    remapped = None
    if groups is not None:
        remapped = {}
        for name, members in groups.items():
            m = [new_id[j] for j in members if j in new_id]
            if m:
                remapped[name] = m
    return PointSet(ps.points[keep]), remapped, keep


def read_fairness_file(path, n: int) -> FairnessConstraintSet:
    """Lines "j1 j2 bound"; blank lines and # comments are skipped."""
    entries = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InputError(f"{path}:{ln}: expected 'j1 j2 bound'")
        a, b, f = int(parts[0]), int(parts[1]), float(parts[2])
        key = (a, b)
        entries[key] = min(f, entries.get(key, math.inf))
    return FairnessConstraintSet.from_directed(entries, n)


def write_soft_csv(sc: SoftClustering, path) -> None:
    """Header holds the center ids; one row of 17-significant-digit probabilities per point."""
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(str(c) for c in sc.centers) + "\n")
        for row in sc.mu:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def read_soft_csv(path) -> SoftClustering:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"empty solution file {path}")
    centers = tuple(int(c) for c in rows[0])
    mu = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return SoftClustering(centers, mu.reshape(-1, len(centers)))


# --------------------------------------------------------------------------- commands


def _load(args) -> tuple:
    if not args.input:
        raise InputError("--input is required for this command")
    features = [c for c in (args.features or "").split(",") if c]
    group_cols = [c for c in (args.groups or "").split(",") if c]
    ps, groups, rejected = ingest_csv(args.input, features, group_cols)
    ps = normalize(ps)
    kept = None
    if args.subsample is not None:
        ps, groups, kept = subsample(ps, args.subsample, args.seed, groups)
    info = {"n": ps.n, "dim": ps.dim, "rejected_rows": rejected}
    if kept is not None:
        info["sample_ids"] = [int(i) for i in kept]
    return ps, groups, info


def _fairness(args, dm) -> FairnessConstraintSet:
    spec = args.fairness
    if spec == "f1":
        return audit.fairness_f1(dm, args.m)
    if spec == "f2":
        return audit.fairness_f2(dm, args.k)
    if spec == "metric":
        return audit.fairness_metric(dm)
    if spec.startswith("file="):
        return read_fairness_file(spec[len("file="):], dm.n)
    raise InputError(f"unknown fairness measure {spec!r}")


def _group_spec(args, groups, n) -> GroupSpec:
    if not groups:
        raise InputError("this command needs --groups")
    return GroupSpec.from_delta(dict(sorted(groups.items())), n, args.delta)


def _solver(args, compute_bound=False) -> SolverConfig:
    return SolverConfig(seed=args.seed, tol=args.tol, threads=args.threads, compute_bound=compute_bound)


def _violations(sc, fair, tol) -> dict:
    count, pct, worst = audit.count_violations(sc, fair, tol=tol)
    return {"constrained_pairs": len(fair), "count": count, "percent": pct, "worst_pair": list(worst) if worst else None}


def cmd_cluster(args) -> tuple:
    ps, _, info = _load(args)
    hc = vanilla_cluster(ps, VanillaConfig(args.k, args.p, args.seed, threads=args.threads))
    dm = build_distance_matrix(ps)
    return {"data": info, "centers": list(hc.centers), "cost": hard_cost(hc, dm, args.p)}, hc.to_soft()


def cmd_fair(args) -> tuple:
    if args.price_instance is not None:
        ps, fair = audit.make_price_instance(args.r, args.price_instance, args.eps)
        info = {"n": ps.n, "dim": 1, "price_instance": {"r": args.r, "R": args.price_instance, "eps": args.eps}}
    else:
        ps, _, info = _load(args)
        fair = None
    dm = build_distance_matrix(ps)
    fair = fair if fair is not None else _fairness(args, dm)
    sc, rep = alg_if(ps, args.k, args.p, fair, _solver(args))
    out = {
        "data": info,
        "vanilla_cost": rep.stage1_cost,
        "fair_cost": rep.stage2_cost,
        "ratio": rep.stage2_cost / rep.stage1_cost if rep.stage1_cost > 0 else None,
        "result": rep.to_dict(),
        "violations": _violations(sc, fair, args.tol_audit),
    }
    if args.price_instance is not None:
        out["fair_lower_bound"] = lower_bound_lp(dm, args.k, args.p, fair)
    return out, sc


def cmd_combined(args) -> tuple:
    ps, groups, info = _load(args)
    dm = build_distance_matrix(ps)
    gs = _group_spec(args, groups, ps.n)
    fair = _fairness(args, dm)
    sc, rep = alg_cf(ps, args.k, args.p, fair, gs, _solver(args))
    per_group = [{"name": nm, "size": len(m), "alpha": float(a), "beta": float(b), "mad": audit.mad(sc, m, ps.n)} for nm, m, a, b in zip(gs.names, gs.members, gs.alpha, gs.beta)]
    return {"data": info, "result": rep.to_dict(), "violations": _violations(sc, fair.within_groups(gs), args.tol_audit), "per_group": per_group}, sc


def cmd_kcenter_fair(args) -> tuple:
    ps, groups, info = _load(args)
    dm = build_distance_matrix(ps)
    fair = _fairness(args, dm)
    gs = _group_spec(args, groups, ps.n) if args.with_groups else None
    res = fair_kcenter(dm, args.k, fair, _solver(args), groups=gs)
    check = fair.within_groups(gs) if gs is not None else fair
    out = {
        "data": info,
        "centers": list(res.centers),
        "radius": res.radius,
        "guess": res.guess,
        "achieved_radius": res.achieved_radius,
        "guesses_tried": res.guesses_tried,
        "violations": _violations(res.sc, check, args.tol_audit),
    }
    return out, res.sc


def cmd_audit(args) -> tuple:
    ps, groups, info = _load(args)
    dm = build_distance_matrix(ps)
    sc = read_soft_csv(args.solution)
    if sc.n != ps.n:
        raise InputError(f"solution has {sc.n} rows but the data has {ps.n} points")
    fair = _fairness(args, dm)
    out = {"data": info, "violations": _violations(sc, fair, args.tol_audit), "cost": soft_cost(sc, dm, 1.0 if math.isinf(args.p) else args.p)}
    if groups:
        gs = _group_spec(args, groups, ps.n)
        try:
            rep = audit.check_bias_bound(sc, gs, dm, tol=args.tol_audit)
            out["bias_bound"] = rep.to_dict()
        except ValueError as exc:
            out["bias_bound"] = {"skipped": str(exc)}
    return out, None


def cmd_baseline(args) -> tuple:
    ps, _, info = _load(args)
    dm = build_distance_matrix(ps)
    fair = _fairness(args, dm)
    cfg = _solver(args)
    hc = vanilla_cluster(ps, cfg.vanilla(args.k, 2))
    if args.target is not None:
        target = args.target
    else:
        _, rep = alg_if(ps, args.k, 2, fair, cfg)
        target = rep.stage2_cost
    beta = audit.calibrate_beta(ps, args.k, target, seed=args.seed, dm=dm, centers=hc.centers)
    sc = audit.softmax_assign(dm, hc.centers, beta)
    out = {"data": info, "target_cost": target, "beta": beta, "soft_cost": soft_cost(sc, dm, 2), "violations": _violations(sc, fair, args.tol_audit)}
    return out, sc


def cmd_bound(args) -> tuple:
    ps, _, info = _load(args)
    dm = build_distance_matrix(ps)
    fair = _fairness(args, dm)
    sc, rep = alg_if(ps, args.k, args.p, fair, _solver(args, compute_bound=True))
    out = {"data": info, "fair_cost": rep.stage2_cost, "lower_bound": rep.lower_bound, "ratio": rep.ratio, "rho": rep.rho, "theorem_bound": rep.theorem_bound, "result": rep.to_dict()}
    return out, sc


def cmd_reduce(args) -> tuple:
    g = hardness.Graph.read(args.graph)
    out = {"graph": {"n": g.n, "edges": len(g.edges)}, "k": args.k}
    out["dominating_set"] = hardness.domset_bruteforce(g, args.k)
    out["fair_side"] = hardness.fair_side(g, args.k)
    out["agree"] = out["dominating_set"] == out["fair_side"]
    sc = None
    hc = hardness.radius_one_solution(g, args.k)
    if hc is not None:
        dm = hardness.domset_to_metric(g)
        sc = hardness.half_mass_witness(hc)
        fair, worst = hardness.check_witness(sc, dm)
        out["witness"] = {"centers": list(hc.centers), "fair": fair, "max_expected_distance": worst}
    return out, sc


COMMANDS = {
    "cluster": cmd_cluster,
    "fair": cmd_fair,
    "combined": cmd_combined,
    "kcenter-fair": cmd_kcenter_fair,
    "audit": cmd_audit,
    "baseline": cmd_baseline,
    "bound": cmd_bound,
    "reduce": cmd_reduce,
}


# --------------------------------------------------------------------------- parser


def _norm_order(text: str) -> float:
    if text in ("inf", "Inf", "infinity"):
        return math.inf
    value = float(text)
    if value not in (1.0, 2.0):
        raise argparse.ArgumentTypeError("p must be 1, 2 or inf")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="CSV file with a header row")
    common.add_argument("--features", help="comma-separated numeric feature columns")
    common.add_argument("--groups", help="comma-separated categorical columns defining protected groups")
    common.add_argument("--k", type=int, default=2)
    common.add_argument("--p", type=_norm_order, default=2.0, help="1, 2 or inf")
    common.add_argument("--fairness", default="f1", help="f1, f2, metric or file=PATH")
    common.add_argument("--m", type=int, default=5, help="neighbours per point for f1")
    common.add_argument("--delta", type=float, default=0.2)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--subsample", type=int)
    common.add_argument("--tol", type=float, default=1e-7, help="LP feasibility tolerance")
    common.add_argument("--tol-audit", type=float, default=1e-6, help="violation tolerance in reports")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--timings", action="store_true", help="add wall-clock timings (breaks byte-identical reports)")

    parser = argparse.ArgumentParser(prog="fairclust", description="Individually fair clustering experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("cluster", parents=[common], help="vanilla clustering")
    fair = sub.add_parser("fair", parents=[common], help="two-stage individually fair clustering")
    fair.add_argument("--price-instance", type=float, metavar="R", help="use the two-cluster line instance with gap R")
    fair.add_argument("--r", type=float, default=1.0, help="cluster width of the price instance")
    fair.add_argument("--eps", type=float, default=0.01, help="fairness bound of the price instance")
    sub.add_parser("combined", parents=[common], help="group plus within-group individual fairness")
    kc = sub.add_parser("kcenter-fair", parents=[common], help="fair k-center by radius guessing")
    kc.add_argument("--with-groups", action="store_true", help="add group proportion constraints")
    au = sub.add_parser("audit", parents=[common], help="audit a stored soft clustering")
    au.add_argument("--solution", required=True, help="CSV written by another command")
    base = sub.add_parser("baseline", parents=[common], help="soft k-means at a matched cost")
    base.add_argument("--target", type=float, help="target cost (default: the fair solution's cost)")
    sub.add_parser("bound", parents=[common], help="fair cost against the LP lower bound")
    red = sub.add_parser("reduce", parents=[common], help="Dominating-Set reduction check on a small graph")
    red.add_argument("--graph", required=True, help="edge list: first line n, then 'u v' per line")
    return parser


def _config_echo(args) -> dict:
    skip = {"out", "timings", "threads"}
    out = {}
    for key, val in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(val, float) and math.isinf(val):
            val = "inf"
        out[key] = val
    return out


def run_command(args) -> dict:
    t0 = time.perf_counter()
    body, sc = COMMANDS[args.command](args)
    report = {"command": args.command, "config": _config_echo(args), **body}
    if args.timings:
        report["timings"] = {"total_seconds": time.perf_counter() - t0}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if sc is not None:
        write_soft_csv(sc, out / "solution.csv")
        report["solution_file"] = "solution.csv"
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n")
    return report


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set, frozenset)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def main(argv=None) -> int:
    level = os.environ.get("FAIRCLUST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        run_command(args)
    except InfeasibleGroupsError as exc:
        print(f"fairclust: infeasible: {exc}", file=sys.stderr)
        return 3
    except LpNumericalError as exc:
        print(f"fairclust: solver error: {exc}", file=sys.stderr)
        return 4
    except (InputError, ValueError, OSError) as exc:
        print(f"fairclust: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
