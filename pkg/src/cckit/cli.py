"""Command line front end: solve, oracle, gen, validate."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import GeometryError, PointSet
from .oracle import OracleRefused, brute_force_optimum
from .partitions import KINDS, ConstraintError, ConstraintSpec, evaluate, reduce_uncertain_means, validate
from .pne import InfeasibleError, PneError, PneParams, solve
from .sampling import SampleParams, SamplingError, faithful_sample_size

log = logging.getLogger("cckit")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    points: PointSet
    color_names: Optional[list] = None
    nodes: Optional[list] = None  # (coords, probs) per probabilistic node


def _coords(rec, i: int, dim: Optional[int], what: str = "point") -> list:
    c = rec.get("coords") if isinstance(rec, dict) else None
    if not isinstance(c, list) or not c or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in c):
        raise DatasetError(f"{what} {i}: coords must be a nonempty list of numbers")
    if dim is not None and len(c) != dim:
        raise DatasetError(f"{what} {i}: expected {dim} coordinates, got {len(c)}")
    if not all(math.isfinite(v) for v in c):
        raise DatasetError(f"{what} {i}: coordinates must be finite")
    return c


def _parse_points(doc: dict) -> Dataset:
    recs = doc["points"]
    if not isinstance(recs, list) or not recs:
        raise DatasetError("points must be a nonempty list")
    dim = doc.get("dim")
    if dim is None:
        dim = len(recs[0].get("coords", [])) if isinstance(recs[0], dict) else None
    coords, weights, colors, priors = [], [], [], []
    has = {key: any(isinstance(r, dict) and key in r for r in recs) for key in ("color", "weight", "prior")}
    for i, r in enumerate(recs):
        coords.append(_coords(r, i, dim))
        for key in ("color", "weight", "prior"):
            if has[key] and key not in r:
                raise DatasetError(f"point {i}: missing {key} (other points have one)")
        if has["weight"]:
            w = r["weight"]
            if not isinstance(w, (int, float)) or isinstance(w, bool) or not w >= 0 or not math.isfinite(w):
                raise DatasetError(f"point {i}: weight must be a finite number >= 0")
            weights.append(float(w))
        if has["color"]:
            if not isinstance(r["color"], (str, int)) or isinstance(r["color"], bool):
                raise DatasetError(f"point {i}: color must be a string or integer")
            colors.append(str(r["color"]))
        if has["prior"]:
            if not isinstance(r["prior"], int) or isinstance(r["prior"], bool) or r["prior"] < 1:
                raise DatasetError(f"point {i}: prior must be a cluster id >= 1")
            priors.append(r["prior"] - 1)
    names = None
    color_ids = None
    if has["color"]:
        names = list(dict.fromkeys(colors))
        index = {c: j for j, c in enumerate(names)}
        color_ids = np.array([index[c] for c in colors])
    P = PointSet(np.array(coords, dtype=float), np.array(weights) if has["weight"] else None,
                 color_ids, np.array(priors) if has["prior"] else None)
    return Dataset(P, names)


def _parse_nodes(doc: dict) -> Dataset:
    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise DatasetError("nodes must be a nonempty list")
    dim = doc.get("dim")
    coords, probs, groups, out = [], [], [], []
    for i, node in enumerate(nodes):
        reals = node.get("realizations") if isinstance(node, dict) else None
        if not isinstance(reals, list) or not reals:
            raise DatasetError(f"node {i}: realizations must be a nonempty list")
        xs, ts = [], []
        for r in reals:
            c = _coords(r, i, dim, "node")
            if dim is None:
                dim = len(c)
            t = r.get("prob")
            if not isinstance(t, (int, float)) or isinstance(t, bool) or not 0 <= t <= 1:
                raise DatasetError(f"node {i}: prob must lie in [0, 1]")
            xs.append(c)
            ts.append(float(t))
        if sum(ts) > 1 + 1e-12:
            raise DatasetError(f"node {i}: probabilities sum to {sum(ts):.6g} > 1")
        if sum(ts) <= 0:
            raise DatasetError(f"node {i}: probabilities sum to zero")
        coords += xs
        probs += ts
        groups += [i] * len(xs)
        out.append((np.array(xs), np.array(ts)))
    P = PointSet(np.array(coords), np.array(probs), groups=np.array(groups))
    return Dataset(P, nodes=out)


def load_csv(path: str) -> dict:
    """One row per point; a trailing non-numeric column is the color."""
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            row = [c.strip() for c in row if c.strip() != ""]
            if not row:
                continue
            try:
                points.append({"coords": [float(v) for v in row]})
            except ValueError:
                try:
                    points.append({"coords": [float(v) for v in row[:-1]], "color": row[-1]})
                except ValueError:
                    if i == 0:
                        continue  # header
                    raise DatasetError(f"point {len(points)}: non-numeric coordinate")
    return {"dim": len(points[0]["coords"]) if points else 0, "points": points}


def load_dataset(path: str) -> Dataset:
    if path.endswith(".csv"):
        doc = load_csv(path)
    else:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DatasetError("dataset must be a JSON object")
    if "points" in doc:
        ds = _parse_points(doc)
    elif "nodes" in doc:
        ds = _parse_nodes(doc)
    else:
        raise DatasetError("dataset needs a 'points' or 'nodes' list")
    if doc.get("dim") is not None and ds.points.dim != doc["dim"]:
        raise DatasetError("dim disagrees with the coordinates")
    return ds


def spec_from_args(args) -> ConstraintSpec:
    return ConstraintSpec(kind=args.constraint, r=args.r, l=args.l, alpha=args.alpha, E1=args.E1, E2=args.E2)


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _external(labels) -> list:
    """Cluster ids as written to files: 1..k."""
    return (np.asarray(labels, dtype=int) + 1).tolist()


def _write(report: dict, path: Optional[str]):
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _instance(ds: Dataset, spec: ConstraintSpec, objective: str):
    """Point set actually clustered, objective, and any constant added to it."""
    if spec.kind == "uncertain_means":
        if ds.nodes is None:
            raise DatasetError("uncertain_means needs a probabilistic (nodes) dataset")
        P, spread = reduce_uncertain_means(ds.nodes)
        return P, "means", spread
    if spec.kind == "probabilistic_median":
        return ds.points, "median", 0.0
    if ds.nodes is not None:
        raise DatasetError(f"{spec.kind} takes a plain points dataset")
    return ds.points, objective, 0.0


def build_params(args, k: int, objective: str) -> PneParams:
    track = "means" if objective == "means" else "median"
    if args.preset == "faithful":
        s = faithful_sample_size(k, args.eps, track)
        log.warning("faithful preset needs sample size s=%.4g (2^s subset means)", s)
        try:
            sample = SampleParams.faithful(k, args.eps, track)
        except SamplingError:
            if not args.force:
                raise
            s_cap = int(math.log2(SampleParams().subset_cap + 1))
            log.warning("--force: running with s=%d instead", s_cap)
            sample = SampleParams(s=s_cap, preset="faithful")
        return PneParams(k=k, eps=args.eps, sample=sample, beam_width=args.beam, max_grid_points=None)
    beam = 16 if args.beam is None else args.beam
    return PneParams(k=k, eps=args.eps, sample=SampleParams(s=args.s), beam_width=beam or None)


def _ratio(value: float, best: Optional[float]) -> Optional[float]:
    if best is None or not math.isfinite(value):
        return None
    if best > 0:
        return value / best
    return 1.0 if value == 0 else math.inf


def write_table(path: str, rows):
    """CSV of (seed, ratio, runtime_s) rows for plotting; ratio is empty
    without an oracle."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "ratio", "runtime_s"])
        for seed, ratio, secs in rows:
            w.writerow([seed, "" if ratio is None else repr(ratio), f"{secs:.6f}"])


def run(args) -> tuple[dict, int]:
    ds = load_dataset(args.input)
    spec = spec_from_args(args)
    P, objective, extra = _instance(ds, spec, args.objective)
    params = build_params(args, args.k, objective)
    t0 = time.perf_counter()
    config = {
        "input": os.path.basename(args.input), "objective": objective, "constraint": spec.describe(),
        "k": args.k, "eps": args.eps, "seed": args.seed, "repeats": args.repeats, "preset": args.preset,
        "s": params.sample.s, "beam_width": params.beam_width,
    }
    try:
        res = solve(P, args.k, args.eps, spec, objective, seed=args.seed, params=params,
                    repeats=args.repeats, jobs=args.jobs)
    except InfeasibleError as exc:
        report = {"config": config, "feasible": False, "reason": str(exc),
                  "wall_clock_s": time.perf_counter() - t0}
        return report, EXIT_INFEASIBLE
    out = res.outcome
    centers = res.tuple.centers
    recomputed = evaluate(P, out.assignment, centers, spec, objective, owners=out.owners)
    report = {
        "config": config,
        "feasible": True,
        "objective": recomputed + extra,
        "centers": _floats(centers),
        "assignment": _external(out.assignment),
        "exact_partition": bool(out.exact),
        "provenance": list(res.tuple.provenance),
        "search": {
            "Delta": res.upper_bound.Delta,
            "c": res.upper_bound.c,
            "guesses": list(res.search_set),
            "candidates_per_guess": list(res.candidates_per_guess),
            "candidates_evaluated": res.candidates_evaluated,
            "tree_nodes": list(res.tree_nodes),
            "truncated": res.truncated,
        },
    }
    if extra:
        report["within_node_spread"] = extra
    if out.owners is not None:
        report["owners"] = np.asarray(out.owners, dtype=int).tolist()
    if "sigma" in out.info:
        report["sigma"] = _external(out.info["sigma"])
    if args.oracle:
        opt = brute_force_optimum(P, args.k, spec, objective)
        best = opt.cost + extra
        report["oracle"] = {"objective": best, "ratio": _ratio(report["objective"], best)}
    best = report["oracle"]["objective"] if args.oracle else None
    # an infeasible repeat has objective None
    report["runs"] = [{"seed": rs, "objective": obj + extra if math.isfinite(obj) else None,
                       "ratio": _ratio(obj + extra, best)}
                      for rs, obj, _ in res.runs]
    if args.table:
        write_table(args.table, [(rs, _ratio(obj + extra, best), secs) for rs, obj, secs in res.runs])
    report["wall_clock_s"] = time.perf_counter() - t0
    return report, EXIT_OK


def cmd_solve(args) -> int:
    report, code = run(args)
    _write(report, args.output)
    return code


def cmd_oracle(args) -> int:
    ds = load_dataset(args.input)
    spec = spec_from_args(args)
    P, objective, extra = _instance(ds, spec, args.objective)
    t0 = time.perf_counter()
    opt = brute_force_optimum(P, args.k, spec, objective)
    if not math.isfinite(opt.cost):
        _write({"feasible": False, "reason": "no labeling satisfies the constraint"}, args.output)
        return EXIT_INFEASIBLE
    report = {"feasible": True, "objective": opt.cost + extra, "centers": _floats(opt.centers),
              "assignment": _external(opt.labels),
              "wall_clock_s": time.perf_counter() - t0}
    if opt.owners is not None:
        report["owners"] = np.asarray(opt.owners, dtype=int).tolist()
    _write(report, args.output)
    return EXIT_OK


def generate(n: int, k: int, dim: int, sep: float, seed: int, colors: str = "none",
             n_colors: int = 2, spread: float = 1.0) -> dict:
    """Gaussian blobs around k centers placed at distance about ``sep``."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k, dim))
    centers *= sep / max(np.linalg.norm(centers, axis=1).max(), 1e-12)
    truth = np.arange(n) % k
    pts = centers[truth] + spread * rng.normal(size=(n, dim))
    out = []
    for i in range(n):
        rec = {"coords": pts[i].tolist()}
        if colors == "random":
            rec["color"] = f"c{int(rng.integers(n_colors))}"
        elif colors == "round_robin":
            rec["color"] = f"c{i % n_colors}"
        elif colors == "by_cluster":
            rec["color"] = f"c{truth[i] % n_colors}"
        out.append(rec)
    return {"dim": dim, "points": out, "centers": centers.tolist(), "truth": _external(truth)}


def cmd_gen(args) -> int:
    _write(generate(args.n, args.k, args.dim, args.sep, args.seed, args.colors, args.n_colors, args.spread),
           args.output)
    return EXIT_OK


def cmd_validate(args) -> int:
    ds = load_dataset(args.input)
    spec = spec_from_args(args)
    P, _, _ = _instance(ds, spec, "means")
    with open(args.assignment, encoding="utf-8") as fh:
        doc = json.load(fh)
    labels = np.asarray(doc["assignment"], dtype=int) - 1
    k = args.k if args.k is not None else (len(doc["centers"]) if "centers" in doc else int(labels.max()) + 1)
    ok = validate(P, labels, k, spec, owners=doc.get("owners"))
    _write({"valid": bool(ok)}, args.output)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _constraint_flags(p: argparse.ArgumentParser):
    p.add_argument("--constraint", default="unconstrained", choices=KINDS)
    p.add_argument("--r", type=int, help="cluster size bound (r_gather, r_capacity)")
    p.add_argument("--l", type=int, help="diversity / fault tolerance parameter")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--E1", type=float, default=1.0)
    p.add_argument("--E2", type=float, default=1.0)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cckit", description="Constrained k-means / k-median clustering")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="cluster a dataset under a constraint")
    p.add_argument("--input", required=True)
    p.add_argument("--objective", default="means", choices=("means", "median"))
    _constraint_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--preset", default="practical", choices=("practical", "faithful"))
    p.add_argument("--force", action="store_true", help="run the faithful preset even if s is out of reach")
    p.add_argument("--s", type=int, default=8, help="sample size (practical preset)")
    p.add_argument("--beam", type=int, help="children kept per node (0 keeps all)")
    p.add_argument("--oracle", action="store_true", help="compare with the brute force optimum")
    p.add_argument("--output")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--table", help="also write a (seed, ratio, runtime_s) CSV, one row per repeat")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact optimum by enumeration (tiny n)")
    p.add_argument("--input", required=True)
    p.add_argument("--objective", default="means", choices=("means", "median"))
    _constraint_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen", help="synthetic Gaussian blobs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--sep", type=float, default=5.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--colors", default="none", choices=("none", "random", "round_robin", "by_cluster"))
    p.add_argument("--n-colors", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="check an assignment against a constraint")
    p.add_argument("--input", required=True)
    p.add_argument("--assignment", required=True, help="JSON with an 'assignment' list (a solve report works)")
    _constraint_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("CCKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, ConstraintError, GeometryError, SamplingError, PneError, OracleRefused,
            OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
