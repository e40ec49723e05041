"""Exhaustive solvers for tiny instances; used only to check everything else."""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .geometry import PointSet, as_pointset, pairwise_dist
from .partitions import ConstraintSpec, evaluate, validate
from .sampling import weiszfeld_median

MAX_N_OPTIMUM = 12
MAX_N_PARTITION = 10

# recent subset-cost tables, keyed by the point data
_SUBSET_MEMO: OrderedDict = OrderedDict()
_MEMO_SIZE = 8


class OracleRefused(ValueError):
    pass


@dataclass
class OracleResult:
    cost: float
    labels: np.ndarray
    centers: np.ndarray
    owners: np.ndarray | None = None


def all_labelings(n: int, k: int) -> np.ndarray:
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(-1, n)


def _feasible_mask(P: PointSet, L: np.ndarray, k: int, spec: ConstraintSpec) -> np.ndarray:
    """Constraint predicate for every labeling row of ``L`` (point-level
    kinds only)."""
    kind = spec.kind
    sizes = np.stack([(L == j).sum(axis=1) for j in range(k)], axis=1)
    if kind == "r_gather":
        return np.all(sizes >= spec.r, axis=1)
    if kind == "r_capacity":
        return np.all(sizes <= spec.r, axis=1)
    if kind in ("l_diversity", "distinct_color", "chromatic"):
        ok = np.ones(len(L), dtype=bool)
        for c in np.unique(P.colors):
            of_c = P.colors == c
            for j in range(k):
                cnt = ((L == j) & of_c[None, :]).sum(axis=1)
                if kind == "l_diversity":
                    ok &= cnt * spec.l <= sizes[:, j]
                else:
                    ok &= cnt <= 1
        if kind == "distinct_color":
            ok &= np.all(sizes >= spec.l, axis=1)
        return ok
    if kind == "probabilistic_median" and P.groups is not None:
        ok = np.ones(len(L), dtype=bool)
        for g in np.unique(P.groups):
            idx = np.flatnonzero(P.groups == g)
            ok &= np.all(L[:, idx] == L[:, idx[:1]], axis=1)
        return ok
    return np.ones(len(L), dtype=bool)


def _semi_best(P: PointSet, L: np.ndarray, geo: np.ndarray, k: int, spec: ConstraintSpec):
    prior = np.asarray(P.prior_labels, dtype=int)
    best_val = np.full(len(L), math.inf)
    best_sigma = np.zeros((len(L), k), dtype=int)
    for sigma in itertools.permutations(range(k)):
        sig = np.array(sigma)
        mismatch = (sig[L] != prior[None, :]).sum(axis=1)
        val = spec.alpha * geo / spec.E1 + (1 - spec.alpha) * mismatch / spec.E2
        better = val < best_val
        best_val[better] = val[better]
        best_sigma[better] = sig
    return best_val, best_sigma


def _fault_tolerant_choices(need: np.ndarray, k: int):
    per_point = [list(itertools.combinations(range(k), int(m))) for m in need]
    return itertools.product(*per_point)


def brute_force_partition(P, centers, spec: ConstraintSpec, objective: str = "means") -> OracleResult:
    """Cheapest constraint-feasible assignment to fixed centers, by trying
    every labeling."""
    P = as_pointset(P)
    cs = np.atleast_2d(np.asarray(centers, dtype=float))
    k = len(cs)
    n = P.n
    if n > MAX_N_PARTITION:
        raise OracleRefused(f"brute force partition refuses n={n} > {MAX_N_PARTITION}")
    kind = spec.kind
    if kind == "probabilistic_median":
        objective = "median"
    D = pairwise_dist(P.coords, cs, objective) * P.w[:, None]
    W = P.w.sum()
    if kind == "fault_tolerant":
        need = spec.copies(n)
        owners = np.repeat(np.arange(n), need)
        best, best_labels = math.inf, None
        for choice in _fault_tolerant_choices(need, k):
            total = sum(D[i, list(c)].sum() for i, c in enumerate(choice))
            if total < best:
                best, best_labels = total, np.concatenate([np.array(c, dtype=int) for c in choice])
        if best_labels is None:
            raise OracleRefused("no feasible fault tolerant assignment")
        return OracleResult(best / W, best_labels, cs, owners)
    L = all_labelings(n, k)
    mask = _feasible_mask(P, L, k, spec)
    if not mask.any():
        return OracleResult(math.inf, np.full(n, -1), cs)
    L = L[mask]
    geo = D[np.arange(n)[None, :], L].sum(axis=1) / W
    if kind == "semi_supervised":
        vals, _ = _semi_best(P, L, geo, k, spec)
    else:
        vals = geo
    best = int(np.argmin(vals))
    return OracleResult(float(vals[best]), L[best].astype(int), cs)


def _subset_costs(P: PointSet, objective: str, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Optimal 1-center cost (as a sum) and center for every point subset,
    indexed by bitmask."""
    key = (P.coords.tobytes(), P.coords.shape, P.w.tobytes(), objective, tol)
    if key in _SUBSET_MEMO:
        _SUBSET_MEMO.move_to_end(key)
        return _SUBSET_MEMO[key]
    n, d = P.n, P.dim
    x, w = P.coords, P.w
    costs = np.zeros(2**n)
    centers = np.zeros((2**n, d))
    for mask in range(1, 2**n):
        idx = [i for i in range(n) if mask >> i & 1]
        if objective == "means":
            sw = w[idx].sum()
            if sw == 0:
                centers[mask] = x[idx].mean(axis=0)
                continue
            c = (w[idx, None] * x[idx]).sum(axis=0) / sw
            costs[mask] = float((w[idx] * ((x[idx] - c) ** 2).sum(axis=1)).sum())
        else:
            c = weiszfeld_median(P, idx, tol=tol)
            costs[mask] = float((w[idx] * np.linalg.norm(x[idx] - c, axis=1)).sum())
        centers[mask] = c
    costs.flags.writeable = False
    centers.flags.writeable = False
    _SUBSET_MEMO[key] = (costs, centers)
    if len(_SUBSET_MEMO) > _MEMO_SIZE:
        _SUBSET_MEMO.popitem(last=False)
    return costs, centers


def brute_force_optimum(P, k: int, spec: ConstraintSpec = ConstraintSpec(), objective: str = "means",
                        median_tol: float = 1e-10) -> OracleResult:
    """Optimal constrained clustering with free centers: every labeling
    (empty clusters allowed), best center per cluster (mean, or Weiszfeld
    point for medians)."""
    P = as_pointset(P)
    n = P.n
    if n > MAX_N_OPTIMUM:
        raise OracleRefused(f"brute force optimum refuses n={n} > {MAX_N_OPTIMUM}")
    if spec.kind == "probabilistic_median":
        objective = "median"
    costs, cents = _subset_costs(P, objective, median_tol)
    W = P.w.sum()
    bits = 1 << np.arange(n)
    if spec.kind == "fault_tolerant":
        need = spec.copies(n)
        if need.max() > k:
            raise OracleRefused("fault tolerance l exceeds k")
        owners = np.repeat(np.arange(n), need)
        best, best_choice = math.inf, None
        for choice in _fault_tolerant_choices(need, k):
            masks = [0] * k
            for i, c in enumerate(choice):
                for j in c:
                    masks[j] |= 1 << i
            total = sum(costs[m] for m in masks)
            if total < best - 1e-15:
                best, best_choice = total, (choice, masks)
        choice, masks = best_choice
        labels = np.concatenate([np.array(c, dtype=int) for c in choice])
        return OracleResult(best / W, labels, cents[masks], owners)
    L = all_labelings(n, k)
    L = L[_feasible_mask(P, L, k, spec)]
    if len(L) == 0:
        return OracleResult(math.inf, np.full(n, -1), np.zeros((k, P.dim)))
    masks = np.stack([((L == j) * bits).sum(axis=1) for j in range(k)], axis=1)
    total = costs[masks].sum(axis=1) / W
    if spec.kind == "semi_supervised":
        total, _ = _semi_best(P, L, total, k, spec)
    best = int(np.argmin(total))
    return OracleResult(float(total[best]), L[best].astype(int), cents[masks[best]])


def check_witness(P, result: OracleResult, spec: ConstraintSpec, objective: str = "means",
                  rtol: float = 1e-9) -> bool:
    k = len(result.centers)
    if not validate(P, result.labels, k, spec, owners=result.owners):
        return False
    again = evaluate(P, result.labels, result.centers, spec, objective, owners=result.owners)
    return abs(again - result.cost) <= rtol * max(1.0, abs(result.cost))
