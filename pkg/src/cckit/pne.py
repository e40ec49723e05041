"""Peeling-and-Enclosing candidate generation and the selection driver.

A tree of height k is grown for every guess of the optimal cost. Each
level peels the clusters found so far with balls of guessed radius, samples
what is left, and encloses the next center in grids built on the known
centers plus sample means (means) or on flats through them (medians).
Every root-to-leaf path is a candidate k-tuple; the constrained Partition
solver scores each tuple and the cheapest wins.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    PointSet, affine_span, as_pointset, cost, dedupe_rows, grid_union_points, pairwise_dist,
    simplex_grids, weaker_simplex_grids,
)
from .partitions import ConstraintSpec, PartitionOutcome, partition
from .sampling import SampleParams, make_rng, sample_uniform, subset_means, weiszfeld_median

log = logging.getLogger("cckit")

MAX_TUPLES = 10**6


class PneError(RuntimeError):
    pass


class InfeasibleError(PneError):
    pass


@dataclass(frozen=True)
class PneParams:
    """Knobs of the candidate search.

    ``grid_eps`` is the mesh parameter handed to the grid builders
    (faithful: eps**2/4 for means); ``max_grid_points`` coarsens any single
    grid that would exceed it (practical preset only); ``beam_width`` keeps
    at most that many children per node.
    """

    k: int
    eps: float = 0.5
    sample: SampleParams = SampleParams()
    grid_eps: Optional[float] = None
    search_eps: Optional[float] = None
    max_tree_nodes: int = 200_000
    beam_width: Optional[int] = None
    max_grid_points: Optional[int] = 64
    lam: float = 20.0
    tuple_cap: int = MAX_TUPLES

    def __post_init__(self):
        if self.k < 1:
            raise PneError("k must be >= 1")
        if not 0 < self.eps < 1:
            raise PneError("eps must lie in (0, 1)")
        if self.sample.preset == "faithful":
            if self.k >= 2 and not self.eps < 1 / (4 * self.k**2):
                raise PneError("faithful mode needs eps < 1/(4k^2)")

    @property
    def faithful(self) -> bool:
        return self.sample.preset == "faithful"

    def mesh_eps(self, track: str) -> float:
        if self.grid_eps is not None:
            return self.grid_eps
        if track == "means":
            return self.eps**2 / 4 if self.faithful else self.eps
        # weaker simplex grids need eps < 1/5
        return min(self.eps, 0.19)

    @property
    def h_eps(self) -> float:
        return self.eps if self.search_eps is None else self.search_eps


@dataclass
class UpperBound:
    Delta: float
    c: float
    centers: np.ndarray = None
    omega: float = math.nan
    best_tuple: np.ndarray = None
    best_outcome: PartitionOutcome = None
    tuples_tried: int = 0


@dataclass
class PneTree:
    """Flat node arrays; node 0 is the root and carries no point."""

    parent: list = field(default_factory=lambda: [-1])
    height: list = field(default_factory=lambda: [0])
    points: list = field(default_factory=lambda: [None])
    truncated: bool = False

    def add(self, parent: int, point: np.ndarray) -> int:
        self.parent.append(parent)
        self.height.append(self.height[parent] + 1)
        self.points.append(np.asarray(point, dtype=float))
        return len(self.parent) - 1

    @property
    def size(self) -> int:
        return len(self.parent)

    def path(self, node: int) -> list:
        out = []
        while node > 0:
            out.append(self.points[node])
            node = self.parent[node]
        return out[::-1]

    def leaves(self, k: int) -> list[int]:
        return [v for v in range(self.size) if self.height[v] == k]

    def tuples(self, k: int) -> list[np.ndarray]:
        return [np.array(self.path(v)) for v in self.leaves(k)]


@dataclass
class CandidateTuple:
    centers: np.ndarray
    provenance: tuple


def _canon(x: float) -> float:
    """Round to 40 mantissa bits; exact under power-of-two rescaling."""
    if x == 0 or not math.isfinite(x):
        return x
    m, e = math.frexp(x)
    return math.ldexp(round(m * 2**40) / 2**40, e)


# ---------------------------------------------------------------- estimation

def _seed_centers(P: PointSet, k: int, objective: str, rng) -> np.ndarray:
    """Distance-proportional seeding (squared distances for means)."""
    x, w = P.coords, P.w
    first = sample_uniform(np.arange(P.n), 1, rng, p=w)[0]
    centers = [x[first]]
    for _ in range(1, k):
        d = pairwise_dist(x, np.array(centers), objective).min(axis=1) * w
        if d.sum() <= 0:
            centers.append(x[sample_uniform(np.arange(P.n), 1, rng, p=w)[0]])
        else:
            centers.append(x[sample_uniform(np.arange(P.n), 1, rng, p=d)[0]])
    return np.array(centers)


def unconstrained_heuristic(P, k: int, objective: str, rng, max_iter: int = 100,
                            restarts: int = 5) -> tuple[np.ndarray, float]:
    """Seeding plus local improvement (centroid or Weiszfeld updates);
    the best of a few restarts."""
    P = as_pointset(P)
    best_c, best_val = None, math.inf
    for _ in range(restarts):
        c = _seed_centers(P, k, objective, rng)
        val = math.inf
        for _ in range(max_iter):
            labels = np.argmin(pairwise_dist(P.coords, c, objective), axis=1)
            new = c.copy()
            for j in range(k):
                idx = np.flatnonzero(labels == j)
                if len(idx) and P.w[idx].sum() > 0:
                    if objective == "means":
                        new[j] = (P.w[idx, None] * P.coords[idx]).sum(axis=0) / P.w[idx].sum()
                    else:
                        new[j] = weiszfeld_median(P, idx, tol=1e-9, max_iter=1000)
            new_val = cost(P, np.argmin(pairwise_dist(P.coords, new, objective), axis=1), new, objective)
            if new_val >= val * (1 - 1e-15):
                break
            c, val = new, new_val
        labels = np.argmin(pairwise_dist(P.coords, c, objective), axis=1)
        val = cost(P, labels, c, objective)
        if val < best_val:
            best_c, best_val = c, val
    return best_c, best_val


def approx_ratio_constant(objective: str, lam: float) -> float:
    return 18 * lam + 16 if objective == "means" else 3 * lam + 2


def estimate_upper_bound(P, k: int, spec: ConstraintSpec, objective: str, rng,
                         lam: float = 20.0, centers=None, tuple_cap: int = MAX_TUPLES,
                         partition_solver=partition) -> UpperBound:
    """Try every k-tuple drawn from unconstrained centers C under the
    constraint; the best feasible objective is Delta, and the factor c
    bounds how far it can be from the constrained optimum."""
    P = as_pointset(P)
    if centers is None:
        centers, omega = unconstrained_heuristic(P, k, objective, rng)
    else:
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        omega = cost(P, np.argmin(pairwise_dist(P.coords, centers, objective), axis=1), centers, objective)
    m = len(centers)
    total = m**k
    if total <= tuple_cap:
        combos = itertools.product(range(m), repeat=k)
    else:
        combos = (tuple(rng.integers(0, m, size=k)) for _ in range(tuple_cap))
    best, best_t, best_out, tried = math.inf, None, None, 0
    for combo in combos:
        tup = centers[list(combo)]
        out = partition_solver(P, tup, spec, objective)
        tried += 1
        if out.feasible and out.objective < best:
            best, best_t, best_out = out.objective, tup, out
    if best_t is None:
        raise InfeasibleError("constraint infeasible for all center tuples")
    return UpperBound(best, approx_ratio_constant(objective, lam), centers, omega, best_t, best_out, tried)


def objective_search_set(Delta: float, c: float, eps: float) -> list[float]:
    """Geometric grid Delta/c * (1+eps)^i reaching Delta."""
    if c < 1:
        raise PneError("c must be >= 1")
    steps = math.ceil(math.log(c) / math.log1p(eps) - 1e-12) if c > 1 else 0
    return [_canon(Delta / c * (1 + eps) ** i) for i in range(steps + 1)]


def radius_candidates(j: int, delta: float, eps: float, n: int, track: str = "means",
                      t_max: Optional[int] = None) -> list[float]:
    """Guessed peeling radii.

    means:  (1 + l eps/2) / (2 (1+eps)) * j * 2^(t/2) * sqrt(eps) * delta
    median: (1 + l eps/2) / (2 (1+eps)) * j * 2^t * eps * mu
    for t = 0..ceil(log2 n) (or ``t_max``), l = 0..ceil(4 + 2/eps).
    """
    if t_max is None:
        t_max = math.ceil(math.log2(max(n, 2)))
    l_max = math.ceil(4 + 2 / eps)
    out = set()
    for t in range(t_max + 1):
        scale = 2 ** (t / 2) * math.sqrt(eps) if track == "means" else 2**t * eps
        for l in range(l_max + 1):
            out.add((1 + l * eps / 2) / (2 * (1 + eps)) * j * scale * delta)
    return sorted(out)


# ---------------------------------------------------------------- trees

def _peel_groups(P: PointSet, C: np.ndarray, radii) -> list[tuple[float, np.ndarray]]:
    """Distinct sets of points left outside the balls of radius r around C,
    each with the tightest radius that peels the same points."""
    near = np.sqrt(pairwise_dist(P.coords, C, "means").min(axis=1))
    groups = {}
    for r in radii:
        inside = near <= r
        key = inside.tobytes()
        if key not in groups:
            tight = float(near[inside].max()) if inside.any() else 0.0
            groups[key] = (tight, np.flatnonzero(~inside))
    return sorted(groups.values(), key=lambda g: (g[0], len(g[1])))


def _node_rng(seed: int, tree_key: tuple, P: PointSet, outside: np.ndarray):
    mask = np.zeros(P.n, dtype=bool)
    mask[outside] = True
    bits = int.from_bytes(np.packbits(mask).tobytes() or b"\0", "little")
    words = [(bits >> (32 * i)) & 0xFFFFFFFF for i in range(max(1, (P.n + 31) // 32))]
    return make_rng(seed, len(tree_key), *tree_key, *words)


def _coarsen(grids, cap: Optional[int]):
    if cap is None:
        return grids
    out = []
    for g in grids:
        m = g.flat.dim
        if g.radius > 0 and m > 0 and g.bound() > cap:
            per_axis = max(1, int(cap ** (1.0 / m)) // 2)
            g = type(g)(g.center, g.radius, g.radius / per_axis, g.flat)
        out.append(g)
    return out


class _Builder:
    def __init__(self, P: PointSet, params: PneParams, seed: int, track: str):
        self.P = P
        self.params = params
        self.seed = seed
        self.track = track
        self.cache: dict = {}
        w = P.w
        self.t_max = None
        if w.min() > 0 and not np.allclose(w, w[0]):
            self.t_max = math.ceil(math.log2(max(w.sum() / w.min(), 2)))

    def sample(self, universe: np.ndarray, key: tuple) -> np.ndarray:
        rng = _node_rng(self.seed, key, self.P, universe)
        idx = sample_uniform(universe, self.params.sample.s, rng, p=self.P.w[universe])
        return idx

    def select(self, cands: np.ndarray, anchors: np.ndarray) -> np.ndarray:
        """Beam: keep the candidates closest to the node's sampled points,
        scored by the mean squared distance to their nearest quarter of the
        sample so that lone sample points do not crowd out subset means."""
        B = self.params.beam_width
        if B is None or len(cands) <= B:
            return cands
        q = max(1, math.ceil(len(anchors) / 4))
        step = max(1, 2**22 // (len(anchors) * cands.shape[1]))
        d = np.concatenate([np.sort(pairwise_dist(cands[i:i + step], anchors, "means"), axis=1)[:, :q].mean(axis=1)
                            for i in range(0, len(cands), step)])
        order = np.argsort(d, kind="stable")
        return cands[np.sort(order[:B])]

    def children(self, C: np.ndarray, key: tuple, scale: float) -> np.ndarray:
        if len(C) == 0:
            ck = (key, None if self.track == "means" else _canon(scale))
            if ck not in self.cache:
                self.cache[ck] = self._root(key, scale)
            return self.cache[ck]
        track = self.track
        j = len(C)
        radii = radius_candidates(j, scale, self.params.eps, self.P.n, track, self.t_max)
        blocks, anchors = [], [C]
        for tight, outside in _peel_groups(self.P, C, radii):
            ck = (key, _canon(tight), outside.tobytes())
            if ck not in self.cache:
                self.cache[ck] = (self._means_group if track == "means" else self._median_group)(C, key, tight, outside)
            pts, anc = self.cache[ck]
            blocks.append(pts)
            anchors.append(anc)
        if track == "means":
            ck = (key, "simplex")
            if ck not in self.cache:
                self.cache[ck] = grid_union_points(
                    _coarsen(simplex_grids(C, self.params.mesh_eps("means")), self.params.max_grid_points))
            blocks.append(self.cache[ck])
        return self.select(dedupe_rows(np.concatenate(blocks)), np.concatenate(anchors))

    def _root(self, key: tuple, scale: float) -> np.ndarray:
        P, prm = self.P, self.params
        idx = self.sample(np.arange(P.n), key)
        if self.track == "means":
            rng = _node_rng(self.seed, key + (1,), P, np.arange(P.n))
            pts = subset_means(P.coords[idx], prm.sample.subset_cap, rng, weights=P.w[idx])
            return self.select(dedupe_rows(pts), P.coords[idx])
        S = np.unique(P.coords[idx], axis=0)
        flat = affine_span(S)
        radii = radius_candidates(1, scale, prm.eps, P.n, "median", self.t_max)
        blocks = [S]
        for L in sorted({_canon(r) for r in radii}):
            blocks.append(grid_union_points(_coarsen(
                weaker_simplex_grids(S, L, prm.mesh_eps("median"), flat), prm.max_grid_points)))
        return self.select(dedupe_rows(np.concatenate(blocks)), S)

    def _means_group(self, C, key, tight, outside):
        P, prm = self.P, self.params
        if len(outside) == 0:
            return np.zeros((0, P.dim)), np.zeros((0, P.dim))
        idx = self.sample(outside, key)
        rng = _node_rng(self.seed, key + (1,), P, outside)
        anc = P.coords[idx]
        Pi = self.select(dedupe_rows(
            subset_means(anc, prm.sample.subset_cap, rng, weights=P.w[idx])), anc)
        geps = prm.mesh_eps("means")
        grids = []
        for pi in Pi:
            grids += simplex_grids(np.vstack([C, pi]), geps, require_last=True)
        return grid_union_points(_coarsen(grids, prm.max_grid_points)), anc

    def _median_group(self, C, key, tight, outside):
        P, prm = self.P, self.params
        geps, cap = prm.mesh_eps("median"), prm.max_grid_points
        blocks = [grid_union_points(_coarsen(weaker_simplex_grids(C, tight, geps, affine_span(C)), cap))]
        if len(outside) == 0:
            return blocks[0], np.zeros((0, P.dim))
        idx = self.sample(outside, key)
        S = np.unique(P.coords[idx], axis=0)
        grown = np.vstack([C, S])
        blocks.append(grid_union_points(_coarsen(
            weaker_simplex_grids(grown, tight, geps, affine_span(grown)), cap)))
        return np.concatenate(blocks), S


def _build(P, params: PneParams, scale: float, seed: int, track: str,
           builder: Optional[_Builder] = None) -> PneTree:
    P = as_pointset(P)
    builder = builder or _Builder(P, params, seed, track)
    tree = PneTree()
    stack = [(0, ())]
    while stack:
        node, key = stack.pop()
        h = tree.height[node]
        if h == params.k:
            continue
        C = np.array(tree.path(node)).reshape(h, P.dim)
        kids = builder.children(C, key, scale)
        if tree.size + len(kids) > params.max_tree_nodes:
            room = params.max_tree_nodes - tree.size
            tree.truncated = True
            if room <= 0:
                if h == 0:
                    raise PneError("node cap exhausted before the first level")
                continue
            kids = kids[:room]
        first = tree.size
        for i, p in enumerate(kids):
            tree.add(node, p)
        for i in range(len(kids) - 1, -1, -1):
            stack.append((first + i, key + (i,)))
    if tree.size == 1:
        raise PneError("tree has no children at height 1")
    return tree


def build_tree_means(P, params: PneParams, delta: float, seed: int = 0, builder=None) -> PneTree:
    """Grow the tree for one guess ``delta`` of the optimal RMS radius."""
    return _build(P, params, delta, seed, "means", builder)


def build_tree_medians(P, params: PneParams, mu: float, seed: int = 0, builder=None) -> PneTree:
    """Grow the tree for one guess ``mu`` of the optimal average distance."""
    return _build(P, params, mu, seed, "median", builder)


# ---------------------------------------------------------------- driver

@dataclass
class SolveResult:
    tuple: CandidateTuple
    outcome: PartitionOutcome
    upper_bound: UpperBound
    search_set: list
    candidates_per_guess: list
    candidates_evaluated: int
    tree_nodes: list
    truncated: bool
    # (seed, objective, seconds) for each repeat
    runs: list = field(default_factory=list)


def _evaluate_chunk(args):
    P, spec, objective, tuples = args
    return [partition(P, t, spec, objective) for t in tuples]


def solve(P, k: int, eps: float = 0.5, spec: ConstraintSpec = ConstraintSpec(),
          objective: str = "means", seed: int = 0, params: Optional[PneParams] = None,
          repeats: int = 1, jobs: int = 1, ub_centers=None) -> SolveResult:
    """Best candidate tuple over all trees, scored by the constrained
    Partition solver; ties go to the earliest candidate."""
    P = as_pointset(P)
    if spec.kind == "probabilistic_median":
        objective = "median"
    params = params or PneParams(k=k, eps=eps)
    if params.k != k:
        raise PneError("params.k disagrees with k")
    best, runs = None, []
    for rep in range(repeats):
        rep_seed = int(make_rng(seed, rep).integers(2**63))
        t0 = time.perf_counter()
        try:
            res = _solve_once(P, spec, objective, rep_seed, params, jobs, ub_centers)
        except InfeasibleError:
            if rep == repeats - 1 and best is None:
                raise
            runs.append((rep_seed, math.inf, time.perf_counter() - t0))
            continue
        runs.append((rep_seed, res.outcome.objective, time.perf_counter() - t0))
        if best is None or res.outcome.objective < best.outcome.objective:
            best = res
    best.runs = runs
    return best


def _solve_once(P, spec, objective, seed, params, jobs, ub_centers) -> SolveResult:
    k = params.k
    track = "means" if objective == "means" else "median"
    ub = estimate_upper_bound(P, k, spec, objective, make_rng(seed, 0), params.lam, ub_centers,
                              params.tuple_cap)
    H = objective_search_set(ub.Delta, ub.c, params.h_eps)
    builder = _Builder(P, params, int(seed), track)
    seen: dict[bytes, int] = {}
    ordered: list[CandidateTuple] = [CandidateTuple(ub.best_tuple, ("upper_bound", 0, 0))]
    seen[ub.best_tuple.tobytes()] = 0
    per_guess, node_counts, truncated = [], [], False
    for i, h in enumerate(H):
        scale = math.sqrt(h) if track == "means" else h
        if scale <= 0:
            per_guess.append(0)
            node_counts.append(0)
            continue
        tree = _build(P, params, scale, int(seed), track, builder)
        truncated |= tree.truncated
        node_counts.append(tree.size)
        leaves = tree.leaves(k)
        per_guess.append(len(leaves))
        for leaf_no, v in enumerate(leaves):
            t = np.array(tree.path(v))
            key = t.tobytes()
            if key not in seen:
                seen[key] = len(ordered)
                ordered.append(CandidateTuple(t, ("tree", i, leaf_no)))
    tuples = [c.centers for c in ordered]
    if jobs > 1 and len(tuples) > 1:
        chunks = [tuples[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_evaluate_chunk, [(P, spec, objective, c) for c in chunks]))
        outcomes = [None] * len(tuples)
        for r, part in enumerate(parts):
            for i, out in enumerate(part):
                outcomes[r + i * jobs] = out
    else:
        outcomes = _evaluate_chunk((P, spec, objective, tuples))
    best_i = None
    for i, out in enumerate(outcomes):
        if out.feasible and (best_i is None or out.objective < outcomes[best_i].objective):
            best_i = i
    if best_i is None:
        raise InfeasibleError("every candidate tuple is infeasible")
    log.info("evaluated %d candidate tuples over %d guesses", len(tuples), len(H))
    return SolveResult(ordered[best_i], outcomes[best_i], ub, H, per_guess, len(tuples),
                       node_counts, truncated)
