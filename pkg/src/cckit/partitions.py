"""Partition step: for fixed centers, the cheapest assignment that satisfies
a clustering constraint.

Labels are 0-based internally. Objectives are averages over the total point
weight; flow costs are sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .flow import FlowNetwork, hungarian, min_cost_circulation
from .geometry import PointSet, as_pointset, cost, pairwise_dist

KINDS = (
    "unconstrained", "r_gather", "r_capacity", "l_diversity", "distinct_color",
    "chromatic", "fault_tolerant", "semi_supervised", "probabilistic_median",
    "uncertain_means",
)

GUESS_CAP = 100_000


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str = "unconstrained"
    r: Optional[int] = None
    l: Optional[int] = None
    l_per_point: Optional[tuple] = None
    alpha: float = 1.0
    E1: float = 1.0
    E2: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConstraintError(f"unknown constraint kind {self.kind!r}")
        if self.kind in ("r_gather", "r_capacity") and (self.r is None or self.r < 1):
            raise ConstraintError(f"{self.kind} needs r >= 1")
        if self.kind == "l_diversity" and (self.l is None or self.l <= 1):
            raise ConstraintError("l_diversity needs l > 1")
        if self.kind == "distinct_color" and (self.l is None or self.l < 1):
            raise ConstraintError("distinct_color needs l >= 1")
        if self.kind == "fault_tolerant":
            if self.l_per_point is None and (self.l is None or self.l < 1):
                raise ConstraintError("fault_tolerant needs l >= 1 or per-point l values")
            if self.l_per_point is not None and min(self.l_per_point) < 1:
                raise ConstraintError("per-point l values must be >= 1")
        if self.kind == "semi_supervised":
            if not 0.0 <= self.alpha <= 1.0:
                raise ConstraintError("alpha must lie in [0, 1]")
            if not (self.E1 > 0 and self.E2 > 0):
                raise ConstraintError("E1 and E2 must be positive")

    def copies(self, n: int) -> np.ndarray:
        """Number of centers serving each point (fault tolerant only)."""
        if self.l_per_point is not None:
            out = np.asarray(self.l_per_point, dtype=int)
            if out.shape != (n,):
                raise ConstraintError("need one l value per point")
            return out
        return np.full(n, self.l, dtype=int)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        for name in ("r", "l", "l_per_point"):
            if getattr(self, name) is not None:
                out[name] = list(getattr(self, name)) if name == "l_per_point" else getattr(self, name)
        if self.kind == "semi_supervised":
            out.update(alpha=self.alpha, E1=self.E1, E2=self.E2)
        return out


@dataclass
class PartitionOutcome:
    """``assignment[i]`` is the cluster of row i; rows are points, or point
    copies listed in ``owners`` for fault tolerant clustering."""

    assignment: np.ndarray
    objective: float
    feasible: bool
    owners: Optional[np.ndarray] = None
    exact: bool = True
    info: dict = field(default_factory=dict)


def infeasible(n: int, reason: str) -> PartitionOutcome:
    return PartitionOutcome(np.full(n, -1, dtype=int), math.inf, False, info={"reason": reason})


def _weighted_dist(P: PointSet, centers, objective: str) -> np.ndarray:
    return pairwise_dist(P.coords, np.atleast_2d(centers), objective) * P.w[:, None]


def semi_supervised_objective(P: PointSet, labels, centers, spec: ConstraintSpec,
                              sigma=None, objective: str = "means") -> tuple[float, np.ndarray]:
    """alpha*Cost/E1 + (1-alpha)*dist/E2 with Cost the average k-means cost
    and dist the number of points whose cluster j is not matched to their
    prior cluster sigma(j). Without ``sigma`` the best matching is used."""
    labels = np.asarray(labels, dtype=int)
    prior = np.asarray(P.prior_labels, dtype=int)
    k = len(np.atleast_2d(centers))
    geo = cost(P, labels, centers, objective)
    if sigma is None:
        agree = np.zeros((k, k))
        np.add.at(agree, (labels, prior), 1.0)
        sigma, _ = hungarian(-agree)
    sigma = np.asarray(sigma, dtype=int)
    mismatch = int(np.sum(sigma[labels] != prior))
    return spec.alpha * geo / spec.E1 + (1 - spec.alpha) * mismatch / spec.E2, sigma


def evaluate(P, labels, centers, spec: ConstraintSpec, objective: str = "means", owners=None) -> float:
    """Objective of a given assignment, recomputed from scratch."""
    P = as_pointset(P)
    if spec.kind == "semi_supervised":
        return semi_supervised_objective(P, labels, centers, spec, objective=objective)[0]
    return cost(P, labels, centers, objective, owners=owners)


def validate(P, labels, k: int, spec: ConstraintSpec, owners=None) -> bool:
    """Does the assignment satisfy the constraint predicate exactly?"""
    P = as_pointset(P)
    labels = np.asarray(labels, dtype=int)
    n = P.n
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        return False
    kind = spec.kind
    if kind == "fault_tolerant":
        if owners is None:
            return False
        owners = np.asarray(owners, dtype=int)
        need = spec.copies(n)
        for i in range(n):
            mine = labels[owners == i]
            if len(mine) != need[i] or len(set(mine.tolist())) != len(mine):
                return False
        return True
    if labels.shape != (n,):
        return False
    sizes = np.bincount(labels, minlength=k)
    if kind == "r_gather":
        return bool(np.all(sizes >= spec.r))
    if kind == "r_capacity":
        return bool(np.all(sizes <= spec.r))
    if kind in ("l_diversity", "distinct_color", "chromatic"):
        if P.colors is None:
            return False
        for j in range(k):
            members = P.colors[labels == j]
            if len(members) == 0:
                if kind == "distinct_color":
                    return False
                continue
            _, counts = np.unique(members, return_counts=True)
            if kind == "l_diversity" and np.any(counts * spec.l > len(members)):
                return False
            if kind in ("distinct_color", "chromatic") and np.any(counts > 1):
                return False
            if kind == "distinct_color" and len(members) < spec.l:
                return False
        return True
    if kind == "probabilistic_median":
        if P.groups is None:
            return True
        for g in np.unique(P.groups):
            if len(set(labels[P.groups == g].tolist())) != 1:
                return False
        return True
    if kind == "semi_supervised":
        return P.prior_labels is not None
    return True


def partition_unconstrained(P, centers, objective: str = "means") -> PartitionOutcome:
    P = as_pointset(P)
    D = pairwise_dist(P.coords, np.atleast_2d(centers), objective)
    labels = np.argmin(D, axis=1)
    return PartitionOutcome(labels, cost(P, labels, centers, objective), True)


def _labels_from_flow(n: int, point_edges: list, flow: np.ndarray) -> np.ndarray:
    labels = np.full(n, -1, dtype=int)
    for (i, j), e in point_edges:
        if flow[e] == 1:
            labels[i] = j
    return labels


def _size_bounded(P: PointSet, centers, objective, lo: int, hi: int) -> PartitionOutcome:
    D = _weighted_dist(P, centers, objective)
    n, k = D.shape
    net = FlowNetwork(n + k + 1, supply=[1] * n + [0] * k + [-n])
    sink = n + k
    point_edges = []
    for i in range(n):
        for j in range(k):
            point_edges.append(((i, j), net.add_edge(i, n + j, D[i, j], 1)))
    for j in range(k):
        net.add_edge(n + j, sink, 0.0, hi, lower=lo)
    sol = min_cost_circulation(net)
    if not sol.feasible:
        return infeasible(n, "no feasible flow")
    labels = _labels_from_flow(n, point_edges, sol.flow)
    return PartitionOutcome(labels, cost(P, labels, centers, objective), True,
                            info={"flow_cost": sol.total_cost})


def partition_r_gather(P, centers, r: int, objective: str = "means") -> PartitionOutcome:
    """Every cluster gets at least ``r`` points (demand r per center)."""
    P = as_pointset(P)
    k = len(np.atleast_2d(centers))
    if k * r > P.n:
        return infeasible(P.n, "k*r exceeds n")
    return _size_bounded(P, centers, objective, r, P.n)


def partition_r_capacity(P, centers, r: int, objective: str = "means") -> PartitionOutcome:
    """Every cluster gets at most ``r`` points (capacity r per center)."""
    P = as_pointset(P)
    k = len(np.atleast_2d(centers))
    if k * r < P.n:
        return infeasible(P.n, "k*r below n")
    return _size_bounded(P, centers, objective, 0, r)


def _color_groups(P: PointSet) -> list[np.ndarray]:
    if P.colors is None:
        raise ConstraintError("this constraint needs point colors")
    _, inv = np.unique(P.colors, return_inverse=True)
    return [np.flatnonzero(inv == g) for g in range(inv.max() + 1)]


def _gated_flow(P: PointSet, D: np.ndarray, groups, gate_cap, lo, hi):
    """Points -> per-(color, center) gates -> centers -> sink."""
    n, k = D.shape
    g_count = len(groups)
    gate = lambda g, j: n + g * k + j
    center = lambda j: n + g_count * k + j
    sink = n + g_count * k + k
    net = FlowNetwork(sink + 1, supply=[1] * n + [0] * (g_count * k + k) + [-n])
    point_edges = []
    for g, members in enumerate(groups):
        for i in members:
            for j in range(k):
                point_edges.append(((i, j), net.add_edge(i, gate(g, j), D[i, j], 1)))
        for j in range(k):
            net.add_edge(gate(g, j), center(j), 0.0, gate_cap[j])
    for j in range(k):
        net.add_edge(center(j), sink, 0.0, hi[j], lower=lo[j])
    sol = min_cost_circulation(net)
    if not sol.feasible:
        return None
    return _labels_from_flow(n, point_edges, sol.flow), sol.total_cost


def _diversity_guesses(n: int, k: int, l: int, t: int):
    """Per-center guesses u of floor(|cluster|/l): 0..t, or None for '> t'.

    Guesses whose size windows cannot add up to n are skipped.
    """
    options = [u for u in range(t + 1) if l * u <= n]
    if l * (t + 1) <= n:
        options.append(None)
    window = lambda u: (l * (t + 1), n) if u is None else (l * u, l * (u + 1) - 1)
    total = len(options) ** k
    exact = True
    if total > GUESS_CAP:
        exact = False
        base = n // (l * k)
        width = 0
        while (2 * width + 3) ** k <= GUESS_CAP and width <= t:
            width += 1
        options = [u for u in range(max(0, base - width), min(t, base + width) + 1) if l * u <= n]
        if l * (t + 1) <= n:
            options.append(None)
    guesses = []
    for combo in itertools.product(options, repeat=k):
        lo = sum(window(u)[0] for u in combo)
        hi = sum(window(u)[1] for u in combo)
        if lo <= n <= hi:
            guesses.append(combo)
    return guesses, exact


def partition_l_diversity(P, centers, l: int, objective: str = "means") -> PartitionOutcome:
    """Each cluster holds at most a 1/l fraction of any one color.

    For every guess u_j of floor(|cluster j| / l) the gates of cluster j get
    capacity u_j and the center gets demand l*u_j, capacity l*(u_j+1)-1;
    the '> t' guess uses gate capacity n and demand l*(t+1).
    """
    P = as_pointset(P)
    if l <= 1:
        raise ConstraintError("l_diversity needs l > 1")
    groups = _color_groups(P)
    D = _weighted_dist(P, centers, objective)
    n, k = D.shape
    t = max(len(g) for g in groups)
    guesses, exact = _diversity_guesses(n, k, l, t)
    best = None
    for combo in guesses:
        gate_cap = [n if u is None else u for u in combo]
        lo = [l * (t + 1) if u is None else l * u for u in combo]
        hi = [n if u is None else l * (u + 1) - 1 for u in combo]
        got = _gated_flow(P, D, groups, gate_cap, lo, hi)
        if got is not None and (best is None or got[1] < best[1] - 1e-12 * abs(best[1])):
            best = got
    if best is None:
        return infeasible(n, "no feasible guess")
    labels = best[0]
    return PartitionOutcome(labels, cost(P, labels, centers, objective), True, exact=exact,
                            info={"guesses": len(guesses)})


def partition_distinct_color(P, centers, l: int, objective: str = "means") -> PartitionOutcome:
    """Clusters of at least ``l`` points with pairwise distinct colors."""
    P = as_pointset(P)
    groups = _color_groups(P)
    D = _weighted_dist(P, centers, objective)
    n, k = D.shape
    if k * l > n:
        return infeasible(n, "k*l exceeds n")
    got = _gated_flow(P, D, groups, [1] * k, [l] * k, [n] * k)
    if got is None:
        return infeasible(n, "no feasible flow")
    labels = got[0]
    return PartitionOutcome(labels, cost(P, labels, centers, objective), True)


def partition_chromatic(P, centers, objective: str = "means") -> PartitionOutcome:
    """Same-color points go to distinct clusters: one min-cost matching of
    each color class onto the centers."""
    P = as_pointset(P)
    groups = _color_groups(P)
    D = _weighted_dist(P, centers, objective)
    n, k = D.shape
    labels = np.full(n, -1, dtype=int)
    for members in groups:
        if len(members) > k:
            return infeasible(n, "a color class is larger than k")
        cols, _ = hungarian(D[members])
        labels[members] = cols
    return PartitionOutcome(labels, cost(P, labels, centers, objective), True)


def partition_fault_tolerant(P, centers, l=None, objective: str = "means", via: str = "direct") -> PartitionOutcome:
    """Each point is served by its ``l`` (or per-point ``l_i``) nearest centers.

    ``via="chromatic"`` solves the same problem as chromatic clustering of
    l monochromatic copies per point.
    """
    P = as_pointset(P)
    cs = np.atleast_2d(centers)
    k = len(cs)
    need = np.full(P.n, l, dtype=int) if np.isscalar(l) else np.asarray(l, dtype=int)
    if need.shape != (P.n,):
        raise ConstraintError("need one l value per point")
    if need.min() < 1 or need.max() > k:
        raise ConstraintError("fault tolerance l must lie in [1, k]")
    owners = np.repeat(np.arange(P.n), need)
    if via == "direct":
        D = pairwise_dist(P.coords, cs, objective)
        order = np.argsort(D, axis=1, kind="stable")
        labels = np.concatenate([order[i, :need[i]] for i in range(P.n)])
        return PartitionOutcome(labels, cost(P, labels, cs, objective, owners=owners), True, owners=owners)
    if via != "chromatic":
        raise ConstraintError(f"unknown route {via!r}")
    copies = PointSet(P.coords[owners], P.w[owners], colors=owners)
    out = partition_chromatic(copies, cs, objective)
    if not out.feasible:
        return infeasible(P.n, out.info.get("reason", "infeasible"))
    return PartitionOutcome(out.assignment, cost(P, out.assignment, cs, objective, owners=owners),
                            True, owners=owners)


def partition_semi_supervised(P, centers, alpha: float, E1: float, E2: float,
                              objective: str = "means") -> PartitionOutcome:
    """Balance k-means cost against disagreement with a prior clustering.

    Weight w(i, j) sums, over points of prior cluster i, the cheapest of
    alpha*d/E1 (+ (1-alpha)/E2 unless the point goes to cluster j); a
    min-cost matching of prior clusters to centers fixes sigma, then every
    point takes its cheapest center under sigma.
    """
    P = as_pointset(P)
    if P.prior_labels is None:
        raise ConstraintError("semi_supervised needs prior labels")
    spec = ConstraintSpec("semi_supervised", alpha=alpha, E1=E1, E2=E2)
    cs = np.atleast_2d(centers)
    k = len(cs)
    prior = np.asarray(P.prior_labels, dtype=int)
    if prior.min() < 0 or prior.max() >= k:
        raise ConstraintError("prior labels must lie in [0, k)")
    geo = alpha * _weighted_dist(P, cs, objective) / (P.w.sum() * E1)
    surcharge = (1 - alpha) / E2
    # W[j, i]: cost of prior cluster i when matched to center j
    W = np.zeros((k, k))
    for j in range(k):
        c = geo + surcharge
        c[:, j] -= surcharge
        best = c.min(axis=1)
        W[j] = np.bincount(prior, weights=best, minlength=k)
    sigma, _ = hungarian(W)
    inv = np.empty(k, dtype=int)
    inv[sigma] = np.arange(k)
    c = geo + surcharge
    c[np.arange(P.n), inv[prior]] -= surcharge
    labels = np.argmin(c, axis=1)
    value, _ = semi_supervised_objective(P, labels, cs, spec, sigma=sigma, objective=objective)
    return PartitionOutcome(labels, value, True, info={"sigma": sigma.tolist()})


def partition_probabilistic_median(P, centers) -> PartitionOutcome:
    """Assign each node (all realizations sharing a group id) wholesale to
    the center of least expected distance."""
    P = as_pointset(P)
    groups = np.arange(P.n) if P.groups is None else np.asarray(P.groups, dtype=int)
    D = _weighted_dist(P, centers, "median")
    _, inv = np.unique(groups, return_inverse=True)
    per_node = np.zeros((inv.max() + 1, D.shape[1]))
    np.add.at(per_node, inv, D)
    choice = np.argmin(per_node, axis=1)
    labels = choice[inv]
    return PartitionOutcome(labels, cost(P, labels, centers, "median"), True)


def reduce_uncertain_means(nodes) -> tuple[PointSet, float]:
    """Replace each node by its probability-weighted mean point.

    ``nodes`` is a list of (realizations (h, d), probabilities (h,)). Returns
    the weighted point set and the constant within-node term (per unit of
    total weight) that must be added to its k-means objective.
    """
    pts, ws, spread = [], [], 0.0
    for coords, probs in nodes:
        x = np.atleast_2d(np.asarray(coords, dtype=float))
        t = np.asarray(probs, dtype=float)
        w = t.sum()
        m = (t[:, None] * x).sum(axis=0) / w
        pts.append(m)
        ws.append(w)
        spread += float((t * ((x - m) ** 2).sum(axis=1)).sum())
    W = float(np.sum(ws))
    return PointSet(np.array(pts), np.array(ws)), spread / W


def partition(P, centers, spec: ConstraintSpec, objective: str = "means") -> PartitionOutcome:
    """Dispatch to the solver for ``spec.kind``."""
    P = as_pointset(P)
    kind = spec.kind
    if kind in ("unconstrained", "uncertain_means"):
        return partition_unconstrained(P, centers, objective)
    if kind == "r_gather":
        return partition_r_gather(P, centers, spec.r, objective)
    if kind == "r_capacity":
        return partition_r_capacity(P, centers, spec.r, objective)
    if kind == "l_diversity":
        return partition_l_diversity(P, centers, spec.l, objective)
    if kind == "distinct_color":
        return partition_distinct_color(P, centers, spec.l, objective)
    if kind == "chromatic":
        return partition_chromatic(P, centers, objective)
    if kind == "fault_tolerant":
        k = len(np.atleast_2d(centers))
        if spec.copies(P.n).max() > k:
            raise ConstraintError("fault tolerance l exceeds k")
        return partition_fault_tolerant(P, centers, spec.copies(P.n), objective)
    if kind == "semi_supervised":
        return partition_semi_supervised(P, centers, spec.alpha, spec.E1, spec.E2, objective)
    if kind == "probabilistic_median":
        return partition_probabilistic_median(P, centers)
    raise ConstraintError(kind)  # pragma: no cover
