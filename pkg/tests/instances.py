"""Random instance generators shared by the test modules."""

import numpy as np

from cckit.geometry import PointSet, mean, nearest_in_grids, project
from cckit.partitions import ConstraintSpec
from cckit.sampling import weiszfeld_median

EPS_CHOICES = (0.04, 0.16, 0.49)


def random_split(rng, n: int, j: int) -> list[np.ndarray]:
    """j nonempty disjoint parts covering range(n), sizes uneven."""
    perm = rng.permutation(n)
    cuts = np.sort(rng.choice(np.arange(1, n), size=j - 1, replace=False)) if j > 1 else []
    return [p for p in np.split(perm, cuts)]


def simplex_instance(rng):
    n = int(rng.integers(4, 201))
    d = int(rng.integers(1, 21))
    j = int(rng.integers(1, min(4, n) + 1))
    eps = float(rng.choice(EPS_CHOICES))
    shift = rng.normal(size=(j, d)) * rng.uniform(0, 5)
    parts = random_split(rng, n, j)
    Q = np.empty((n, d))
    for l, idx in enumerate(parts):
        Q[idx] = rng.normal(size=(len(idx), d)) * rng.uniform(0.1, 2) + shift[l]
    return PointSet(Q), parts, eps


def perturb(rng, verts: np.ndarray, L: float) -> np.ndarray:
    if L == 0:
        return verts.copy()
    dirs = rng.normal(size=verts.shape)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return verts + dirs * (L * rng.uniform(0, 1, size=(len(verts), 1)))


def simplex_gap(grids, Q: PointSet) -> float:
    return nearest_in_grids(grids, mean(Q))[1]


def weaker_instance(rng):
    """Partial partition: j blobs plus at most eps*n leftover points."""
    j = int(rng.integers(1, 4))
    d = int(rng.integers(1, 6))
    eps = float(rng.choice([0.05, 0.1, 0.15, 0.19]))
    sizes = rng.integers(3, 25, size=j)
    parts, blocks, start = [], [], 0
    for l in range(j):
        c = rng.normal(size=d) * rng.uniform(0, 6)
        blocks.append(c + rng.normal(size=(sizes[l], d)) * rng.uniform(0.1, 1.5))
        parts.append(np.arange(start, start + sizes[l]))
        start += sizes[l]
    core = int(sizes.sum())
    extra = int(rng.integers(0, int(eps * core / (1 - eps)) + 1))
    if extra:
        blocks.append(rng.normal(size=(extra, d)) * 4)
    P = PointSet(np.concatenate(blocks))
    assert P.n - core <= eps * P.n
    medians = np.array([weiszfeld_median(P, idx, tol=1e-10) for idx in parts])
    L = max(float(np.linalg.norm(P.coords[idx] - medians[l], axis=1).max()) for l, idx in enumerate(parts))
    return P, medians, L, eps


def avg_dist(P: PointSet, tau) -> float:
    return float((P.w * np.linalg.norm(P.coords - tau, axis=1)).sum() / P.w.sum())


def weaker_best_cost(grids, P: PointSet, medians) -> float:
    """Cheapest average distance among the grid points nearest to the
    projection of the median of P, one per grid (or every grid point when
    the grids are small)."""
    total = sum(g.bound() for g in grids)
    if total <= 200_000:
        pts = np.concatenate([g.points() for g in grids])
        d = np.linalg.norm(P.coords[None, :, :] - pts[:, None, :], axis=2) if len(pts) * P.n < 2e7 else None
        if d is not None:
            return float((d * P.w).sum(axis=1).min() / P.w.sum())
    target = project(grids[0].flat, weiszfeld_median(P, tol=1e-10))
    return min(avg_dist(P, g.nearest(target)) for g in grids)


def colored_points(rng, n: int, d: int, n_colors: int) -> PointSet:
    return PointSet(rng.normal(size=(n, d)) * 2, colors=rng.integers(0, n_colors, size=n))


def random_spec(rng, kind: str, n: int, k: int) -> ConstraintSpec:
    if kind == "r_gather":
        return ConstraintSpec(kind, r=int(rng.integers(1, n // k + 1)))
    if kind == "r_capacity":
        return ConstraintSpec(kind, r=int(rng.integers(-(-n // k), n + 1)))
    if kind == "l_diversity":
        return ConstraintSpec(kind, l=int(rng.integers(2, 4)))
    if kind == "distinct_color":
        return ConstraintSpec(kind, l=int(rng.integers(1, 3)))
    if kind == "fault_tolerant":
        return ConstraintSpec(kind, l=int(rng.integers(1, k + 1)))
    if kind == "semi_supervised":
        return ConstraintSpec(kind, alpha=float(rng.uniform(0, 1)), E1=float(rng.uniform(0.5, 3)),
                              E2=float(rng.uniform(1, n)))
    return ConstraintSpec(kind)


def random_instance(rng, kind: str, n: int, k: int, d: int) -> PointSet:
    """Point set carrying whatever side data ``kind`` needs."""
    X = rng.normal(size=(n, d)) * 2
    if rng.random() < 0.5:
        X[: n // 2] += 4
    colors = prior = groups = weights = None
    if kind in ("l_diversity", "distinct_color"):
        colors = rng.integers(0, int(rng.integers(2, 4)), size=n)
    elif kind == "chromatic":
        # classes of at most k points
        colors = rng.permutation(np.arange(n) // int(rng.integers(1, k + 1)))
    elif kind == "semi_supervised":
        prior = rng.integers(0, k, size=n)
    elif kind == "probabilistic_median":
        groups = np.sort(rng.integers(0, max(2, n // 2), size=n))
        _, groups = np.unique(groups, return_inverse=True)
        weights = rng.uniform(0.05, 1, size=n)
        for g in np.unique(groups):
            idx = groups == g
            weights[idx] *= rng.uniform(0.5, 1) / weights[idx].sum()
    return PointSet(X, weights, colors, prior, groups)
