"""Seeded sampling, subset-mean enumeration and the Weiszfeld 1-median."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import as_pointset


class SamplingError(ValueError):
    pass


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Generator for ``(seed, *stream)``; equal keys give equal draws and
    distinct stream keys give independent children."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, stream)]))


def child_rng(rng: np.random.Generator, *stream) -> np.random.Generator:
    """Derive a child stream without advancing ``rng``."""
    base = rng.bit_generator.seed_seq
    return np.random.default_rng(np.random.SeedSequence(
        base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(s) & (2**32 - 1) for s in stream)))


def faithful_sample_size(k: int, eps: float, track: str = "means") -> float:
    """Sample size used by the tree construction with the proven constants."""
    if track == "means":
        return 8 * k**3 / eps**9 * math.log(k**2 / eps**6)
    return k**3 / eps**11 * math.log(k**2 / eps**6)


@dataclass(frozen=True)
class SampleParams:
    """``practical`` runs with small constants; ``faithful`` uses the proven
    sample size, which is only runnable while 2**s stays below the cap."""

    s: int = 8
    subset_cap: int = 65535
    preset: str = "practical"

    def __post_init__(self):
        if self.s < 1 or self.subset_cap < 1:
            raise SamplingError("s and subset_cap must be >= 1")
        if self.preset not in ("practical", "faithful"):
            raise SamplingError(f"unknown preset {self.preset!r}")

    @classmethod
    def faithful(cls, k: int, eps: float, track: str = "means", subset_cap: int = 65535) -> "SampleParams":
        s = faithful_sample_size(k, eps, track)
        if s > 62 or 2 ** math.ceil(s) - 1 > subset_cap:
            raise SamplingError(
                f"faithful sample size s={s:.4g} needs 2^s subsets, beyond cap {subset_cap}")
        return cls(s=math.ceil(s), subset_cap=subset_cap, preset="faithful")


def hits_sample_size(t: int, alpha: float, eta: float) -> int:
    """Draws needed so that a set of density ``alpha`` is hit at least ``t``
    times with probability ``1 - eta``."""
    return math.ceil(t * math.log(t / eta) / math.log(1 + alpha))


def sample_uniform(universe, size: int, rng: np.random.Generator, p=None) -> np.ndarray:
    """Draw ``size`` indices from ``universe`` with replacement (optionally
    with probabilities ``p``)."""
    universe = np.asarray(universe, dtype=int)
    if universe.size == 0:
        raise SamplingError("cannot sample from an empty universe")
    if size < 1:
        raise SamplingError("sample size must be >= 1")
    if p is not None:
        p = np.asarray(p, dtype=float)
        total = p.sum()
        if total <= 0:
            raise SamplingError("sampling weights sum to zero")
        pos = rng.choice(universe.size, size=size, replace=True, p=p / total)
    else:
        pos = rng.integers(0, universe.size, size=size)
    return universe[pos]


def subset_means(sample, cap: int, rng: Optional[np.random.Generator] = None, weights=None) -> np.ndarray:
    """Means of all nonempty subsets of ``sample`` if there are at most
    ``cap`` of them, otherwise the singletons plus ``cap - m`` random
    subsets."""
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    m = len(x)
    if m == 0:
        raise SamplingError("empty sample")
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    if m < 63 and 2**m - 1 <= cap:
        # bit b of mask i selects sample point b
        masks = np.arange(1, 2**m)
        sel = ((masks[:, None] >> np.arange(m)[None, :]) & 1).astype(float) * w
    else:
        if rng is None:
            raise SamplingError("random subsets need an rng")
        extra = max(cap - m, 0)
        sel = np.vstack([np.diag(w), (rng.random((extra, m)) < 0.5) * w])
        empty = sel.sum(axis=1) == 0
        if np.any(empty):
            pick = rng.integers(0, m, size=int(empty.sum()))
            sel[np.flatnonzero(empty), pick] = w[pick]
    return (sel @ x) / sel.sum(axis=1, keepdims=True)


def _avg_dist(x: np.ndarray, w: np.ndarray, y: np.ndarray) -> float:
    return float((w * _dists(x, y)).sum() / w.sum())


def _dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x - y
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def weiszfeld_median(points, subset=None, tol: float = 1e-9, max_iter: int = 10000,
                     check_monotone: bool = False) -> np.ndarray:
    """Geometric median by Weiszfeld iteration from the weighted mean.

    When an iterate coincides with an input point the usual subgradient test
    decides whether that point is optimal; if not, the iteration steps off
    it along the descent direction (Vardi-Zhang).
    """
    ps = as_pointset(points)
    x, w = ps.coords, ps.w
    if subset is not None:
        idx = np.asarray(subset, dtype=int)
        if idx.size == 0:
            raise SamplingError("empty subset")
        x, w = x[idx], w[idx]
    keep = w > 0
    x, w = x[keep], w[keep]
    if len(x) == 1:
        return x[0].copy()
    W = w.sum()
    y = (w[:, None] * x).sum(axis=0) / W
    dist = _dists(x, y)
    f = float(w @ dist) / W
    scale = float(np.abs(x - x[0]).max())
    if scale == 0:
        return x[0].copy()
    for _ in range(max_iter):
        hit = dist <= tol * scale
        if hit.any():
            # anchor: y sits on an input point
            w_anchor = w[hit].sum()
            rest = ~hit
            grad = (w[rest, None] * (x[rest] - y) / dist[rest, None]).sum(axis=0)
            gnorm = np.linalg.norm(grad)
            if gnorm <= w_anchor:
                return y
            t_inv = (w[rest] / dist[rest]).sum()
            t = (w[rest, None] * x[rest]).sum(axis=0) / t_inv
            y_new = y + (1.0 - w_anchor / gnorm) * (t - y)
        else:
            inv = w / dist
            y_new = inv @ x / inv.sum()
        dist_new = _dists(x, y_new)
        f_new = float(w @ dist_new) / W
        if check_monotone:
            assert f_new <= f + 1e-12 * max(1.0, f), (f, f_new)
        if f_new > f:
            break
        moved = math.sqrt(float((y_new - y) @ (y_new - y)))
        y, f, dist = y_new, f_new, dist_new
        if moved < tol * scale:
            break
    return y


def sample_mean_miss_rate(S, t: int, eta: float, trials: int, rng: np.random.Generator,
                replace: bool = True) -> float:
    """Fraction of random t-samples whose mean is at squared distance at
    least variance/(eta*t) from the mean of ``S``."""
    ps = as_pointset(S)
    x = ps.coords
    n = len(x)
    m = x.mean(axis=0)
    var = float(((x - m) ** 2).sum(axis=1).mean())
    bound = var / (eta * t)
    fails = 0
    for _ in range(trials):
        if replace:
            idx = rng.integers(0, n, size=t)
        else:
            idx = rng.choice(n, size=t, replace=False)
        gap = float(((x[idx].mean(axis=0) - m) ** 2).sum())
        if gap >= bound and not (var == 0 and gap == 0):
            fails += 1
    return fails / trials
