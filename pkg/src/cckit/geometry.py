"""Points, cost functions, affine flats and the grid constructions that
enclose an unknown mean or median point."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

RANK_TOL = 1e-9
BALL_SLACK = 1e-12
# hard stop for materializing a single grid
MAX_ENUMERATION = 5_000_000


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class PointSet:
    """Dense points with optional weights, colors, prior labels and groups.

    ``groups`` ties realizations of one probabilistic node together; it is
    ``None`` for ordinary inputs.
    """

    coords: np.ndarray
    weights: Optional[np.ndarray] = None
    colors: Optional[np.ndarray] = None
    prior_labels: Optional[np.ndarray] = None
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords.reshape(-1, 1)
        if coords.ndim != 2 or coords.shape[0] == 0 or coords.shape[1] == 0:
            raise GeometryError("point set must be a nonempty (n, d) array")
        if not np.all(np.isfinite(coords)):
            raise GeometryError("coordinates must be finite")
        object.__setattr__(self, "coords", coords)
        n = coords.shape[0]
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise GeometryError("weights must be n finite nonnegative reals")
            object.__setattr__(self, "weights", w)
        for name in ("colors", "prior_labels", "groups"):
            val = getattr(self, name)
            if val is not None:
                arr = np.asarray(val)
                if arr.shape != (n,):
                    raise GeometryError(f"{name} must have one entry per point")
                object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def w(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def scaled(self, gamma: float) -> "PointSet":
        return PointSet(self.coords * gamma, self.weights, self.colors,
                        self.prior_labels, self.groups)

    def take(self, idx) -> "PointSet":
        idx = np.asarray(idx, dtype=int)
        pick = lambda a: None if a is None else a[idx]
        return PointSet(self.coords[idx], pick(self.weights), pick(self.colors),
                        pick(self.prior_labels), pick(self.groups))


def as_pointset(points) -> PointSet:
    if isinstance(points, PointSet):
        return points
    return PointSet(np.asarray(points, dtype=float))


def _subset(points: PointSet, subset) -> tuple[np.ndarray, np.ndarray]:
    if subset is None:
        return points.coords, points.w
    idx = np.asarray(subset, dtype=int)
    if idx.size == 0:
        raise GeometryError("empty subset")
    return points.coords[idx], points.w[idx]


def mean(points, subset=None) -> np.ndarray:
    """Weighted arithmetic mean of ``points[subset]``."""
    x, w = _subset(as_pointset(points), subset)
    total = w.sum()
    if total <= 0:
        raise GeometryError("subset has zero total weight")
    return (w[:, None] * x).sum(axis=0) / total


def variance(points, subset=None) -> float:
    x, w = _subset(as_pointset(points), subset)
    o = (w[:, None] * x).sum(axis=0) / w.sum()
    return float((w * ((x - o) ** 2).sum(axis=1)).sum() / w.sum())


def pairwise_dist(x: np.ndarray, centers: np.ndarray, objective: str = "means") -> np.ndarray:
    """(n, k) matrix of squared distances (means) or distances (median)."""
    diff = x[:, None, :] - np.asarray(centers, dtype=float)[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if objective == "means":
        return sq
    if objective == "median":
        return np.sqrt(sq)
    raise GeometryError(f"unknown objective {objective!r}")


def cost(points, assignment, centers, objective: str = "means", owners=None) -> float:
    """Average (squared) distance of each point to its assigned center.

    ``owners`` maps rows of ``assignment`` back to points when a point is
    served several times (fault tolerant clustering); the average is still
    taken over the original total weight.
    """
    ps = as_pointset(points)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    labels = np.asarray(assignment, dtype=int)
    rows = np.arange(ps.n) if owners is None else np.asarray(owners, dtype=int)
    if labels.shape != rows.shape:
        raise GeometryError("assignment length does not match the points")
    if labels.size and (labels.min() < 0 or labels.max() >= len(centers)):
        raise GeometryError("assignment refers to a missing center")
    diff = ps.coords[rows] - centers[labels]
    d = np.einsum("ij,ij->i", diff, diff)
    if objective == "median":
        d = np.sqrt(d)
    elif objective != "means":
        raise GeometryError(f"unknown objective {objective!r}")
    w = ps.w
    return float((w[rows] * d).sum() / w.sum())


def mean_shift_bound_check(Q, Q1) -> tuple[float, float]:
    """Distance between the mean of a subset and the full mean, against the
    bound sqrt((1 - a) / a) * sqrt(variance), a the subset's weight share."""
    ps = as_pointset(Q)
    idx = np.asarray(Q1, dtype=int)
    alpha = ps.w[idx].sum() / ps.w.sum()
    lhs = float(np.linalg.norm(mean(ps, idx) - mean(ps)))
    rhs = math.sqrt((1.0 - alpha) / alpha) * math.sqrt(variance(ps))
    assert lhs <= rhs + 1e-9 * max(1.0, rhs), (lhs, rhs)
    return lhs, rhs


@dataclass(frozen=True)
class Flat:
    origin: np.ndarray
    basis: np.ndarray  # (m, d), orthonormal rows

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def coords_of(self, p: np.ndarray) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.origin) @ self.basis.T

    def lift(self, c: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(c, dtype=float) @ self.basis


def affine_span(points) -> Flat:
    """Affine hull of ``points`` via Gram-Schmidt; near-dependent directions
    (relative tolerance 1e-9 of the largest difference vector) are dropped."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    origin = pts[0].copy()
    diffs = pts[1:] - origin
    d = pts.shape[1]
    if len(diffs) == 0:
        return Flat(origin, np.zeros((0, d)))
    scale = np.linalg.norm(diffs, axis=1).max()
    basis: list[np.ndarray] = []
    if scale > 0:
        for v in diffs:
            u = v.copy()
            # two passes for numerical orthogonality
            for _ in range(2):
                for b in basis:
                    u -= (u @ b) * b
            norm = np.linalg.norm(u)
            if norm > RANK_TOL * scale:
                basis.append(u / norm)
            if len(basis) == d:
                break
    return Flat(origin, np.array(basis).reshape(len(basis), d))


def project(flat: Flat, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return flat.origin + ((p - flat.origin) @ flat.basis.T) @ flat.basis


@dataclass(frozen=True)
class GridSpec:
    """Uniform axis-aligned mesh in ``flat`` coordinates, anchored at
    ``center`` and clipped to the ball of ``radius`` around it."""

    center: np.ndarray
    radius: float
    spacing: float
    flat: Flat

    def __post_init__(self):
        if self.radius < 0 or not self.spacing > 0:
            raise GeometryError("grid needs radius >= 0 and spacing > 0")

    @property
    def steps(self) -> int:
        return int(math.floor(self.radius / self.spacing * (1 + BALL_SLACK)))

    @property
    def _limit(self) -> float:
        return self.radius * (1 + BALL_SLACK)

    def bound(self) -> int:
        """Upper bound on the member count (the enclosing lattice cube)."""
        if self.radius == 0 or self.flat.dim == 0:
            return 1
        return (2 * self.steps + 1) ** self.flat.dim

    def _local(self) -> np.ndarray:
        """Lattice offsets (in units of flat coordinates) inside the ball."""
        m = self.flat.dim
        if self.radius == 0 or m == 0:
            return np.zeros((1, m))
        if self.bound() > MAX_ENUMERATION:
            raise GeometryError(f"grid with ~{self.bound()} points is too large to enumerate")
        s = self.steps
        axis = np.arange(-s, s + 1) * self.spacing
        mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
        keep = np.einsum("ij,ij->i", mesh, mesh) <= self._limit ** 2
        return mesh[keep]

    def points(self) -> np.ndarray:
        off = self._local()
        return self.center + off @ self.flat.basis

    def size(self) -> int:
        return len(self._local())

    def contains(self, p, atol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        c = (p - self.center) @ self.flat.basis.T
        if np.linalg.norm(self.center + c @ self.flat.basis - p) > atol * max(1.0, self.radius):
            return False
        if np.linalg.norm(c) > self._limit + atol:
            return False
        k = c / self.spacing
        return bool(np.all(np.abs(k - np.round(k)) < 1e-6))

    def nearest(self, x) -> np.ndarray:
        """A grid member close to ``x``.

        Exact when the lattice rounding of ``x`` lies in the ball, which
        holds once ``x`` is sqrt(m)*spacing/2 inside it. Otherwise ``x`` is pulled radially
        inside, rounded and polished over the neighbouring lattice points;
        the result is then within 1.5*sqrt(m)*spacing of the best member.
        """
        x = np.asarray(x, dtype=float)
        m = self.flat.dim
        if self.radius == 0 or m == 0:
            return self.center.copy()
        h = self.spacing
        c = (x - self.center) @ self.flat.basis.T
        s = self.steps
        k = np.clip(np.round(c / h), -s, s)
        if np.linalg.norm(k * h) <= self._limit:
            return self.center + (k * h) @ self.flat.basis
        pull = self.radius - math.sqrt(m) * h
        if pull <= 0:
            if self.bound() > MAX_ENUMERATION:
                return self.center.copy()
            pts = self._local()
            best = pts[np.argmin(((pts - c) ** 2).sum(axis=1))]
            return self.center + best @ self.flat.basis
        k = np.round(c * (pull / np.linalg.norm(c)) / h)
        if m <= 6:
            offs = np.array(list(itertools.product((-1, 0, 1), repeat=m)))
        else:
            offs = np.vstack([np.zeros(m), np.eye(m), -np.eye(m)])
        cand = (k + offs) * h
        inside = cand[np.einsum("ij,ij->i", cand, cand) <= self._limit ** 2]
        best = inside[np.argmin(((inside - c) ** 2).sum(axis=1))]
        return self.center + best @ self.flat.basis


def dedupe_rows(pts: np.ndarray) -> np.ndarray:
    """Drop rows equal (to 1e-11 of the largest coordinate) to an earlier row."""
    if len(pts) == 0:
        return pts
    scale = float(np.abs(pts).max()) or 1.0
    key = np.round(pts / (scale * 1e-11))
    _, first = np.unique(key, axis=0, return_index=True)
    return pts[np.sort(first)]


def grid_union_points(grids: Sequence[GridSpec], dedupe: bool = True) -> np.ndarray:
    d = len(grids[0].center)
    pts = np.concatenate([g.points() for g in grids]) if grids else np.zeros((0, d))
    return dedupe_rows(pts) if dedupe else pts


def nearest_in_grids(grids: Sequence[GridSpec], x) -> tuple[np.ndarray, float]:
    best, best_d = None, math.inf
    for g in grids:
        p = g.nearest(x)
        dist = float(np.linalg.norm(p - x))
        if dist < best_d:
            best, best_d = p, dist
    return best, best_d


def _simplex_ball_grid(vertices: np.ndarray, eps: float) -> GridSpec:
    j = len(vertices)
    flat = affine_span(vertices)
    center = vertices[0]
    r = float(np.linalg.norm(vertices - center, axis=1).max())
    if r == 0.0 or flat.dim == 0:
        return GridSpec(center, 0.0, 1.0, flat)
    return GridSpec(center, r, eps * r / (4 * j), flat)


def simplex_grids(vertices, eps: float, subsets: bool = True,
                  require_last: bool = False) -> list[GridSpec]:
    """Grids enclosing the mean of an unknown set whose parts have (roughly)
    the given mean points.

    The full simplex gets a ball centred at its first vertex with radius the
    largest vertex distance and mesh size eps*r/(4j), inside the vertex
    span. Each proper vertex subset of size j' gets the same construction at
    eps / 16**(j - j'), which covers the case where some parts are too small
    to matter and the target is reached through a lower-dimensional face.
    With ``require_last`` only vertex subsets holding the last vertex are
    kept.
    """
    if not eps > 0:
        raise GeometryError("eps must be positive")
    if eps > 1:
        raise GeometryError("eps must be at most 1")
    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    j = len(verts)
    if not subsets:
        return [_simplex_ball_grid(verts, eps)]
    grids = []
    for size in range(j, 0, -1):
        sub_eps = eps / 16 ** (j - size)
        for combo in itertools.combinations(range(j), size):
            if require_last and j - 1 not in combo:
                continue
            grids.append(_simplex_ball_grid(verts[list(combo)], sub_eps))
    return grids


def simplex_grid(vertices, eps: float, subsets: bool = True) -> np.ndarray:
    """Materialized union of :func:`simplex_grids`."""
    return grid_union_points(simplex_grids(vertices, eps, subsets))


def weaker_radius_factor(eps: float) -> float:
    if not 0 < eps < 0.2:
        raise GeometryError("weaker simplex grids need eps in (0, 1/5)")
    return 1.0 + (1.0 + 2.0 * eps) / math.sqrt(3.0 - 12.0 * eps)


def weaker_simplex_grids(centers, L: float, eps: float, flat: Optional[Flat] = None) -> list[GridSpec]:
    """Balls in the flat of ``centers`` that enclose the projection of the
    median of a set partially partitioned around those centers.

    Type-1 balls: radius rho*L around each center, mesh eps*L/sqrt(j).
    Type-2 balls: radius rho*(|o_l - o_l'| + L) around o_l for every ordered
    pair, mesh (1-eps)*eps/(6 j sqrt(j)) * (|o_l - o_l'| + L).
    """
    if L < 0:
        raise GeometryError("L must be nonnegative")
    rho = weaker_radius_factor(eps)
    cs = np.atleast_2d(np.asarray(centers, dtype=float))
    j = len(cs)
    flat = affine_span(cs) if flat is None else flat
    grids = []
    for c in cs:
        if L > 0:
            grids.append(GridSpec(c, rho * L, eps * L / math.sqrt(j), flat))
        else:
            grids.append(GridSpec(c, 0.0, 1.0, flat))
    for a in range(j):
        for b in range(j):
            if a == b:
                continue
            span = float(np.linalg.norm(cs[a] - cs[b])) + L
            if span == 0:
                continue
            spacing = (1 - eps) * eps / (6 * j * math.sqrt(j)) * span
            grids.append(GridSpec(cs[a], rho * span, spacing, flat))
    return grids


def weaker_simplex_grid(centers, L: float, eps: float) -> np.ndarray:
    return grid_union_points(weaker_simplex_grids(centers, L, eps))
