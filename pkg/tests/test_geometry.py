import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cckit.geometry import (
    GeometryError, GridSpec, PointSet, affine_span, cost, grid_union_points, mean,
    mean_shift_bound_check, project, simplex_grid, simplex_grids, variance,
    weaker_simplex_grid, weaker_simplex_grids,
)
from instances import perturb, simplex_gap, simplex_instance, weaker_best_cost, weaker_instance


def test_mean_and_variance_weighted():
    P = PointSet(np.array([[0.0], [2.0]]), np.array([1.0, 3.0]))
    assert mean(P).tolist() == [1.5]
    assert variance(P) == pytest.approx((1.5**2 + 3 * 0.5**2) / 4)


def test_cost_average_over_weight():
    P = PointSet(np.array([[0, 0], [1, 0], [4, 0], [5, 0]], float))
    assert cost(P, [0, 0, 1, 1], [[0.5, 0], [4.5, 0]]) == 0.25
    assert cost(P, [0, 0, 1, 1], [[0.5, 0], [4.5, 0]], "median") == 0.5


def test_cost_rejects_bad_labels():
    P = PointSet(np.zeros((2, 1)))
    with pytest.raises(GeometryError):
        cost(P, [0, 2], [[0.0], [1.0]])


def test_pointset_validation():
    with pytest.raises(GeometryError):
        PointSet(np.array([[np.nan]]))
    with pytest.raises(GeometryError):
        PointSet(np.zeros((2, 1)), weights=np.array([1.0, -1.0]))


@pytest.mark.parametrize("seed", range(30))
def test_mean_shift_bound(seed):
    rng = np.random.default_rng(seed)
    Q = PointSet(rng.normal(size=(int(rng.integers(2, 40)), 3)))
    sub = rng.choice(Q.n, size=int(rng.integers(1, Q.n + 1)), replace=False)
    lhs, rhs = mean_shift_bound_check(Q, sub)
    assert lhs <= rhs + 1e-9


@given(st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_sum_of_squares_splits_at_the_mean(seed):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(int(rng.integers(1, 30)), int(rng.integers(1, 6))))
    o = rng.normal(size=Q.shape[1]) * 3
    m = Q.mean(axis=0)
    lhs = ((Q - o) ** 2).sum()
    rhs = ((Q - m) ** 2).sum() + len(Q) * ((m - o) ** 2).sum()
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_affine_span_drops_dependent_directions():
    F = affine_span([[0, 0, 0], [1, 1, 0], [2, 2, 0]])
    assert F.dim == 1
    assert affine_span([[1, 2], [1, 2]]).dim == 0
    F = affine_span(np.eye(3))
    assert F.dim == 2
    assert np.allclose(F.basis @ F.basis.T, np.eye(2))


@pytest.mark.parametrize("seed", range(20))
def test_project_idempotent_and_closest(seed):
    rng = np.random.default_rng(seed)
    F = affine_span(rng.normal(size=(3, 5)))
    p = rng.normal(size=5) * 3
    q = project(F, p)
    assert np.allclose(project(F, q), q)
    for _ in range(20):
        other = F.lift(rng.normal(size=F.dim) * 3)
        assert np.linalg.norm(p - q) <= np.linalg.norm(p - other) + 1e-12


def test_simplex_grid_single_vertex():
    assert simplex_grid([[1.0, 1.0]], 0.3).tolist() == [[1.0, 1.0]]


def test_simplex_grid_coincident_vertices():
    assert simplex_grid([[2.0, 0.0], [2.0, 0.0], [2.0, 0.0]], 0.3).tolist() == [[2.0, 0.0]]


def test_simplex_grid_rejects_bad_eps():
    with pytest.raises(GeometryError):
        simplex_grids([[0.0], [1.0]], 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_simplex_grid_stays_in_span_and_ball(seed):
    rng = np.random.default_rng(seed)
    j = int(rng.integers(2, 4))
    V = rng.normal(size=(j, 6))
    eps = 0.5
    pts = simplex_grid(V, eps)
    F = affine_span(V)
    assert np.allclose(np.array([project(F, p) for p in pts]), pts, atol=1e-9)
    # every sub-simplex ball sits on one of its vertices with radius at most the diameter
    diam = max(np.linalg.norm(V - v, axis=1).max() for v in V)
    near = np.linalg.norm(pts[:, None, :] - V[None], axis=2).min(axis=1)
    assert near.max() <= diam * (1 + 1e-9)
    # size bound: one grid per vertex subset, each at most its lattice cube
    assert len(pts) <= sum(g.bound() for g in simplex_grids(V, eps))
    assert len(pts) <= 2**j * (8 * j / eps * 16**j) ** j


@pytest.mark.parametrize("seed", range(15))
def test_nearest_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    F = affine_span(rng.normal(size=(3, 4)))
    g = GridSpec(rng.normal(size=4), float(rng.uniform(0.5, 2)), float(rng.uniform(0.1, 0.4)), F)
    pts = g.points()
    slack = 1.5 * math.sqrt(F.dim) * g.spacing
    for _ in range(20):
        x = rng.normal(size=4) * 2
        brute = np.linalg.norm(pts - x, axis=1).min()
        got = np.linalg.norm(g.nearest(x) - x)
        assert g.contains(g.nearest(x))
        if np.linalg.norm(project(F, x) - g.center) <= g.radius - math.sqrt(F.dim) * g.spacing / 2:
            assert got == pytest.approx(brute, abs=1e-9)
        else:
            assert brute - 1e-9 <= got <= brute + slack


def test_grid_union_dedupes():
    F = affine_span([[0.0], [1.0]])
    g = GridSpec(np.array([0.0]), 1.0, 0.5, F)
    assert len(grid_union_points([g, g])) == 5


@pytest.mark.parametrize("seed", range(40))
def test_exact_part_means_are_enclosed(seed):
    rng = np.random.default_rng(seed)
    Q, parts, eps = simplex_instance(rng)
    V = np.array([mean(Q, p) for p in parts])
    assert simplex_gap(simplex_grids(V, eps), Q) <= math.sqrt(eps * variance(Q)) + 1e-9


@pytest.mark.parametrize("seed", range(40))
def test_perturbed_part_means_are_enclosed(seed):
    rng = np.random.default_rng(seed)
    Q, parts, eps = simplex_instance(rng)
    delta = math.sqrt(variance(Q))
    L = float(rng.choice([0.0, 0.1, 1.0])) * delta
    V = perturb(rng, np.array([mean(Q, p) for p in parts]), L)
    assert simplex_gap(simplex_grids(V, eps), Q) <= math.sqrt(eps) * delta + (1 + eps) * L + 1e-9


def test_weaker_grid_single_center_no_radius():
    assert weaker_simplex_grid([[3.0, 4.0]], 0.0, 0.1).tolist() == [[3.0, 4.0]]


def test_weaker_grid_stays_on_segment_line():
    pts = weaker_simplex_grid([[0.0, 0.0], [10.0, 0.0]], 1.0, 0.1)
    assert np.all(np.abs(pts[:, 1]) < 1e-9)
    rho = 1 + 1.2 / math.sqrt(3 - 1.2)
    reach = np.minimum(np.abs(pts[:, 0]), np.abs(pts[:, 0] - 10))
    assert reach.max() <= rho * 11 + 1e-9


def test_weaker_grid_rejects_eps():
    with pytest.raises(GeometryError):
        weaker_simplex_grids([[0.0]], 1.0, 0.2)


@pytest.mark.parametrize("seed", range(25))
def test_weaker_grid_bound(seed):
    rng = np.random.default_rng(seed)
    P, medians, L, eps = weaker_instance(rng)
    from instances import avg_dist
    from cckit.sampling import weiszfeld_median
    opt = avg_dist(P, weiszfeld_median(P, tol=1e-10))
    best = weaker_best_cost(weaker_simplex_grids(medians, L, eps), P, medians)
    assert best <= (1 + 9 * eps / 4) * opt + (1 + eps) * L + 1e-6
