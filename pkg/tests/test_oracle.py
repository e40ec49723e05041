import numpy as np
import pytest

from cckit.geometry import PointSet
from cckit.oracle import (
    OracleRefused, brute_force_optimum, brute_force_partition, check_witness,
)
from cckit.partitions import ConstraintSpec
from instances import random_instance, random_spec


def test_coincident_pair_one_cluster():
    assert brute_force_optimum(PointSet(np.ones((2, 2))), 1).cost == 0.0


def test_two_pairs_on_a_line():
    P = PointSet(np.array([[0, 0], [1, 0], [4, 0], [5, 0]], float))
    assert brute_force_optimum(P, 2).cost == pytest.approx(0.25)


def test_gather_fixture_free_centers_not_worse():
    P = PointSet(np.array([[0, 0], [1, 0], [2, 0], [10, 0]], float))
    spec = ConstraintSpec("r_gather", r=2)
    assert brute_force_optimum(P, 2, spec).cost <= 65 / 4
    fixed = brute_force_partition(P, [[0, 0], [10, 0]], spec)
    assert fixed.cost == pytest.approx(65 / 4)


def test_refuses_large_inputs():
    P = PointSet(np.zeros((13, 1)))
    with pytest.raises(OracleRefused):
        brute_force_optimum(P, 2)
    with pytest.raises(OracleRefused):
        brute_force_partition(P.take(range(11)), [[0.0]], ConstraintSpec())


def test_unconstrained_partition_is_nearest_center():
    P = PointSet(np.array([[0.0], [3.0], [10.0]]))
    got = brute_force_partition(P, [[0.0], [9.0]], ConstraintSpec())
    assert got.labels.tolist() == [0, 0, 1]


def test_chromatic_group_matches_matching():
    P = PointSet(np.array([[0.0], [1.0], [5.0]]), colors=np.array([0, 0, 0]))
    got = brute_force_partition(P, [[5.0], [0.0], [1.0]], ConstraintSpec("chromatic"))
    assert got.cost == 0.0
    assert got.labels.tolist() == [1, 2, 0]


KINDS = ["unconstrained", "r_gather", "r_capacity", "l_diversity", "distinct_color", "chromatic",
         "fault_tolerant", "semi_supervised", "probabilistic_median"]


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", range(4))
def test_optimum_below_fixed_centers_and_witness_valid(kind, seed):
    rng = np.random.default_rng(seed)
    n, k = 7, 2
    P = random_instance(rng, kind, n, k, 2)
    spec = random_spec(rng, kind, n, k)
    objective = "median" if kind == "probabilistic_median" else "means"
    opt = brute_force_optimum(P, k, spec, objective)
    fixed = brute_force_partition(P, rng.normal(size=(k, 2)), spec, objective)
    if np.isfinite(fixed.cost):
        assert opt.cost <= fixed.cost + 1e-9
        assert check_witness(P, opt, spec, objective, rtol=1e-6)
