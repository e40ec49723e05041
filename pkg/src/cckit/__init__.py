"""Constrained k-means and k-median clustering by peeling and enclosing."""

from .geometry import PointSet, cost
from .partitions import ConstraintSpec, PartitionOutcome, partition, validate
from .pne import PneParams, SolveResult, solve
from .sampling import SampleParams

__all__ = [
    "ConstraintSpec", "PartitionOutcome", "PneParams", "PointSet", "SampleParams",
    "SolveResult", "cost", "partition", "solve", "validate",
]
__version__ = "0.1.0"
