"""Multicast delay tomography: routing-tree reconstruction and per-edge moment recovery."""

__version__ = "0.1.0"

from .afi import AdditiveFunction, afi
from .delays import (
    DelayModel,
    DiscreteDelay,
    SampleMatrix,
    UniformDelay,
    central_moment,
    sample_delays,
    shift_means,
    uniform_model,
)
from .dmr import DmrParams, dmr_reconstruct
from .errors import (
    ExtenderInconsistencyError,
    GuardError,
    IncompatibleBipartitionsError,
    MissingMomentError,
    ReconstructionError,
    TomographyError,
    ValidationError,
)
from .estimators import DistortedMetric, estimated_variance_metric
from .moments import MomentTable, er, sym_er
from .tree import Bipartition, RoutingTree, bipartitions_of, chord_depth, tree_from_bipartitions

__all__ = [
    "AdditiveFunction",
    "Bipartition",
    "DelayModel",
    "DiscreteDelay",
    "DistortedMetric",
    "DmrParams",
    "ExtenderInconsistencyError",
    "GuardError",
    "IncompatibleBipartitionsError",
    "MissingMomentError",
    "MomentTable",
    "ReconstructionError",
    "RoutingTree",
    "SampleMatrix",
    "TomographyError",
    "UniformDelay",
    "ValidationError",
    "afi",
    "bipartitions_of",
    "central_moment",
    "chord_depth",
    "dmr_reconstruct",
    "er",
    "estimated_variance_metric",
    "sample_delays",
    "shift_means",
    "sym_er",
    "tree_from_bipartitions",
    "uniform_model",
]
