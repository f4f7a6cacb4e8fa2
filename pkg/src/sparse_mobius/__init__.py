"""Sparse Möbius transforms of pseudo-boolean functions from few queries."""
from .core import (DimensionError, SparseMobius, all_masks, brute_force_transform, direct_mobius,
                   evaluate, evaluate_many, forward_mobius_dense, inverse_mobius_dense, mask_to_str,
                   str_to_mask)
from .designs import DesignConfig, DesignError, SubsamplingDesign, make_designs
from .detection import MULTITON, ZEROTON, DetectorConfig, Multiton, Singleton, Zeroton, detect
from .metrics import FitReport, banzhaf, degree_profile, faithfulness, shapley
from .peeling import RecoveryResult, run, transform
from .sampling import (CachingOracle, FunctionOracle, NoisyOracle, OracleError, SparseOracle,
                       SubprocessOracle, ValueOracle, build_bin_tables)
from .synth import SyntheticSpec, generate

__all__ = [
    "DimensionError", "SparseMobius", "all_masks", "brute_force_transform", "direct_mobius", "evaluate",
    "evaluate_many", "forward_mobius_dense", "inverse_mobius_dense", "mask_to_str", "str_to_mask",
    "DesignConfig", "DesignError", "SubsamplingDesign", "make_designs",
    "MULTITON", "ZEROTON", "DetectorConfig", "Multiton", "Singleton", "Zeroton", "detect",
    "FitReport", "banzhaf", "degree_profile", "faithfulness", "shapley",
    "RecoveryResult", "run", "transform",
    "CachingOracle", "FunctionOracle", "NoisyOracle", "OracleError", "SparseOracle", "SubprocessOracle",
    "ValueOracle", "build_bin_tables",
    "SyntheticSpec", "generate",
]

__version__ = "0.1.0"
