"""Goodness-of-fit testing for quantum states from noisy homodyne data."""

__version__ = "0.1.0"

from .estimator import EstimatorConfig, compute_mn, expected_mn, make_config  # noqa: E402
from .pattern_kernel import PatternTable, build_table, load_or_build_table, pattern_eval  # noqa: E402
from .quantum_states import DensityMatrix, StateSpec, l2_distance_sq, make_state, parse_state  # noqa: E402
from .simulator import QhtDataset, generate, load_dataset, save_dataset  # noqa: E402
from .testing import Decision, TestConfig, calibrate_threshold, decide, simulate_mn  # noqa: E402

__all__ = [
    "Decision",
    "DensityMatrix",
    "EstimatorConfig",
    "PatternTable",
    "QhtDataset",
    "StateSpec",
    "TestConfig",
    "__version__",
    "build_table",
    "calibrate_threshold",
    "compute_mn",
    "decide",
    "expected_mn",
    "generate",
    "l2_distance_sq",
    "load_dataset",
    "load_or_build_table",
    "make_config",
    "make_state",
    "parse_state",
    "pattern_eval",
    "save_dataset",
    "simulate_mn",
]
