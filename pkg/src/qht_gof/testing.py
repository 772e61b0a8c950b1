"""Goodness-of-fit test |M_n| > nu with Monte Carlo calibration of nu."""

from __future__ import annotations

import enum
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .estimator import EstimatorConfig, compute_mn, make_config
from .quantum_states import DensityMatrix, make_state, parse_state
from .simulator import generate

__all__ = [
    "CALIBRATION",
    "Decision",
    "EVALUATION",
    "MonteCarloReport",
    "TestConfig",
    "calibrate_threshold",
    "decide",
    "estimate_level",
    "estimate_power",
    "iter_mn",
    "rejection_rate",
    "replicate_seed",
    "simulate_mn",
    "theoretical_threshold",
    "threshold_from_values",
]

CALIBRATION = 0
EVALUATION = 1


class Decision(str, enum.Enum):
    ACCEPT_H0 = "accept_H0"
    ACCEPT_H1 = "accept_H1"


def decide(mn: float, nu: float) -> Decision:
    """Reject the null (accept H1) iff |M_n| > nu."""
    if nu <= 0:
        raise ValueError("threshold nu must be positive")
    return Decision.ACCEPT_H1 if abs(mn) > nu else Decision.ACCEPT_H0


def theoretical_threshold(rate_phi_sq: float, c_star: float) -> float:
    """C* t_n^2."""
    if rate_phi_sq <= 0 or c_star <= 0:
        raise ValueError("rate and constant must be positive")
    return c_star * rate_phi_sq


@dataclass
class TestConfig:
    """One test instance: null state, efficiency, bandwidth, sample size, level, threshold."""

    __test__ = False  # not a pytest class

    tau: DensityMatrix
    eta: float
    N: int
    n: int
    alpha: float
    nu: float | None = None

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise ValueError("alpha must lie in (0, 1)")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.nu is not None and self.nu <= 0:
            raise ValueError("nu must be positive")

    def estimator(self) -> EstimatorConfig:
        return make_config(self.tau, self.eta, self.N)


# ---------------------------------------------------------------------------
# Replicates


def replicate_seed(seed: int, purpose: int, label: str, index: int) -> int:
    """64-bit dataset seed for replicate ``index`` of ``label`` in stream ``purpose``.

    Calibration and evaluation use different ``purpose`` values, so their
    datasets never share a stream.
    """
    words = np.frombuffer(hashlib.sha256(label.encode()).digest()[:16], dtype=np.uint32)
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), purpose, *map(int, words), index])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


_WORKER: dict = {}


def _init_worker(cfg: EstimatorConfig, state, n: int, seed: int, purpose: int) -> None:
    _WORKER.update(cfg=cfg, state=state, n=n, seed=seed, purpose=purpose)


def _replicate(cfg: EstimatorConfig, state, n: int, seed: int, purpose: int, index: int) -> float:
    ds = generate(state, n, cfg.eta, replicate_seed(seed, purpose, state.label, index))
    return compute_mn(ds, cfg)


def _one(index: int) -> float:
    w = _WORKER
    return _replicate(w["cfg"], w["state"], w["n"], w["seed"], w["purpose"], index)


def iter_mn(rho, cfg: EstimatorConfig, n: int, runs: int, seed: int, purpose: int = EVALUATION,
            jobs: int = 1, start: int = 0) -> Iterator[float]:
    """Yield M_n for replicates start..runs-1 of data drawn from ``rho``, in index order.

    The values do not depend on ``jobs``: each replicate has its own seed.
    """
    spec = parse_state(rho.spec if isinstance(rho, DensityMatrix) else rho)
    indices = range(start, runs)
    if jobs <= 1:
        for i in indices:
            yield _replicate(cfg, spec, n, seed, purpose, i)
        return
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(cfg, spec, n, seed, purpose)) as pool:
        yield from pool.map(_one, indices, chunksize=4)


def simulate_mn(rho, cfg: EstimatorConfig, n: int, runs: int, seed: int, purpose: int = EVALUATION,
                jobs: int = 1) -> np.ndarray:
    return np.fromiter(iter_mn(rho, cfg, n, runs, seed, purpose, jobs), dtype=float, count=runs)


def threshold_from_values(values, alpha: float) -> float:
    """Order statistic of |M_n| at (1-based) rank ceil((1 - alpha) runs)."""
    a = np.sort(np.abs(np.asarray(values, dtype=float)))
    runs = a.size
    if alpha * runs < 1:
        raise ValueError(f"alpha * runs must be >= 1 (alpha={alpha}, runs={runs})")
    rank = math.ceil((1.0 - alpha) * runs - 1e-9)
    return float(a[max(rank, 1) - 1])


def rejection_rate(values, nu: float) -> float:
    """Fraction of replicates with |M_n| > nu."""
    v = np.asarray(values, dtype=float)
    return float(np.mean(np.abs(v) > nu))


def calibrate_threshold(tau, eta: float, N: int, n: int, alpha: float, runs: int, seed: int,
                        jobs: int = 1, cfg: EstimatorConfig | None = None) -> float:
    """Empirical (1 - alpha)-quantile of |M_n| over ``runs`` datasets drawn from ``tau``."""
    if runs < 100:
        raise ValueError("calibration needs runs >= 100")
    if alpha * runs < 1:
        raise ValueError("alpha * runs must be >= 1")
    if not isinstance(tau, DensityMatrix):
        tau = make_state(tau)
    cfg = cfg or make_config(tau, eta, N)
    values = simulate_mn(tau, cfg, n, runs, seed, CALIBRATION, jobs)
    return threshold_from_values(values, alpha)


def _rejections(rho, cfg: TestConfig, runs: int, seed: int, jobs: int) -> float:
    if runs < 100:
        raise ValueError("need runs >= 100")
    if cfg.nu is None:
        raise ValueError("test config has no calibrated threshold")
    values = simulate_mn(rho, cfg.estimator(), cfg.n, runs, seed, EVALUATION, jobs)
    return rejection_rate(values, cfg.nu)


def estimate_power(rho, cfg: TestConfig, runs: int, seed: int, jobs: int = 1) -> float:
    """Fraction of evaluation replicates under the alternative ``rho`` that reject the null."""
    label = rho.label if isinstance(rho, DensityMatrix) else parse_state(rho).label
    if label == cfg.tau.label:
        raise ValueError("alternative equals the null state; use estimate_level")
    return _rejections(rho, cfg, runs, seed, jobs)


def estimate_level(tau, cfg: TestConfig, runs: int, seed: int, jobs: int = 1) -> float:
    """Empirical first-type error: rejection rate under the null state itself."""
    return _rejections(tau, cfg, runs, seed, jobs)


@dataclass
class MonteCarloReport:
    """Replicate values of M_n with their summary statistics."""

    values: np.ndarray
    seed: int
    truth: float | None = None
    nu: float | None = None
    is_null: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def runs(self) -> int:
        return int(self.values.size)

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def mse(self) -> float | None:
        if self.truth is None:
            return None
        return float(np.mean((self.values - self.truth) ** 2))

    @property
    def level_or_power(self) -> float | None:
        if self.nu is None:
            return None
        return rejection_rate(self.values, self.nu)
