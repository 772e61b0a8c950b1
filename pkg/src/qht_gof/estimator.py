"""U-statistic estimate of the squared L2 distance between two states.

    M_n = 1/(n(n-1)) sum_{j,k<N} sum_{l != m} a_l^{jk} conj(a_m^{jk}),
    a_l^{jk} = F^eta_{j,k}(Y_l / sqrt(eta), Phi_l) - tau_{j,k},
    F^eta_{j,k}(x, phi) = f^eta_{j,k}(x) e^{i (j-k) phi}.

The double sum is evaluated through sum_{l != m} a_l conj(a_m) = |sum a|^2 - sum |a|^2,
which costs O(n N^2) instead of O(n^2 N^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pattern_kernel import PatternTable, check_eta, load_or_build_table
from .quantum_states import DensityMatrix
from .simulator import QhtDataset

__all__ = [
    "EstimatorConfig",
    "RateParams",
    "bandwidth_n1",
    "bandwidth_n2",
    "bandwidth_n3",
    "compute_mn",
    "expected_mn",
    "make_config",
    "pattern_features",
    "rate_phi",
]

# records per accumulation chunk; bounds memory at n = 50 000, N = 15
CHUNK = 16384


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    N: int
    eta: float
    tau: DensityMatrix
    table: PatternTable

    def __post_init__(self):
        check_eta(self.eta)
        if self.N < 1:
            raise ValueError("bandwidth N must be >= 1")
        if self.tau.dim < self.N:
            raise ValueError(f"null state has dim {self.tau.dim} < N = {self.N}")
        if self.table.N < self.N:
            raise ValueError(f"pattern table covers N={self.table.N} < {self.N}")
        if self.table.eta != self.eta:
            raise ValueError(f"pattern table built for eta={self.table.eta}, config has eta={self.eta}")


def make_config(tau: DensityMatrix, eta: float, N: int, table: PatternTable | None = None) -> EstimatorConfig:
    """Config with a (cached) pattern table on the default grid."""
    if table is None:
        table = load_or_build_table(eta, N)
    return EstimatorConfig(N=N, eta=float(eta), tau=tau, table=table)


def _kernel_points(ds: QhtDataset, eta: float) -> np.ndarray:
    # Kernel orientation: the tabulated f_{j,k} follow the e^{-itx} inversion, whose
    # odd-(j-k) members are mirror images of the reconstruction kernels for these
    # quadrature densities, so data enter at -Y/sqrt(eta).
    return -ds.y / math.sqrt(eta)


def _check(ds: QhtDataset, cfg: EstimatorConfig) -> None:
    if ds.eta != cfg.eta:
        raise ValueError(f"dataset eta={ds.eta} does not match estimator eta={cfg.eta}")


def pattern_features(ds: QhtDataset, cfg: EstimatorConfig) -> np.ndarray:
    """F^eta_{j,k}(Y_l/sqrt(eta), Phi_l) for all j, k < N; shape (N, N, n).

    Each sample mean estimates rho_{j,k} without bias.
    """
    _check(ds, cfg)
    N = cfg.N
    vals = cfg.table.evaluate(_kernel_points(ds, cfg.eta))
    out = np.empty((N, N, ds.n), dtype=complex)
    for j in range(N):
        for k in range(N):
            out[j, k] = vals[cfg.table.index(j, k)] * np.exp(1j * (j - k) * ds.phi)
    return out


def compute_mn(ds: QhtDataset, cfg: EstimatorConfig) -> float:
    """The U-statistic M_n for dataset ``ds`` against the null state ``cfg.tau``."""
    _check(ds, cfg)
    n = ds.n
    if n < 2:
        raise ValueError("M_n needs at least two records")
    N = cfg.N
    table = cfg.table
    rows = [table.index(j, k) for j in range(N) for k in range(j + 1)]
    diffs = np.array([j - k for j in range(N) for k in range(j + 1)])
    by_diff = [np.nonzero(diffs == d)[0] for d in range(N)]

    lin = np.zeros(len(rows), dtype=complex)   # sum_l f(x_l) e^{i d phi_l}
    sq = np.zeros(len(rows))                   # sum_l f(x_l)^2
    x = _kernel_points(ds, cfg.eta)
    for s in range(0, n, CHUNK):
        f = table.evaluate(x[s:s + CHUNK])[rows]
        phase = np.exp(1j * np.outer(np.arange(N), ds.phi[s:s + CHUNK]))
        for d, sel in enumerate(by_diff):
            lin[sel] += f[sel] @ phase[d]
        sq += np.einsum("pn,pn->p", f, f)

    tau = np.array([cfg.tau.entries[j, k] for j in range(N) for k in range(j + 1)])
    s_sum = lin - n * tau
    s_abs = sq - 2.0 * (np.conj(tau) * lin).real + n * np.abs(tau) ** 2
    # (j, k) and (k, j) contribute conjugate terms with equal value
    weight = np.where(diffs == 0, 1.0, 2.0)
    total = np.sum(weight * (np.abs(s_sum) ** 2 - s_abs))
    return float(total / (n * (n - 1.0)))


def expected_mn(rho: DensityMatrix, tau: DensityMatrix, N: int) -> float:
    """E_rho[M_n] = sum_{j,k<N} |rho_{j,k} - tau_{j,k}|^2."""
    if rho.dim < N or tau.dim < N:
        raise ValueError("both states need dim >= N")
    d = rho.entries[:N, :N] - tau.entries[:N, :N]
    return float(np.sum(np.abs(d) ** 2))


# ---------------------------------------------------------------------------
# Bandwidths and testing rates


@dataclass(frozen=True)
class RateParams:
    n: float
    B: float
    r: float
    eta: float

    @property
    def gamma(self) -> float:
        return (1.0 - self.eta) / (4.0 * self.eta)


def _loglog(n: float) -> tuple[float, float]:
    if n <= math.e:
        raise ValueError(f"n must exceed e so that log log n > 0, got {n}")
    ln = math.log(n)
    return ln, math.log(ln)


def bandwidth_n1(n: float, B: float, r: float) -> float:
    """(log n/(4B) + (log log n)^2/(4B))^{2/r}, the noiseless bandwidth."""
    if B <= 0 or not (0 < r <= 2):
        raise ValueError("need B > 0 and r in (0, 2]")
    ln, lln = _loglog(n)
    return ((ln + lln * lln) / (4.0 * B)) ** (2.0 / r)


def bandwidth_n2(n: float, B: float, gamma: float) -> float:
    """log(n)/(4(4 gamma + B)) (1 + 8 log log n / (3 log n)), for r = 2."""
    if B <= 0 or gamma < 0:
        raise ValueError("need B > 0 and gamma >= 0")
    ln, lln = _loglog(n)
    return ln / (4.0 * (4.0 * gamma + B)) * (1.0 + 8.0 * lln / (3.0 * ln))


def bandwidth_n3(n: float, B: float, r: float, gamma: float, rtol: float = 1e-13) -> float:
    """Positive root of 16 gamma N + 4 B N^{r/2} = log n, by bisection."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if B <= 0 or gamma <= 0 or not (0 < r <= 2):
        raise ValueError("need B > 0, gamma > 0 and r in (0, 2]")
    ln = math.log(n)

    def h(N):
        return 16.0 * gamma * N + 4.0 * B * N ** (r / 2.0) - ln

    lo, hi = 0.0, ln / (16.0 * gamma)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def rate_phi(n: float, B: float, r: float, gamma: float, regime: str) -> float:
    """Squared testing rate phi_n^2 = t_n^2.

    ``regime`` is ``"ideal"`` (gamma = 0), ``"smooth_r2"`` (r = 2, gamma > 0) or
    ``"general"`` (r in (0, 2), gamma > 0).
    """
    if regime == "ideal":
        if gamma != 0:
            raise ValueError("ideal regime requires gamma = 0 (eta = 1)")
        if not (0 < r <= 2):
            raise ValueError("r must lie in (0, 2]")
        return n ** -0.5 * math.log(n) ** (17.0 / (6.0 * r))
    if regime == "smooth_r2":
        if r != 2 or gamma <= 0:
            raise ValueError("smooth_r2 regime requires r = 2 and gamma > 0")
        a = 4.0 * gamma + B
        return math.log(n) ** ((12.0 * gamma - B) / (3.0 * a)) * n ** (-B / (2.0 * a))
    if regime == "general":
        if not (0 < r < 2) or gamma <= 0:
            raise ValueError("general regime requires r in (0, 2) and gamma > 0")
        N3 = bandwidth_n3(n, B, r, gamma)
        return N3 ** (2.0 - r / 2.0) * math.exp(-2.0 * B * N3 ** (r / 2.0))
    raise ValueError(f"unknown regime {regime!r}")
