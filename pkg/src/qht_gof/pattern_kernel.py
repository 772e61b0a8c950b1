"""Fock wave functions and (noise-corrected) pattern functions.

The pattern function f_{j,k} is the kernel whose expectation against ideal
homodyne data (X, Phi) recovers the density-matrix entry rho_{j,k}.  With
detection efficiency eta the kernel is modified in the Fourier domain by the
factor exp(gamma t^2), gamma = (1 - eta) / (4 eta), which undoes the Gaussian
detection noise.  Values are obtained by numerically inverting the Fourier
transform; :func:`recurrence_check` is an independent evaluation through the
regular/irregular wave functions, valid for small indices only.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erfi

__all__ = [
    "PatternTable",
    "build_table",
    "efficiency_gamma",
    "fock_eval",
    "fock_all",
    "laguerre",
    "load_or_build_table",
    "pattern_eval",
    "pattern_ft",
    "pattern_l2_norm_sq",
    "recurrence_check",
    "tail_cutoff",
]

TAIL_TOL = 1e-12
IMAG_TOL = 1e-8
# Gauss-Legendre panels on [0, T]; mean node spacing is PANEL_WIDTH / PANEL_NODES.
PANEL_WIDTH = 0.125
PANEL_NODES = 16


def check_eta(eta: float) -> float:
    eta = float(eta)
    if not (0.5 < eta <= 1.0):
        raise ValueError(f"efficiency eta must lie in (1/2, 1], got {eta}")
    return eta


def efficiency_gamma(eta: float) -> float:
    """gamma = (1 - eta) / (4 eta)."""
    eta = check_eta(eta)
    return (1.0 - eta) / (4.0 * eta)


# ---------------------------------------------------------------------------
# Fock basis


def fock_all(kmax: int, x) -> np.ndarray:
    """Return psi_0..psi_kmax at ``x`` as an array of shape (kmax + 1, *x.shape).

    Uses the normalized three-term recurrence, stable for large k.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if kmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, kmax):
        out[k + 1] = x * math.sqrt(2.0 / (k + 1)) * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def fock_eval(k: int, x):
    """Normalized Hermite function psi_k(x)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    res = fock_all(k, x)[k]
    return float(res) if res.ndim == 0 else res


# ---------------------------------------------------------------------------
# Fourier-domain pattern functions


def laguerre(k: int, alpha: int, u) -> np.ndarray:
    """Generalized Laguerre polynomial L_k^alpha(u) by upward recurrence."""
    u = np.asarray(u, dtype=float)
    prev = np.ones_like(u)
    if k == 0:
        return prev
    cur = 1.0 + alpha - u
    for m in range(1, k):
        prev, cur = cur, ((2 * m + 1 + alpha - u) * cur - (m + alpha) * prev) / (m + 1)
    return cur


def _prefactor(j: int, k: int) -> float:
    # sqrt(2^{k-j} k!/j!) accumulated as a product of ratios
    p = 1.0
    for m in range(k + 1, j + 1):
        p /= math.sqrt(2.0 * m)
    return p


def _ft_magnitude(j: int, k: int, t: np.ndarray, gamma: float = 0.0) -> np.ndarray:
    """Real g(t) with f~_{j,k}(t) e^{gamma t^2} = pi (-i)^{j-k} g(t)."""
    d = j - k
    return (_prefactor(j, k) * np.abs(t) * t**d * np.exp((gamma - 0.25) * t * t)
            * laguerre(k, d, 0.5 * t * t))


def pattern_ft(j: int, k: int, t):
    """Fourier transform of the pattern function f_{j,k}, for j >= k.

    f~_{j,k}(t) = pi (-i)^{j-k} sqrt(2^{k-j} k!/j!) |t| t^{j-k} e^{-t^2/4} L_k^{j-k}(t^2/2).

    The ``|t|`` factor comes from Radon inversion; without it the inverse
    transform does not reproduce the known closed forms (f_{0,0}(0) = 2).
    """
    if k < 0 or j < k:
        raise ValueError(f"pattern_ft needs j >= k >= 0, got j={j}, k={k}")
    t = np.asarray(t, dtype=float)
    res = math.pi * (-1j) ** (j - k) * _ft_magnitude(j, k, t)
    return complex(res) if np.ndim(res) == 0 else res


@functools.lru_cache(maxsize=256)
def tail_cutoff(eta: float, N: int, tol: float = TAIL_TOL) -> float:
    """Frequency T beyond which every |f~^eta_{j,k}(t)|, j, k < N, is below ``tol``.

    The integrand decays like a polynomial times exp(-(2 eta - 1) t^2 / (4 eta));
    the cutoff is located by scanning that envelope outward.
    """
    gamma = efficiency_gamma(eta)
    t = np.arange(0.0, 200.0, 0.05)
    env = np.zeros_like(t)
    for j in range(N):
        for k in range(j + 1):
            g = np.abs(_ft_magnitude(j, k, t, gamma))
            np.maximum(env, math.pi * g, out=env)
    above = np.nonzero(env >= tol)[0]
    T = t[above[-1] + 1] if above.size else t[1]
    return float(math.ceil(T / PANEL_WIDTH) * PANEL_WIDTH)


def _quadrature_nodes(T: float) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.legendre.leggauss(PANEL_NODES)
    npan = int(round(T / PANEL_WIDTH))
    left = np.arange(npan) * PANEL_WIDTH
    h = 0.5 * PANEL_WIDTH
    t = (left[:, None] + h * (z[None, :] + 1.0)).ravel()
    wt = np.tile(h * w, npan)
    return t, wt


def _inverse_transform(g_pos: np.ndarray, g_neg: np.ndarray, d: int, t: np.ndarray, w: np.ndarray,
                       x: np.ndarray) -> np.ndarray:
    """(1/2pi) * integral over the real line of pi (-i)^d g(t) e^{-itx} dt.

    ``g_pos``/``g_neg`` hold g on the nodes t and -t; the two halves are summed
    separately so that the imaginary residue is an honest check.
    """
    phase = (-1j) ** d
    out = np.empty(x.shape, dtype=complex)
    chunk = 2048
    for s in range(0, x.size, chunk):
        xs = x[s:s + chunk]
        e = np.exp(-1j * np.outer(xs, t))
        acc = e @ (w * g_pos) + np.conj(e) @ (w * g_neg)
        out[s:s + chunk] = 0.5 * phase * acc
    if out.size and np.max(np.abs(out.imag)) > IMAG_TOL:
        raise ArithmeticError(f"inverse transform has imaginary residue {np.max(np.abs(out.imag)):.3e}")
    return out.real


def _pattern_values(j: int, k: int, eta: float, x: np.ndarray, T: float | None = None) -> np.ndarray:
    if j < k:
        j, k = k, j
    gamma = efficiency_gamma(eta)
    if T is None:
        T = tail_cutoff(eta, j + 1)
    t, w = _quadrature_nodes(T)
    g_pos = _ft_magnitude(j, k, t, gamma)
    g_neg = _ft_magnitude(j, k, -t, gamma)
    return _inverse_transform(g_pos, g_neg, j - k, t, w, x)


def pattern_eval(j: int, k: int, eta: float, x):
    """Noise-corrected pattern function f^eta_{j,k}(x).

    Symmetric in (j, k).  At eta = 1 this is the plain pattern function.
    """
    if j < 0 or k < 0:
        raise ValueError("pattern indices must be nonnegative")
    check_eta(eta)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    res = _pattern_values(j, k, eta, xa.ravel()).reshape(xa.shape)
    return float(res[0]) if np.ndim(x) == 0 else res


def pattern_l2_norm_sq(j: int, k: int, eta: float = 1.0) -> float:
    """||f^eta_{j,k}||_2^2 via Plancherel: (1/2pi) integral |f~^eta|^2 dt."""
    if j < k:
        j, k = k, j
    gamma = efficiency_gamma(eta)
    t, w = _quadrature_nodes(tail_cutoff(eta, j + 1))
    g = math.pi * _ft_magnitude(j, k, t, gamma)
    # integrand is even; the half line is doubled
    return float(2.0 * np.dot(w, g * g) / (2.0 * math.pi))


# ---------------------------------------------------------------------------
# Cross-check through regular and irregular wave functions

_MAX_RECURRENCE_INDEX = 5
_P = np.polynomial.Polynomial


def _irregular_coeffs(jmax: int) -> list[tuple[np.polynomial.Polynomial, np.polynomial.Polynomial]]:
    """phi_j = A_j(x) e^{-x^2/2} Erfi(x) + B_j(x) e^{x^2/2}, for j <= jmax.

    phi_0 = pi^{3/4} e^{-x^2/2} Erfi(x) (so that d/dx(psi_0 phi_0) = f_{0,0});
    higher orders follow from the raising relation
    phi_{j+1} = (x phi_j - phi_j') / sqrt(2 (j + 1)).
    """
    x = _P([0.0, 1.0])
    A, B = _P([math.pi ** 0.75]), _P([0.0])
    out = [(A, B)]
    for j in range(jmax):
        c = math.sqrt(2.0 * (j + 1))
        A, B = (2 * x * A - A.deriv()) / c, (-B.deriv() - (2.0 / math.sqrt(math.pi)) * A) / c
        out.append((A, B))
    return out


_IRREGULAR = _irregular_coeffs(_MAX_RECURRENCE_INDEX + 1)


def _irregular(j: int, x: np.ndarray) -> np.ndarray:
    A, B = _IRREGULAR[j]
    return A(x) * np.exp(-0.5 * x * x) * erfi(x) + B(x) * np.exp(0.5 * x * x)


def recurrence_check(j: int, k: int, x):
    """Plain pattern function f_{j,k}(x) from
    f_{j,k} = 2x psi_k phi_j - sqrt(2(k+1)) psi_{k+1} phi_j - sqrt(2(j+1)) psi_k phi_{j+1}.

    Only for cross-checking; phi_j grows like e^{x^2/2}, so |x| <= 3 is enforced.
    """
    if j < k or k < 0:
        raise ValueError(f"recurrence_check needs j >= k >= 0, got j={j}, k={k}")
    if j > _MAX_RECURRENCE_INDEX:
        raise ValueError(f"closed-form irregular functions only available for j <= {_MAX_RECURRENCE_INDEX}")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 3.0):
        raise ValueError("recurrence_check is restricted to |x| <= 3")
    psi = fock_all(k + 1, xa)
    pj, pj1 = _irregular(j, xa), _irregular(j + 1, xa)
    res = (2 * xa * psi[k] * pj - math.sqrt(2.0 * (k + 1)) * psi[k + 1] * pj
           - math.sqrt(2.0 * (j + 1)) * psi[k] * pj1)
    return float(res) if res.ndim == 0 else res


# ---------------------------------------------------------------------------
# Tabulation


def pair_index(N: int) -> list[tuple[int, int]]:
    """Stored (j, k) pairs with 0 <= k <= j < N, in row-major order."""
    return [(j, k) for j in range(N) for k in range(j + 1)]


@dataclass(frozen=True, eq=False)
class PatternTable:
    """Grid of f^eta_{j,k} values for all 0 <= k <= j < N.

    ``values[p]`` holds the function for ``pairs[p]`` on the uniform grid
    ``x_min + step * arange(values.shape[1])``.  Off-grid evaluation uses a
    cubic spline; points outside the grid are evaluated by quadrature.
    """

    eta: float
    N: int
    x_min: float
    x_max: float
    step: float
    values: np.ndarray
    T: float
    pairs: list[tuple[int, int]] = field(init=False)
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pairs", pair_index(self.N))
        if self.values.shape[0] != len(self.pairs):
            raise ValueError("table values do not match the pair layout")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("pattern table contains non-finite values")
        self.values.setflags(write=False)
        object.__setattr__(self, "_spline", CubicSpline(self.grid, self.values, axis=1))

    @property
    def grid(self) -> np.ndarray:
        return self.x_min + self.step * np.arange(self.values.shape[1])

    @property
    def gamma(self) -> float:
        return efficiency_gamma(self.eta)

    def index(self, j: int, k: int) -> int:
        if j < k:
            j, k = k, j
        if j >= self.N:
            raise IndexError(f"pair ({j}, {k}) outside table with N={self.N}")
        return j * (j + 1) // 2 + k

    def evaluate(self, x) -> np.ndarray:
        """All stored functions at ``x``; shape (len(pairs), len(x))."""
        x = np.asarray(x, dtype=float).ravel()
        out = self._spline(x)
        outside = (x < self.x_min) | (x > self.x_max)
        if np.any(outside):
            xo = x[outside]
            t, w = _quadrature_nodes(self.T)
            for p, (j, k) in enumerate(self.pairs):
                g_pos = _ft_magnitude(j, k, t, self.gamma)
                g_neg = _ft_magnitude(j, k, -t, self.gamma)
                out[p, outside] = _inverse_transform(g_pos, g_neg, j - k, t, w, xo)
        return out

    def value(self, j: int, k: int, x):
        x = np.asarray(x, dtype=float)
        res = self.evaluate(x.ravel())[self.index(j, k)].reshape(x.shape)
        return float(res) if res.ndim == 0 else res

    def to_csv(self, path) -> None:
        """Export as rows ``j,k,x,value``."""
        grid = self.grid
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "k", "x", "value"])
            for p, (j, k) in enumerate(self.pairs):
                for xv, v in zip(grid, self.values[p]):
                    w.writerow([j, k, repr(float(xv)), repr(float(v))])


def build_table(eta: float, N: int, x_max: float = 8.0, step: float = 0.01) -> PatternTable:
    """Tabulate f^eta_{j,k} for 0 <= k <= j < N on [-x_max, x_max]."""
    eta = check_eta(eta)
    if N < 1:
        raise ValueError("bandwidth N must be >= 1")
    if step <= 0:
        raise ValueError("grid step must be positive")
    if x_max <= 0:
        raise ValueError("x_max must be positive")
    npts = int(round(2 * x_max / step)) + 1
    grid = -x_max + step * np.arange(npts)
    T = tail_cutoff(eta, N)
    t, w = _quadrature_nodes(T)
    gamma = efficiency_gamma(eta)
    pairs = pair_index(N)
    values = np.empty((len(pairs), npts))
    # one shared kernel matrix; rows grouped by j - k parity of the phase
    for s in range(0, npts, 1024):
        xs = grid[s:s + 1024]
        e = np.exp(-1j * np.outer(xs, t))
        ec = np.conj(e)
        for p, (j, k) in enumerate(pairs):
            g_pos = w * _ft_magnitude(j, k, t, gamma)
            g_neg = w * _ft_magnitude(j, k, -t, gamma)
            acc = 0.5 * (-1j) ** (j - k) * (e @ g_pos + ec @ g_neg)
            if np.max(np.abs(acc.imag)) > IMAG_TOL:
                raise ArithmeticError(f"imaginary residue in f_({j},{k})")
            values[p, s:s + 1024] = acc.real
    return PatternTable(eta=eta, N=N, x_min=-x_max, x_max=-x_max + step * (npts - 1), step=step,
                        values=values, T=T)


def _cache_key(eta: float, N: int, x_max: float, step: float) -> str:
    raw = f"v1|{eta!r}|{N}|{x_max!r}|{step!r}|{PANEL_WIDTH}|{PANEL_NODES}|{TAIL_TOL}"
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def load_or_build_table(eta: float, N: int, x_max: float = 8.0, step: float = 0.01,
                        cache_dir: str | os.PathLike | None = None) -> PatternTable:
    """Like :func:`build_table`, reusing ``.npz`` files from ``cache_dir``.

    ``cache_dir`` defaults to the ``QHT_GOF_CACHE`` environment variable; with
    neither set, nothing is cached.
    """
    memo_key = (float(eta), int(N), float(x_max), float(step))
    if memo_key in _MEMO:
        return _MEMO[memo_key]
    table = _load_or_build(eta, N, x_max, step, cache_dir or os.environ.get("QHT_GOF_CACHE"))
    _MEMO[memo_key] = table
    return table


_MEMO: dict[tuple, PatternTable] = {}


def _load_or_build(eta, N, x_max, step, cache_dir) -> PatternTable:
    if not cache_dir:
        return build_table(eta, N, x_max, step)
    path = Path(cache_dir) / f"pattern_{_cache_key(float(eta), N, float(x_max), float(step))}.npz"
    if path.exists():
        with np.load(path) as z:
            return PatternTable(eta=float(z["eta"]), N=int(z["N"]), x_min=float(z["x_min"]),
                                x_max=float(z["x_max"]), step=float(z["step"]),
                                values=z["values"].copy(), T=float(z["T"]))
    table = build_table(eta, N, x_max, step)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, eta=table.eta, N=table.N, x_min=table.x_min, x_max=table.x_max,
             step=table.step, values=table.values, T=table.T)
    os.replace(tmp, path)
    return table
