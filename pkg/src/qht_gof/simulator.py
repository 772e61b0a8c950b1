"""Noisy homodyne data: quadrature densities, samplers and the detection channel.

Records are (Y, Phi) with Phi ~ U[0, pi], X ~ p(.|Phi) and
Y = sqrt(eta) X + sqrt((1 - eta)/2) xi, xi standard normal.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .pattern_kernel import check_eta
from .quantum_states import DensityMatrix, StateSpec, parse_state

__all__ = [
    "BLOCK_SIZE",
    "EnvelopeError",
    "QhtDataset",
    "UnsupportedStateError",
    "block_rng",
    "density_eval",
    "generate",
    "load_dataset",
    "sample_quadrature",
    "save_dataset",
]

# records per RNG stream; datasets do not depend on how blocks are scheduled
BLOCK_SIZE = 4096
SQRT_PI = math.sqrt(math.pi)
SINGLE_PHOTON_ENVELOPE = 3.0


class UnsupportedStateError(ValueError):
    """The state has no validated quadrature density / sampler."""


class EnvelopeError(RuntimeError):
    """A rejection sampler's target exceeded its envelope (implementation bug)."""


def _spec(state) -> StateSpec:
    if isinstance(state, DensityMatrix):
        if state.spec is None:
            raise UnsupportedStateError("density matrix carries no state descriptor")
        return state.spec
    return parse_state(state)


def density_eval(state, x, phi):
    """Quadrature density p(x | phi) of a reference state."""
    s = _spec(state)
    x = np.asarray(x, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((phi < 0) | (phi > math.pi)):
        raise ValueError("phase must lie in [0, pi]")
    if s.kind == "vacuum":
        res = np.exp(-x * x) / SQRT_PI + 0.0 * phi
    elif s.kind == "single_photon":
        res = 2 * x * x * np.exp(-x * x) / SQRT_PI + 0.0 * phi
    elif s.kind == "coherent":
        res = np.exp(-(x - s["q0"] * np.cos(phi)) ** 2) / SQRT_PI
    elif s.kind == "thermal":
        th = math.tanh(s["beta"] / 2)
        res = math.sqrt(th / math.pi) * np.exp(-x * x * th) + 0.0 * phi
    elif s.kind == "cat":
        q0 = s["q0"]
        c, sn = np.cos(phi), np.sin(phi)
        num = (np.exp(-(x - q0 * c) ** 2) + np.exp(-(x + q0 * c) ** 2)
               + 2 * np.cos(2 * q0 * x * sn) * np.exp(-x * x - (q0 * c) ** 2))
        res = num / (2 * SQRT_PI * (1 + math.exp(-q0 * q0)))
    else:
        raise UnsupportedStateError(f"no validated quadrature density for {s.kind!r} states")
    return float(res) if res.ndim == 0 else res


def _rejection(target, propose, ratio, size: int, rng: np.random.Generator) -> np.ndarray:
    """Fill ``size`` draws; ``ratio(x, idx)`` = target / (c * envelope) must be <= 1."""
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        x = propose(pending, rng)
        r = ratio(x, pending)
        if np.any(r > 1.0 + 1e-12):
            raise EnvelopeError(f"{target} density exceeds its envelope (ratio {r.max():.6g})")
        ok = rng.random(pending.size) < r
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
    return out


def sample_quadrature(state, phi, rng: np.random.Generator) -> np.ndarray:
    """One draw of X ~ p(.|phi) per entry of ``phi``."""
    s = _spec(state)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if np.any((phi < 0) | (phi > math.pi)):
        raise ValueError("phase must lie in [0, pi]")
    n = phi.size
    sd = math.sqrt(0.5)
    if s.kind == "vacuum":
        return rng.normal(0.0, sd, n)
    if s.kind == "coherent":
        return s["q0"] * np.cos(phi) + rng.normal(0.0, sd, n)
    if s.kind == "thermal":
        return rng.normal(0.0, math.sqrt(0.5 / math.tanh(s["beta"] / 2)), n)
    if s.kind == "single_photon":
        # 2x^2 e^{-x^2}/sqrt(pi) <= 3 * N(0, 1) density
        k = 2 * math.sqrt(2.0) / SINGLE_PHOTON_ENVELOPE
        return _rejection("single-photon",
                          lambda idx, g: g.normal(0.0, 1.0, idx.size),
                          lambda x, idx: k * x * x * np.exp(-0.5 * x * x),
                          n, rng)
    if s.kind == "cat":
        q0 = s["q0"]
        mean = q0 * np.cos(phi)
        sn = np.sin(phi)

        def propose(idx, g):
            sign = np.where(g.random(idx.size) < 0.5, 1.0, -1.0)
            return sign * mean[idx] + g.normal(0.0, sd, idx.size)

        def ratio(x, idx):
            # cat density over 2/(1+e^{-q0^2}) times the two-Gaussian mixture
            a = mean[idx]
            gp, gm = np.exp(-(x - a) ** 2), np.exp(-(x + a) ** 2)
            inter = 2 * np.cos(2 * q0 * x * sn[idx]) * np.exp(-x * x - a * a)
            return (gp + gm + inter) / (2 * (gp + gm))

        return _rejection("cat", propose, ratio, n, rng)
    raise UnsupportedStateError(f"sampling is not supported for {s.kind!r} states")


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for records [block * BLOCK_SIZE, (block + 1) * BLOCK_SIZE)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class QhtDataset:
    """n homodyne records (y, phi) with the configuration that produced them."""

    y: np.ndarray
    phi: np.ndarray
    eta: float
    state_label: str
    seed: int

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        phi = np.ascontiguousarray(self.phi, dtype=float)
        if y.shape != phi.shape or y.ndim != 1:
            raise ValueError("y and phi must be 1-d arrays of equal length")
        if np.any((phi < 0) | (phi > math.pi)):
            raise ValueError("every phase must lie in [0, pi]")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite quadrature reading")
        check_eta(self.eta)
        y.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "phi", phi)

    @property
    def n(self) -> int:
        return self.y.size

    def __len__(self) -> int:
        return self.n


def _generate_block(spec: StateSpec, size: int, eta: float, seed: int, block: int):
    rng = block_rng(seed, block)
    phi = math.pi * rng.random(size)
    x = sample_quadrature(spec, phi, rng)
    if eta == 1.0:
        return x, phi
    xi = rng.standard_normal(size)
    return math.sqrt(eta) * x + math.sqrt((1 - eta) / 2) * xi, phi


def generate(state, n: int, eta: float, seed: int) -> QhtDataset:
    """Simulate ``n`` i.i.d. noisy records for ``state``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    eta = check_eta(eta)
    seed = int(seed)
    if not (0 <= seed < 2**64):
        raise ValueError("seed must be an unsigned 64-bit integer")
    spec = _spec(state)
    ys, phis = [], []
    for b, start in enumerate(range(0, n, BLOCK_SIZE)):
        y, phi = _generate_block(spec, min(BLOCK_SIZE, n - start), eta, seed, b)
        ys.append(y)
        phis.append(phi)
    return QhtDataset(np.concatenate(ys), np.concatenate(phis), eta, spec.label, seed)


_HEADER = re.compile(r"#\s*qht-dataset v1, state=(?P<state>.*), eta=(?P<eta>[^,]+), "
                     r"n=(?P<n>\d+), seed=(?P<seed>\d+)(, qht-gof=[^,\s]+)?\s*$")


def save_dataset(ds: QhtDataset, path) -> None:
    """CSV: a ``# qht-dataset v1`` header line, a ``y,phi`` line, then one record per row."""
    with open(path, "w") as fh:
        fh.write(f"# qht-dataset v1, state={ds.state_label}, eta={ds.eta!r}, n={ds.n}, "
                 f"seed={ds.seed}, qht-gof={__version__}\n")
        fh.write("y,phi\n")
        for y, p in zip(ds.y, ds.phi):
            fh.write(f"{y:.17g},{p:.17g}\n")


def load_dataset(path) -> QhtDataset:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    m = _HEADER.match(lines[0])
    if not m:
        raise ValueError(f"{path}: malformed header {lines[0]!r}")
    body = lines[1:]
    if body and body[0].strip() == "y,phi":
        body = body[1:]
    body = [ln for ln in body if ln.strip()]
    n = int(m["n"])
    if len(body) != n:
        raise ValueError(f"{path}: header declares n={n} but file has {len(body)} records")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=float).reshape(-1, 2)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed record ({exc})") from None
    return QhtDataset(data[:, 0], data[:, 1], float(m["eta"]), m["state"], int(m["seed"]))
