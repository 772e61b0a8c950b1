"""Truncated density matrices in the Fock basis for the reference states."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.special import eval_hermite, gammaln

__all__ = [
    "DensityMatrix",
    "StateClassParams",
    "StateSpec",
    "class_margin",
    "l2_distance_sq",
    "make_state",
    "parse_state",
    "purity",
]

DEFAULT_DIM = 40
STATE_KINDS = ("vacuum", "single_photon", "coherent", "squeezed", "thermal", "cat")
_PARAMS = {
    "vacuum": (),
    "single_photon": (),
    "coherent": ("q0",),
    "squeezed": ("M", "xi"),
    "thermal": ("beta",),
    "cat": ("q0",),
}


@dataclass(frozen=True)
class StateSpec:
    """State descriptor: a kind plus its parameters, e.g. ``coherent(q0=3)``."""

    kind: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise ValueError(f"unknown state kind {self.kind!r}; expected one of {', '.join(STATE_KINDS)}")
        names = tuple(name for name, _ in self.params)
        if set(names) != set(_PARAMS[self.kind]):
            raise ValueError(f"state {self.kind!r} takes parameters {_PARAMS[self.kind]}, got {names}")
        object.__setattr__(self, "params", tuple(sorted((n, float(v)) for n, v in self.params)))

    def __getitem__(self, name: str) -> float:
        return dict(self.params)[name]

    @property
    def label(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{n}={v:.17g}" for n, v in self.params)
        return f"{self.kind}({inner})"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StateSpec":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, tuple(d.items()))


def _number(text: str) -> float:
    text = text.strip()
    if text.startswith("sqrt(") and text.endswith(")"):
        return math.sqrt(float(text[5:-1]))
    return float(text)


def parse_state(text: str | Mapping[str, Any] | StateSpec) -> StateSpec:
    """Parse a state descriptor.

    Accepted forms: a mapping ``{"kind": "coherent", "q0": 3}``, a label such as
    ``coherent(q0=3)``, or the short forms ``coherent:3``, ``cat:3``,
    ``thermal:1``, ``squeezed:M,xi``.  Numbers may be written ``sqrt(6)``.
    """
    if isinstance(text, StateSpec):
        return text
    if isinstance(text, Mapping):
        return StateSpec.from_dict(text)
    s = text.strip()
    m = re.fullmatch(r"(\w+)\((.*)\)", s)
    if m and m.group(1) in _PARAMS:
        kind, inner = m.groups()
        params = []
        for part in filter(None, inner.split(",")):
            name, eq, val = part.partition("=")
            if not eq:
                raise ValueError(f"cannot parse state parameter {part!r}")
            params.append((name.strip(), _number(val)))
        return StateSpec(kind.strip(), tuple(params))
    kind, _, rest = s.partition(":")
    kind = kind.strip()
    if kind not in _PARAMS:
        raise ValueError(f"unknown state kind {kind!r}")
    values = [_number(v) for v in rest.split(",")] if rest else []
    names = _PARAMS[kind]
    if len(values) != len(names):
        raise ValueError(f"state {kind!r} needs {len(names)} parameter(s) {names}, got {len(values)}")
    return StateSpec(kind, tuple(zip(names, values)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Truncated density matrix rho_{j,k}, 0 <= j, k < dim."""

    entries: np.ndarray
    label: str = ""
    spec: StateSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def is_psd(self, tol: float = 1e-8) -> bool:
        return self.min_eigenvalue() >= -tol

    def padded(self, dim: int) -> np.ndarray:
        if dim < self.dim:
            return self.entries[:dim, :dim]
        out = np.zeros((dim, dim), dtype=complex)
        out[: self.dim, : self.dim] = self.entries
        return out

    def to_csv(self, path) -> None:
        """Write rows ``j,k,re,im``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "k", "re", "im"])
            for j in range(self.dim):
                for k in range(self.dim):
                    z = self.entries[j, k]
                    w.writerow([j, k, repr(float(z.real)), repr(float(z.imag))])


@dataclass(frozen=True)
class StateClassParams:
    """Decay class |rho_{j,k}| <= L exp(-B (j + k)^{r/2})."""

    B: float
    r: float
    L: float

    def __post_init__(self):
        if self.B <= 0:
            raise ValueError("B must be positive")
        if not (0 < self.r <= 2):
            raise ValueError("r must lie in (0, 2]")
        if self.L <= 0:
            raise ValueError("L must be positive")


def _coherent_vector(q0: float, dim: int) -> np.ndarray:
    # amplitude alpha = q0 / sqrt(2); c_j = e^{-alpha^2/2} alpha^j / sqrt(j!)
    a = q0 / math.sqrt(2.0)
    j = np.arange(dim)
    if a == 0.0:
        v = np.zeros(dim)
        v[0] = 1.0
        return v
    logmag = j * math.log(abs(a)) - 0.5 * gammaln(j + 1)
    return np.sign(a) ** j * np.exp(logmag - 0.5 * a * a)


def make_state(kind: str | StateSpec | Mapping[str, Any], dim: int = DEFAULT_DIM) -> DensityMatrix:
    """Build the truncated density matrix of a reference state.

    >>> make_state("vacuum", 3).entries[0, 0]
    (1+0j)
    """
    spec = parse_state(kind)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rho = np.zeros((dim, dim), dtype=complex)
    if spec.kind == "vacuum":
        rho[0, 0] = 1.0
    elif spec.kind == "single_photon":
        if dim > 1:
            rho[1, 1] = 1.0
    elif spec.kind == "coherent":
        v = _coherent_vector(spec["q0"], dim)
        rho[:] = np.outer(v, v)
    elif spec.kind == "cat":
        q0 = spec["q0"]
        if q0 <= 0:
            raise ValueError("cat state requires q0 > 0")
        a = q0 / math.sqrt(2.0)
        j = np.arange(dim)
        # 2 a^{j+k} / (sqrt(j! k!) (e^{q0^2/2} + e^{-q0^2/2})) on even j, k
        log_norm = math.log(2.0) - (0.5 * q0 * q0 + math.log1p(math.exp(-q0 * q0)))
        v = np.exp(j * math.log(a) - 0.5 * gammaln(j + 1) + 0.5 * log_norm)
        v[j % 2 == 1] = 0.0
        rho[:] = np.outer(v, v)
    elif spec.kind == "thermal":
        beta = spec["beta"]
        if beta <= 0:
            raise ValueError("thermal state requires beta > 0")
        k = np.arange(dim)
        rho[k, k] = -math.expm1(-beta) * np.exp(-beta * k)
    elif spec.kind == "squeezed":
        rho[:] = _squeezed(spec["M"], spec["xi"], dim)
    return DensityMatrix(rho, label=spec.label, spec=spec)


def _squeezed(M: float, xi: float, dim: int) -> np.ndarray:
    """rho_{j,k} = C (tanh(xi)/2)^{j+k} H_j(delta) H_k(delta) / sqrt(j! k!), C from trace = 1."""
    sh = math.sinh(xi)
    if M < sh * sh:
        raise ValueError(f"squeezed state requires M >= sinh^2(xi) = {sh * sh:.6g}, got M={M}")
    if xi <= 0:
        raise ValueError("squeezed state requires xi > 0 (delta involves 1/sinh(2 xi))")
    alpha = math.sqrt(M - sh * sh) / (math.cosh(xi) - sh)
    delta = math.sqrt(alpha / math.sinh(2 * xi))
    j = np.arange(dim)
    v = (0.5 * math.tanh(xi)) ** j * eval_hermite(j, delta) * np.exp(-0.5 * gammaln(j + 1))
    if not np.all(np.isfinite(v)) or not np.any(v):
        raise ValueError("squeezed state coefficients are not finite for these parameters")
    # trace of the outer product; the tail must be negligible for normalization to mean anything
    tail = float(np.sum(v[-3:] ** 2) / np.sum(v**2))
    if tail > 1e-10:
        raise ValueError(f"squeezed state does not converge at dim={dim} (relative tail {tail:.2e})")
    v /= math.sqrt(float(np.sum(v**2)))
    return np.outer(v, v)


def l2_distance_sq(rho: DensityMatrix, tau: DensityMatrix) -> float:
    """Squared Frobenius distance sum |rho_{j,k} - tau_{j,k}|^2, zero-padding the smaller matrix."""
    dim = max(rho.dim, tau.dim)
    diff = rho.padded(dim) - tau.padded(dim)
    return float(np.sum(np.abs(diff) ** 2))


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2) = sum |rho_{j,k}|^2 for Hermitian rho."""
    return float(np.sum(np.abs(rho.entries) ** 2))


def class_margin(rho: DensityMatrix, params: StateClassParams) -> float:
    """max_{j,k} |rho_{j,k}| - L exp(-B (j + k)^{r/2}); nonpositive means the bound holds."""
    j = np.arange(rho.dim)
    s = (j[:, None] + j[None, :]).astype(float)
    bound = params.L * np.exp(-params.B * s ** (params.r / 2.0))
    return float(np.max(np.abs(rho.entries) - bound))
