"""Case A / case B style Monte Carlo studies driven by a JSON experiment spec.

A run calibrates the thresholds nu(alpha) on replicates drawn from the null
state, then draws an independent set of replicates for every alternative and
records medians, MSE against the true distance, and rejection rates.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import __version__
from .estimator import make_config
from .pattern_kernel import check_eta
from .quantum_states import StateSpec, l2_distance_sq, make_state, parse_state
from .testing import CALIBRATION, EVALUATION, MonteCarloReport, iter_mn, threshold_from_values

__all__ = ["ExperimentSpec", "FULL_RUNS", "load_spec", "preset", "run_experiment", "spec_hash"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FULL_RUNS = 1000
DESK_RUNS = 200
TRUTH_DIM = 40

_CASES = {
    "A": ({"kind": "vacuum"}, [{"kind": "vacuum"}, {"kind": "single_photon"}, {"kind": "cat", "q0": 3.0}]),
    "B": ({"kind": "coherent", "q0": 3.0},
          [{"kind": "coherent", "q0": 3.0}, {"kind": "coherent", "q0": 6 ** 0.5}, {"kind": "cat", "q0": 3.0}]),
}


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    case_id: Literal["A", "B", "custom"] = "custom"
    tau: dict[str, Any]
    alternatives: list[dict[str, Any]] = Field(min_length=1)
    eta: float
    N: int = Field(ge=1)
    n: int = Field(ge=2)
    runs: int = Field(ge=100)
    calibration_runs: int | None = Field(default=None, ge=100)
    alphas: list[float] = Field(default_factory=lambda: [0.01, 0.05], min_length=1)
    seed: int = Field(ge=0, lt=2**64)
    output_dir: str | None = None

    @field_validator("tau", mode="before")
    @classmethod
    def _tau(cls, v):
        return parse_state(v).to_dict()

    @field_validator("eta")
    @classmethod
    def _eta(cls, v):
        return check_eta(v)

    @field_validator("alternatives", mode="before")
    @classmethod
    def _alts(cls, v):
        if not isinstance(v, list):
            raise ValueError("alternatives must be a list of state descriptors")
        return [parse_state(s).to_dict() for s in v]

    @field_validator("alphas")
    @classmethod
    def _alphas(cls, v):
        for a in v:
            if not (0 < a < 1):
                raise ValueError(f"alpha must lie in (0, 1), got {a}")
        return v

    @property
    def n_calibration(self) -> int:
        return self.calibration_runs or self.runs

    def check_levels(self) -> None:
        for a in self.alphas:
            if a * self.n_calibration < 1:
                raise ValueError(f"alpha={a} needs at least {int(np.ceil(1 / a))} calibration runs")


def preset(case: str, eta: float, N: int, n: int = 50_000, runs: int = DESK_RUNS, seed: int = 2009,
           output_dir: str | None = None) -> ExperimentSpec:
    """The study's case A (null = vacuum) or case B (null = coherent-3) at given (eta, N)."""
    tau, alts = _CASES[case]
    return ExperimentSpec(case_id=case, tau=tau, alternatives=alts, eta=eta, N=N, n=n, runs=runs,
                          seed=seed, output_dir=output_dir)


def load_spec(path) -> ExperimentSpec:
    return ExperimentSpec.model_validate_json(Path(path).read_text())


def spec_hash(spec: ExperimentSpec) -> str:
    canon = json.dumps(spec.model_dump(exclude={"output_dir"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _provenance(spec: ExperimentSpec) -> str:
    return f"# qht-gof {__version__}, spec_sha256={spec_hash(spec)}, seed={spec.seed}"


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _replicates_to_csv(path: Path, header: str, values) -> np.ndarray:
    """Stream replicate values to ``path`` as they arrive; returns them as an array."""
    out = []
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write("index,mn\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{v!r}\n")
            fh.flush()
            out.append(v)
    return np.array(out)


def run_experiment(spec: ExperimentSpec, output_dir=None, jobs: int = 1) -> list[dict[str, Any]]:
    """Run a full study and write its files; returns the summary rows."""
    spec.check_levels()
    out = Path(output_dir or spec.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(spec)
    tau = make_state(spec.tau, dim=max(TRUTH_DIM, spec.N))
    cfg = make_config(tau, spec.eta, spec.N)
    log.info("calibrating: %d replicates under %s", spec.n_calibration, tau.label)

    cal = _replicates_to_csv(
        out / "calibration_replicates.csv", prov,
        iter_mn(tau, cfg, spec.n, spec.n_calibration, spec.seed, CALIBRATION, jobs))
    nus = {a: threshold_from_values(cal, a) for a in spec.alphas}
    (out / "thresholds.json").write_text(json.dumps({
        "provenance": prov[2:], "case": spec.case_id, "tau": tau.label, "eta": spec.eta, "N": spec.N,
        "n": spec.n, "runs": spec.n_calibration, "seed": spec.seed,
        "nu": {repr(a): nu for a, nu in nus.items()}}, indent=2) + "\n")

    rows = []
    for i, alt in enumerate(spec.alternatives):
        rho = make_state(alt, dim=max(TRUTH_DIM, spec.N))
        log.info("evaluating %s: %d replicates", rho.label, spec.runs)
        values = _replicates_to_csv(
            out / f"replicates_{i}_{_slug(rho.label)}.csv", prov,
            iter_mn(rho, cfg, spec.n, spec.runs, spec.seed, EVALUATION, jobs))
        truth = l2_distance_sq(rho, tau)
        is_null = StateSpec.from_dict(alt) == StateSpec.from_dict(spec.tau)
        for a, nu in nus.items():
            rep = MonteCarloReport(values, spec.seed, truth=truth, nu=nu, is_null=is_null)
            row = {
                "case": spec.case_id, "state": rho.label, "tau": tau.label, "eta": spec.eta,
                "N": spec.N, "n": spec.n, "alpha": a, "nu": nu, "runs": rep.runs,
                "median": rep.median, "mse": rep.mse, "truth": truth,
                "kind": "level" if is_null else "power", "level_or_power": rep.level_or_power,
                "seed": spec.seed,
            }
            rows.append(row)
            (out / f"report_{i}_{_slug(rho.label)}_alpha{a:g}.json").write_text(
                json.dumps({"provenance": prov[2:], **row}, indent=2) + "\n")

    fields = ["case", "state", "tau", "eta", "N", "n", "runs", "truth", "median", "mse", "alpha", "nu",
              "kind", "level_or_power", "seed"]
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write(prov + "\n")
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    return rows
