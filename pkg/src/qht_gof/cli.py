"""Command-line interface: ``qht-gof <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure (including interrupts), 2 invalid input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from .estimator import compute_mn, make_config
from .experiments import FULL_RUNS, load_spec, run_experiment
from .pattern_kernel import check_eta, load_or_build_table
from .quantum_states import l2_distance_sq, make_state
from .simulator import generate, load_dataset, save_dataset
from .testing import CALIBRATION, iter_mn, threshold_from_values

log = logging.getLogger("qht_gof")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _provenance(args: dict, seed=None) -> str:
    canon = json.dumps(args, sort_keys=True, separators=(",", ":"), default=str)
    digest = hashlib.sha256(canon.encode()).hexdigest()
    return f"# qht-gof {__version__}, spec_sha256={digest}, seed={'' if seed is None else seed}"


def _u64(text: str) -> int:
    v = int(text, 0)
    if not (0 <= v < 2**64):
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _open_out(path):
    if path is None or str(path) == "-":
        return sys.stdout, False
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w"), True


# ---------------------------------------------------------------------------
# subcommands


def cmd_patterns(a) -> int:
    check_eta(a.eta)
    if a.j < 0 or a.k < 0:
        raise ValueError("pattern indices must be non-negative")
    if a.step <= 0 or a.x_max <= a.x_min:
        raise ValueError("need step > 0 and x_max > x_min")
    N = max(a.j, a.k) + 1
    table = load_or_build_table(a.eta, N)
    x = np.round(np.arange(a.x_min, a.x_max + 0.5 * a.step, a.step), 12)
    vals = table.value(a.j, a.k, x) / math.pi
    prov = _provenance({"cmd": "patterns", "j": a.j, "k": a.k, "eta": a.eta, "x_min": a.x_min,
                        "x_max": a.x_max, "step": a.step})
    fh, close = _open_out(a.out)
    try:
        fh.write(prov + "\n")
        fh.write("x,pattern\n")
        for xv, v in zip(x, vals):
            fh.write(f"{float(xv)!r},{float(v)!r}\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_distance(a) -> int:
    rho = make_state(a.state_a, dim=a.dim)
    tau = make_state(a.state_b, dim=a.dim)
    print(repr(l2_distance_sq(rho, tau)))
    return EXIT_OK


def cmd_simulate(a) -> int:
    ds = generate(a.state, a.n, a.eta, a.seed)
    if a.out is None:
        raise ValueError("simulate needs --out <file>")
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, a.out)
    log.info("wrote %d records to %s", ds.n, a.out)
    return EXIT_OK


def cmd_estimate(a) -> int:
    ds = load_dataset(a.data)
    tau = make_state(a.tau, dim=max(40, a.N))
    mn = compute_mn(ds, make_config(tau, ds.eta, a.N))
    print(repr(mn))
    return EXIT_OK


def cmd_calibrate(a) -> int:
    check_eta(a.eta)
    runs = FULL_RUNS if a.paper_scale else a.runs
    if runs < 100:
        raise ValueError("calibration needs runs >= 100")
    for al in a.alpha:
        if not (0 < al < 1) or al * runs < 1:
            raise ValueError(f"alpha={al} must lie in (0, 1) with alpha * runs >= 1")
    tau = make_state(a.tau, dim=max(40, a.N))
    cfg = make_config(tau, a.eta, a.N)
    out = Path(a.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance({"cmd": "calibrate", "tau": tau.label, "eta": a.eta, "N": a.N, "n": a.n,
                        "runs": runs, "alpha": a.alpha}, a.seed)
    values = []
    with open(out / "calibration_replicates.csv", "w") as fh:
        fh.write(prov + "\nindex,mn\n")
        for i, v in enumerate(iter_mn(tau, cfg, a.n, runs, a.seed, CALIBRATION, a.jobs)):
            fh.write(f"{i},{v!r}\n")
            fh.flush()
            values.append(v)
    nus = {repr(al): threshold_from_values(values, al) for al in a.alpha}
    (out / "thresholds.json").write_text(json.dumps(
        {"provenance": prov[2:], "tau": tau.label, "eta": a.eta, "N": a.N, "n": a.n, "runs": runs,
         "seed": a.seed, "nu": nus}, indent=2) + "\n")
    for al, nu in nus.items():
        print(f"alpha={al} nu={nu!r}")
    return EXIT_OK


def cmd_run(a) -> int:
    spec = load_spec(a.spec)
    updates = {}
    if a.paper_scale:
        updates.update(runs=FULL_RUNS, calibration_runs=FULL_RUNS)
    if a.seed is not None:
        updates["seed"] = a.seed
    if updates:
        spec = spec.model_validate({**spec.model_dump(), **updates})
    rows = run_experiment(spec, output_dir=a.out, jobs=a.jobs)
    for r in rows:
        print(f"{r['state']:<28} alpha={r['alpha']:<5g} median={r['median']: .4f} "
              f"mse={r['mse']:.3g} {r['kind']}={r['level_or_power']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qht-gof", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("patterns", help="tabulate pi^-1 f^eta_{j,k}(x) as CSV")
    s.add_argument("j", type=int)
    s.add_argument("k", type=int)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--x-min", type=float, default=-8.0)
    s.add_argument("--x-max", type=float, default=8.0)
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_patterns)

    s = sub.add_parser("distance", help="squared L2 distance between two states")
    s.add_argument("state_a")
    s.add_argument("state_b")
    s.add_argument("--dim", type=_positive_int, default=40)
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("simulate", help="simulate a noisy homodyne dataset")
    s.add_argument("state")
    s.add_argument("--n", type=_positive_int, default=50_000)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="M_n for a dataset against a null state")
    s.add_argument("data")
    s.add_argument("--tau", required=True)
    s.add_argument("--N", type=_positive_int, required=True)
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("calibrate", help="Monte Carlo thresholds nu(alpha) under the null state")
    s.add_argument("--tau", required=True)
    s.add_argument("--eta", type=float, default=1.0)
    s.add_argument("--N", type=_positive_int, required=True)
    s.add_argument("--n", type=_positive_int, default=50_000)
    s.add_argument("--runs", type=int, default=200)
    s.add_argument("--alpha", type=float, nargs="+", default=[0.01, 0.05])
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.add_argument("--paper-scale", action="store_true", help=f"use {FULL_RUNS} runs")
    s.add_argument("--out", help="output directory (default .)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("run", help="run a full experiment from a JSON spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--seed", type=_u64, default=None, help="override the spec's seed")
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.add_argument("--paper-scale", action="store_true", help=f"use {FULL_RUNS} runs")
    s.add_argument("--out", help="output directory (default: the spec's output_dir)")
    s.set_defaults(func=cmd_run)
    return p


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "invalid experiment spec:\n" + "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"qht-gof: {_format_validation(exc)}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, FileNotFoundError) as exc:
        print(f"qht-gof: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        print("qht-gof: interrupted; partial results were flushed", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"qht-gof: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
