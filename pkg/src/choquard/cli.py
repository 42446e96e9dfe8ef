"""Command-line front end.

Exit codes: 0 success, 1 failed verification suite, 2 invalid parameters or
wrong region, 3 I/O failure, 4 divergent iteration, 5 iteration limit reached.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import checks
from .errors import ChoquardError, ParameterError, RegionError, SolverConfigurationError
from .exponents import (DEFAULT_EPS_BOUNDARY, DEFAULT_MAX_J, EXISTENCE_WITH_DIRAC, ProblemParams,
                        classify, predicted_decay, tau_sequence)

log = logging.getLogger("choquard")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_MAX_ITER = 5
VERDICT_EXIT = {"Converged": EXIT_OK, "DivergedRiesz": EXIT_DIVERGED, "MaxIterations": EXIT_MAX_ITER}


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def dumps(obj) -> str:
    """JSON with shortest round-trip float reprs (at most 17 significant digits)."""
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False, allow_nan=False, default=_plain)


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    N: int = 3
    alpha: float = 2.0
    p: float = 2.0
    q: float = 0.5
    k: float = 1.0
    r_min: float = 1e-4
    r_max: float = 1e2
    n: int = 2048
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0
    output_dir: str = "choquard-out"

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ParameterError(f"need 0 < r_min < r_max, got {self.r_min}, {self.r_max}")
        if self.n < 16:
            raise ParameterError(f"n must be >= 16, got {self.n}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        self.params  # validates the equation parameters

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(self.N, self.alpha, self.p, self.q, self.k)

    def grid(self):
        from .grid import make_grid
        return make_grid(self.r_min, self.r_max, self.n, self.N)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_sources(cls, path: Optional[str], overrides: dict) -> "RunConfig":
        data = {}
        if path:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except OSError as exc:
                raise CLIError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
            except json.JSONDecodeError as exc:
                raise CLIError(f"config {path} is not valid JSON: {exc}", EXIT_INVALID) from exc
            if not isinstance(data, dict):
                raise CLIError("config must be a JSON object", EXIT_INVALID)
            unknown = sorted(set(data) - set(cls.keys()))
            if unknown:
                raise CLIError(f"unknown config keys: {', '.join(unknown)}", EXIT_INVALID)
        data.update({k: v for k, v in overrides.items() if v is not None})
        types = {f.name: f.type for f in fields(cls)}
        try:
            conv = {k: (int(v) if types[k] == "int" else str(v) if types[k] == "str" else float(v))
                    for k, v in data.items()}
            return cls(**conv)
        except (TypeError, ValueError) as exc:
            raise CLIError(str(exc), EXIT_INVALID) from exc

    def to_dict(self):
        return {k: getattr(self, k) for k in self.keys()}


# --- commands ----------------------------------------------------------------

def _params(args, k=0.0) -> ProblemParams:
    try:
        return ProblemParams(args.N, args.alpha, args.p, args.q, k)
    except ParameterError as exc:
        raise CLIError(str(exc), EXIT_INVALID) from exc


def verdict_line(params: ProblemParams, eps=DEFAULT_EPS_BOUNDARY) -> str:
    region = classify(params, eps)
    text = region.verdict
    if region.verdict == EXISTENCE_WITH_DIRAC:
        pred = predicted_decay(params)
        regime = f"regime {pred.regime}" if pred.regime else "no regime"
        text += f" ({regime}, decay exponent {pred.exponent:g})"
    if region.boundary:
        text += " [near boundary]"
    return text


def cmd_classify(args, out):
    params = _params(args)
    region = classify(params, args.eps)
    print(verdict_line(params, args.eps), file=out)
    if region.flags["regime_19"]:
        log.warning("regime 1.9 flagged: it is empty inside the existence region")
    print(dumps({"params": params.to_dict(), **region.to_dict()}), file=out)
    return EXIT_OK


def cmd_tau_seq(args, out):
    seq = tau_sequence(_params(args), args.max_j)
    print(dumps(seq.to_dict()), file=out)
    return EXIT_OK


PHASE_COLUMNS = ("p", "q", "verdict", "regime", "boundary", "weighted_sum_below_one",
                 "sum_below_lower_critical", "sum_below_upper_critical", "p_below_serrin")


def _axis(lo, hi, count):
    """Cell midpoints of ``count`` equal cells of ``(lo, hi)``."""
    return lo + (np.arange(count) + 0.5) * (hi - lo) / count


def phase_rows(N, alpha, p_range, q_range, resolution, eps=DEFAULT_EPS_BOUNDARY):
    res_p, res_q = resolution
    for p in _axis(*p_range, res_p):
        for q in _axis(*q_range, res_q):
            params = ProblemParams(N, alpha, float(p), float(q))
            region = classify(params, eps)
            regime = ""
            if region.verdict == EXISTENCE_WITH_DIRAC:
                regime = predicted_decay(params).regime or "none"
            m = region.margins
            yield (repr(float(p)), repr(float(q)), region.verdict, regime, int(region.boundary),
                   repr(m["weighted_sum_below_one"]), repr(m["sum_below_lower_critical"]),
                   repr(m["sum_below_upper_critical"]), repr(m["p_below_serrin"]))


def cmd_phase_diagram(args, out):
    if min(args.resolution) < 16:
        raise CLIError("resolution must be >= 16 in each direction", EXIT_INVALID)
    if args.p_range[0] < 0 or args.p_range[1] <= args.p_range[0]:
        raise CLIError("p range must be an increasing interval of positive numbers", EXIT_INVALID)
    if args.q_range[0] < 0 or args.q_range[1] > 1 or args.q_range[1] <= args.q_range[0]:
        raise CLIError("q range must be an increasing interval inside (0, 1)", EXIT_INVALID)
    _params(argparse.Namespace(N=args.N, alpha=args.alpha, p=1.0, q=0.5))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PHASE_COLUMNS)
    writer.writerows(phase_rows(args.N, args.alpha, args.p_range, args.q_range, args.resolution, args.eps))
    if args.output in (None, "-"):
        out.write(buf.getvalue())
    else:
        try:
            Path(args.output).write_text(buf.getvalue(), encoding="utf-8")
        except OSError as exc:
            raise CLIError(f"cannot write {args.output}: {exc}", EXIT_IO) from exc
        print(f"wrote {args.output}", file=out)
    return EXIT_OK


def _solve_one(config: RunConfig, run_dir: str) -> tuple:
    """Solve and verify one configuration; returns (exit code, summary)."""
    from .analysis import verify_solution
    from .riesz import build_kernel
    from .solver import iterate

    params = config.params
    grid = config.grid()
    kernel = build_kernel(params.N, params.alpha, grid, cache=True)
    res = iterate(params, None, grid, config.tol, config.max_iter, kernel=kernel)
    report = {"config": config.to_dict(), "solve": res.to_dict()}
    if res.converged:
        ver = verify_solution(res, kernel)
        report["verification"] = ver.to_dict()
        report["verification_text"] = ver.render()
    out = Path(run_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps(report) + "\n", encoding="utf-8")
        res.u.to_csv(out / "profile.csv")
    except OSError as exc:
        raise CLIError(f"cannot write results to {out}: {exc}", EXIT_IO) from exc
    summary = {"k": config.k, "verdict": res.verdict, "iterations": res.iterations,
               "report": str(out / "report.json"), "profile": str(out / "profile.csv")}
    return VERDICT_EXIT[res.verdict], summary, report.get("verification_text", res.message)


def cmd_solve(args, out):
    ks = args.k if args.k else [None]
    base = RunConfig.from_sources(args.config, {
        "N": args.N, "alpha": args.alpha, "p": args.p, "q": args.q, "k": ks[0],
        "r_min": args.r_min, "r_max": args.r_max, "n": args.n, "tol": args.tol,
        "max_iter": args.max_iter, "seed": args.seed, "output_dir": args.output_dir})
    region = classify(base.params).verdict
    if region != EXISTENCE_WITH_DIRAC:
        raise CLIError(f"parameters are in region {region}; solve needs {EXISTENCE_WITH_DIRAC}", EXIT_INVALID)
    configs = [base if k is None else replace(base, k=float(k)) for k in ks]
    if len(configs) == 1:
        dirs = [base.output_dir]
    else:
        dirs = [str(Path(base.output_dir) / f"run_{i:03d}") for i in range(len(configs))]
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_solve_one, configs, dirs))
    else:
        results = [_solve_one(c, d) for c, d in zip(configs, dirs)]
    # merged in parameter order, independent of completion order
    for _, summary, text in results:
        print(text, file=out)
    summaries = [s for _, s, _ in results]
    if len(configs) > 1:
        try:
            (Path(base.output_dir) / "summary.json").write_text(dumps(summaries) + "\n", encoding="utf-8")
        except OSError as exc:
            raise CLIError(f"cannot write summary: {exc}", EXIT_IO) from exc
    print(dumps(summaries if len(configs) > 1 else summaries[0]), file=out)
    return max(code for code, _, _ in results)


def cmd_kstar(args, out):
    from .grid import make_grid
    from .riesz import build_kernel
    from .solver import estimate_kstar

    params = _params(args)
    if classify(params).verdict != EXISTENCE_WITH_DIRAC:
        raise CLIError(f"k* is defined only in region {EXISTENCE_WITH_DIRAC}", EXIT_INVALID)
    grid = make_grid(args.r_min, args.r_max, args.n, args.N)
    kernel = build_kernel(params.N, params.alpha, grid, cache=True)
    try:
        bracket = estimate_kstar(params, grid, kernel=kernel, tol=args.tol, max_iter=args.max_iter)
    except SolverConfigurationError as exc:
        raise CLIError(str(exc), EXIT_MAX_ITER) from exc
    rep = bracket.to_dict()
    rep["note"] = "bracket of the discretised problem on this grid and tolerance"
    print(dumps(rep), file=out)
    return EXIT_OK


def cmd_probe(args, out):
    from .grid import make_grid
    from .solver import nonexistence_probe

    params = _params(args)
    grid = make_grid(args.r_min, args.r_max, args.n, args.N)
    try:
        rep = nonexistence_probe(params, grid, k=args.k, max_iter=args.max_iter)
    except RegionError as exc:
        raise CLIError(str(exc), EXIT_INVALID) from exc
    print(dumps(rep.to_dict()), file=out)
    return EXIT_OK if rep.certified else EXIT_VERIFY_FAILED


def cmd_verify(args, out):
    failed = []
    for suite, prop, ok, detail in checks.run_suite(args.suite, args.seed):
        print(f"{'PASS' if ok else 'FAIL'} {suite}.{prop}: {detail}", file=out)
        if not ok:
            failed.append(f"{suite}.{prop}")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=out)
        return EXIT_VERIFY_FAILED
    print("all properties passed", file=out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _add_params(p, k=False):
    p.add_argument("N", type=int, help="dimension (>= 3)")
    p.add_argument("alpha", type=float, help="Riesz order in (0, N)")
    p.add_argument("p", type=float, help="exponent inside the Riesz potential (> 0)")
    p.add_argument("q", type=float, help="local exponent in (0, 1)")


def _add_grid(p, defaults=True):
    d = RunConfig()
    p.add_argument("--r-min", type=float, default=d.r_min if defaults else None,
                   help=f"inner radius (default {d.r_min:g})")
    p.add_argument("--r-max", type=float, default=d.r_max if defaults else None,
                   help=f"outer radius (default {d.r_max:g})")
    p.add_argument("--n", type=int, default=d.n if defaults else None, help=f"grid nodes (default {d.n})")
    p.add_argument("--tol", type=float, default=d.tol if defaults else None,
                   help=f"relative sup-norm tolerance (default {d.tol:g})")
    p.add_argument("--max-iter", type=int, default=d.max_iter if defaults else None,
                   help=f"iteration cap (default {d.max_iter})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="choquard", description=(
        "Exponent regions, minimal singular solutions and decay checks for "
        "-Lap u + u = I_alpha[u^p] u^q with a Dirac mass at the origin."))
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="region verdict, condition flags and margins")
    _add_params(p)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS_BOUNDARY, help="boundary flag width (default 1e-9)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("tau-seq", help="bootstrap exponents and the crossing index j0")
    _add_params(p)
    p.add_argument("--max-j", type=int, default=DEFAULT_MAX_J, help="sequence cap (default 64)")
    p.set_defaults(func=cmd_tau_seq)

    p = sub.add_parser("phase-diagram", help="CSV of verdicts over a (p, q) lattice")
    p.add_argument("N", type=int)
    p.add_argument("alpha", type=float)
    p.add_argument("--p-range", type=float, nargs=2, default=(0.0, 4.0), metavar=("LO", "HI"),
                   help="p interval (default 0 4)")
    p.add_argument("--q-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"),
                   help="q interval (default 0 1)")
    p.add_argument("--resolution", type=int, nargs=2, default=(200, 100), metavar=("NP", "NQ"),
                   help="cells per axis, sampled at midpoints (default 200 100)")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS_BOUNDARY)
    p.add_argument("-o", "--output", default="-", help="CSV path, '-' for stdout (default)")
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("solve", help="minimal solution u_k with a verification report")
    p.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    p.add_argument("--N", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--k", type=float, nargs="+", help="Dirac mass(es); several values run as a sweep")
    _add_grid(p, defaults=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", help="directory for report.json and profile.csv (default choquard-out)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent solves for a k sweep (default 1)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("kstar", help="bisection bracket for the largest convergent Dirac mass")
    _add_params(p)
    _add_grid(p)
    p.set_defaults(func=cmd_kstar)

    p = sub.add_parser("probe-nonexistence", help="certify the divergence criterion and iterate defensively")
    _add_params(p)
    _add_grid(p)
    p.add_argument("--k", type=float, default=1.0, help="Dirac mass for the defensive iteration (default 1)")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("verify", help="run a named invariant suite")
    p.add_argument("suite", choices=checks.SUITES + ("all",))
    p.add_argument("seed", type=int, nargs="?", default=0)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParameterError, RegionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ChoquardError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
