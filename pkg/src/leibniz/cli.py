"""Command line entry point: ``run``, ``table1``, ``verify`` and ``oracle``.

Exit codes: 0 success; 1 failed invariants (``verify``); 2 configuration
error; 3 estimator failure; 4 no oracle for the requested model.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from typing import Optional

from . import checks
from . import oracle as oracle_mod
from .config import (ConfigError, RunConfig, build_model, distribution_id, load_config,
                     table1_config)
from .estimators import run_estimator
from .models import TABLE1_CONFIGS, AmericanOptionModel, GG1Model

CSV_FIELDS = ("model", "distribution", "estimator", "theta", "mean", "std_error", "n_reps",
              "runtime_s", "unstable", "rejected", "oracle", "seed")


@dataclass
class ResultRow:
    model: str
    distribution: str
    estimator: str
    theta: float
    mean: float
    std_error: float
    n_reps: int
    runtime_s: Optional[float]
    unstable: bool
    rejected: int
    oracle: Optional[float]
    seed: int

    def to_csv(self) -> list:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append("true" if v else "false")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out

    @classmethod
    def from_csv(cls, rec: dict) -> "ResultRow":
        def num(s):
            return None if s == "" else float(s)
        return cls(rec["model"], rec["distribution"], rec["estimator"], float(rec["theta"]),
                   float(rec["mean"]), float(rec["std_error"]), int(rec["n_reps"]),
                   num(rec["runtime_s"]), rec["unstable"] == "true", int(rec["rejected"]),
                   num(rec["oracle"]), int(rec["seed"]))

    def to_json(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = repr(v)
        return out


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(r.to_csv())
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps([r.to_json() for r in rows], indent=2) + "\n"


def _emit(rows, path: Optional[str], fmt: str):
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _fmt(mean, se, unstable=False):
    flag = "*" if unstable else ""
    return f"{mean:.3f}({se:.3f}){flag}" if abs(mean) < 1e3 else f"{mean:.3e}({se:.2e}){flag}"


# ---------------------------------------------------------------------------
# oracle lookup

def oracle_for(settings: dict, theta: float):
    """``(derivative, diagnostics)`` for a model config, or raise NoOracle."""
    m = build_model(settings, theta)
    name = settings["name"]
    if name == "log_inventory":
        o = oracle_mod.truth_log_inventory(m.density, m.q, theta)
        return o.derivative, {"value": o.value, "quad_error": o.quad_error, "order": o.order,
                              "cross_check": o.cross_check, "discrepancy": o.discrepancy}
    if name == "max_threshold":
        return oracle_mod.truth_max_threshold(m.density, theta), {"method": "quadrature"}
    if name == "american_option" and isinstance(m, AmericanOptionModel):
        if m.n_periods != 2:
            raise oracle_mod.NoOracle("only the two-period option oracle ships")
        o = oracle_mod.truth_option_2period(m.with_threshold(theta))
        return o.derivative, {"value": o.value, "quad_error": o.quad_error,
                              "cross_check": o.cross_check, "discrepancy": o.discrepancy}
    if name == "gg1" and isinstance(m, GG1Model):
        try:
            value, deriv = oracle_mod.truth_gg1_enumerate(m, theta)
        except (oracle_mod.NoOracle, TypeError, AttributeError) as exc:
            raise oracle_mod.NoOracle("queue oracle needs x-free services and fixed gaps") from exc
        return deriv, {"value": value, "method": "enumeration"}
    raise oracle_mod.NoOracle(f"no deterministic oracle for model {name!r}")


# ---------------------------------------------------------------------------
# commands

def execute(cfg: RunConfig) -> list:
    """Run every estimator of a config; estimator errors propagate."""
    m = build_model(cfg.model, cfg.theta)
    ecfg = cfg.estimator_config()
    truth = None
    if cfg.oracle:
        try:
            truth = oracle_for(cfg.model, cfg.theta)[0]
        except oracle_mod.NoOracle:
            truth = None
    rows = []
    for name in cfg.estimators:
        r = run_estimator(name, m, float(cfg.theta), ecfg)
        rows.append(ResultRow(
            model=cfg.model["name"], distribution=distribution_id(cfg.model), estimator=name,
            theta=float(cfg.theta), mean=float(r.mean), std_error=float(r.std_error),
            n_reps=r.n_reps, runtime_s=r.runtime if cfg.timing else None,
            unstable=bool(r.unstable), rejected=r.rejected_samples, oracle=truth, seed=cfg.seed))
    return rows


def _overrides(args) -> dict:
    return {"seed": args.seed, "n_reps": args.reps, "workers": args.workers,
            "output_path": args.out, "format": args.format}


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rows = execute(cfg)
    except Exception as exc:  # any estimator failure maps to exit 3
        print(f"estimator failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _emit(rows, cfg.output_path, cfg.format)
    summary = sys.stderr if cfg.output_path is None else sys.stdout
    for r in rows:
        extra = "" if r.oracle is None else f"  oracle {r.oracle:.6f}"
        print(f"{r.model:16s} {r.distribution:28s} {r.estimator:20s} "
              f"{_fmt(r.mean, r.std_error, r.unstable)}{extra}", file=summary)
    return 0


def cmd_table1(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get("LEIBNIZ_SEED", 0))
    n_reps = args.reps or 10_000
    out_dir = args.out or "."
    start = time.perf_counter()
    rows = []
    try:
        for name, _ in TABLE1_CONFIGS:
            cfg = table1_config(name, seed=seed, n_reps=n_reps)
            cfg.workers = args.workers or 1
            cfg.oracle = True
            for r in execute(cfg):
                r.distribution = name
                rows.append(r)
    except Exception as exc:
        print(f"estimator failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    os.makedirs(out_dir, exist_ok=True)
    fmt = args.format or "csv"
    _emit(rows, os.path.join(out_dir, f"table1.{fmt}"), fmt)
    print(f"{'distribution':20s} {'FD':>16s} {'integral':>22s} {'divergence':>16s} {'oracle':>10s}")
    for name, _ in TABLE1_CONFIGS:
        cells = {r.estimator: r for r in rows if r.distribution == name}
        print(f"{name:20s} "
              + " ".join(f"{_fmt(cells[e].mean, cells[e].std_error, cells[e].unstable):>{w}s}"
                         for e, w in (("fd", 16), ("leibniz_integral", 22), ("leibniz_divergence", 16)))
              + f" {cells['fd'].oracle:10.4f}")
    print(f"* unstable; q=0.5, theta=1, n={n_reps}, seed={seed}, "
          f"{time.perf_counter() - start:.1f}s")
    return 0


def cmd_verify(args) -> int:
    results = checks.run_checks()
    ok = all(r.passed for r in results)
    report = {"passed": ok, "failed": [r.name for r in results if not r.passed],
              "checks": [r.to_dict() for r in results]}
    if args.verbose:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: max error {r.max_error:.3g} "
                  f"(tol {r.tolerance:.3g}) {r.detail} [{r.seconds:.2f}s]", file=sys.stderr)
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def cmd_oracle(args) -> int:
    try:
        cfg = load_config(args.config, {"seed": args.seed})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        value, diag = oracle_for(cfg.model, cfg.theta)
    except oracle_mod.NoOracle as exc:
        print(f"no oracle: {exc}", file=sys.stderr)
        return 4
    print(repr(float(value)))
    for k, v in diag.items():
        print(f"  {k}: {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leibniz", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--reps", type=int, metavar="N")
        sp.add_argument("--workers", type=int, metavar="N")
        sp.add_argument("--out", metavar="PATH")
        sp.add_argument("--format", choices=("csv", "json"))

    common(sub.add_parser("run", help="run the estimators of a config"))
    common(sub.add_parser("table1", help="reproduce the seven-distribution comparison"), config=False)
    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("-v", "--verbose", action="store_true")
    v.add_argument("--out", metavar="PATH")
    o = sub.add_parser("oracle", help="print the deterministic derivative for a config")
    o.add_argument("--config", required=True, metavar="PATH")
    o.add_argument("--seed", type=int, metavar="U64")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "table1": cmd_table1, "verify": cmd_verify,
               "oracle": cmd_oracle}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
