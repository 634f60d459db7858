"""Command-line surface: fit, simulate, cdf.

Exit codes: 0 success, 2 input error, 3 numerical failure. All outputs are
deterministic functions of (config, data, seed); reports embed the config
hash and package version, never timestamps.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, distribution, estimator, first_stage, simlab
from .basis import BasisPlan, BlockSpec, make_knots
from .data import ColumnMap, ingest_csv
from .errors import InputError, NumericalError


@dataclass(frozen=True)
class RunConfig:
    taus: tuple[float, ...] = (0.5,)
    y_degree: int = 2
    y_interior_knots: int = 0
    w_degree: int = 2
    w_interior_knots: int = 2
    bandwidth_mode: str = "rot"
    trim_floor: float = 0.01
    seed: int = 0
    estimators: tuple[str, ...] = ("semiparametric_iv",)
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(self.taus))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not all(0.0 < t < 1.0 for t in self.taus):
            raise InputError("every tau must lie strictly inside (0, 1)")
        if min(self.y_interior_knots, self.w_interior_knots) < 0:
            raise InputError("interior knot counts must be >= 0")
        if self.bandwidth_mode not in ("rot", "cv"):
            raise InputError("bandwidth mode must be 'rot' or 'cv'")

    def to_dict(self) -> dict:
        return {
            "taus": list(self.taus), "y_degree": self.y_degree,
            "y_interior_knots": self.y_interior_knots,
            "w_degree": self.w_degree,
            "w_interior_knots": self.w_interior_knots,
            "bandwidth_mode": self.bandwidth_mode,
            "trim_floor": self.trim_floor, "seed": self.seed,
            "estimators": list(self.estimators), "level": self.level,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_column_map(text: str) -> ColumnMap:
    """Parse 'd=del,y=wage,w=iw,x=age+educ' into a ColumnMap."""
    parts = {}
    for chunk in text.split(","):
        if "=" not in chunk:
            raise InputError(f"bad column map chunk {chunk!r}; expected key=value")
        key, val = chunk.split("=", 1)
        parts[key.strip()] = tuple(v.strip() for v in val.split("+") if v.strip())
    for key in ("d", "y", "w"):
        if key not in parts or not parts[key]:
            raise InputError(f"column map is missing '{key}='")
    if len(parts["d"]) != 1 or len(parts["y"]) != 1:
        raise InputError("d= and y= take exactly one column each")
    return ColumnMap(d_column=parts["d"][0], y_column=parts["y"][0],
                     w_columns=parts["w"], x_columns=parts.get("x", ()))


def build_plan(data, config: RunConfig) -> BasisPlan:
    x_vars = tuple(f"x{i}" for i in range(data.x.shape[1]))
    extra_w = tuple(f"w{i}" for i in range(1, data.w.shape[1]))
    y_kv = make_knots(data.y[data.selected], config.y_interior_knots,
                      config.y_degree)
    w_kv = make_knots(data.w[:, 0], config.w_interior_knots, config.w_degree)
    return BasisPlan(phi=BlockSpec("y", y_kv, x_vars),
                     b=BlockSpec("w0", w_kv, extra_w + x_vars))


def cmd_fit(config: RunConfig, data) -> dict:
    """Run the requested estimators at every tau; return the report dict."""
    estimates = []
    plan = None
    if "semiparametric_iv" in config.estimators:
        plan = build_plan(data, config)
    for tau in config.taus:
        for name in config.estimators:
            if name == "semiparametric_iv":
                qf = estimator.fit_semiparametric_iv(
                    data, tau, plan=plan, level=config.level,
                    bandwidth_mode=config.bandwidth_mode)
            elif name == "mar":
                qf = estimator.fit_mar(data, tau, trim_floor=config.trim_floor,
                                       level=config.level,
                                       bandwidth_mode=config.bandwidth_mode)
            elif name == "uncorrected":
                qf = estimator.fit_uncorrected(data, tau, level=config.level,
                                               bandwidth_mode=config.bandwidth_mode)
            else:
                raise InputError(f"unknown estimator {name!r}")
            estimates.append({
                "tau": tau,
                "estimator": name,
                "labels": list(qf.labels),
                "theta": [float(v) for v in qf.theta],
                "sigma": [[float(v) for v in row] for row in qf.sigma],
                "se": [float(v) for v in qf.se],
                "ci": [[float(lo), float(hi)] for lo, hi in qf.ci],
                "diagnostics": qf.diagnostics,
            })
    return {"config_hash": config.hash(), "version": __version__,
            "config": config.to_dict(), "estimates": estimates}


def cmd_cdf(config: RunConfig, data) -> list[tuple[float, float, float]]:
    """(y, corrected F, empirical F) on the selected outcome grid."""
    plan = build_plan(data, config)
    fs = first_stage.estimate_unconstrained(data, plan)
    fs = first_stage.cone_project(fs, data)
    corrected = distribution.corrected_cdf(fs, data)
    y_sel = np.sort(data.y[data.selected])
    grid = np.unique(y_sel)
    ecdf = np.searchsorted(y_sel, grid, side="right") / len(y_sel)
    corr = corrected.evaluate(grid)
    return [(float(g), float(c), float(e)) for g, c, e in zip(grid, corr, ecdf)]


def _write_cdf_csv(rows, stream):
    writer = csv.writer(stream)
    writer.writerow(["y", "cdf_corrected", "cdf_empirical"])
    for row in rows:
        writer.writerow([repr(v) for v in row])


def _add_basis_flags(p):
    p.add_argument("--y-degree", type=int, default=2)
    p.add_argument("--y-interior-knots", type=int, default=0)
    p.add_argument("--w-degree", type=int, default=2)
    p.add_argument("--w-interior-knots", type=int, default=2)
    p.add_argument("--bandwidth-mode", choices=("rot", "cv"), default="rot")
    p.add_argument("--trim-floor", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selqr",
        description="Selection-corrected quantile regression under "
                    "outcome-dependent missingness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit estimators to a CSV dataset")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--map", required=True,
                       help="column map, e.g. d=d,y=y,w=w0,x=x0+x1")
    p_fit.add_argument("--tau", default="0.5", help="comma-separated levels")
    p_fit.add_argument("--estimators", default="semiparametric_iv",
                       help="comma-separated subset of "
                            "uncorrected,mar,semiparametric_iv")
    _add_basis_flags(p_fit)
    p_fit.add_argument("--out", help="report JSON path (default: stdout)")

    p_sim = sub.add_parser("simulate", help="run the Monte Carlo harness")
    p_sim.add_argument("--setting", choices=simlab.SETTINGS, required=True)
    p_sim.add_argument("--mechanism", choices=simlab.MECHANISMS, required=True)
    p_sim.add_argument("--n", type=int, default=1000)
    p_sim.add_argument("--reps", type=int, default=1000)
    p_sim.add_argument("--tau", type=float, default=0.5)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--estimators",
                       default="uncorrected,mar,semiparametric_iv")
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.add_argument("--out", help="output prefix for <out>.csv/<out>.json")

    p_cdf = sub.add_parser("cdf", help="corrected vs empirical CDF table")
    p_cdf.add_argument("--data", required=True)
    p_cdf.add_argument("--map", required=True)
    _add_basis_flags(p_cdf)
    p_cdf.add_argument("--out", help="CSV path (default: stdout)")
    return parser


def _run(args) -> int:
    if args.command == "fit":
        config = RunConfig(
            taus=tuple(float(t) for t in args.tau.split(",")),
            y_degree=args.y_degree, y_interior_knots=args.y_interior_knots,
            w_degree=args.w_degree, w_interior_knots=args.w_interior_knots,
            bandwidth_mode=args.bandwidth_mode, trim_floor=args.trim_floor,
            seed=args.seed,
            estimators=tuple(e.strip() for e in args.estimators.split(",")))
        data = ingest_csv(args.data, parse_column_map(args.map))
        report = cmd_fit(config, data)
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    if args.command == "simulate":
        spec = simlab.SimulationSpec(
            setting=args.setting, mechanism=args.mechanism, n=args.n,
            reps=args.reps, tau=args.tau, seed=args.seed,
            estimators=tuple(e.strip() for e in args.estimators.split(",")))
        table = simlab.run(spec, n_jobs=args.jobs)
        print(table.format())
        if args.out:
            table.write_csv(args.out + ".csv")
            table.write_json(args.out + ".json")
        return 0

    if args.command == "cdf":
        config = RunConfig(
            y_degree=args.y_degree, y_interior_knots=args.y_interior_knots,
            w_degree=args.w_degree, w_interior_knots=args.w_interior_knots,
            bandwidth_mode=args.bandwidth_mode, trim_floor=args.trim_floor,
            seed=args.seed)
        data = ingest_csv(args.data, parse_column_map(args.map))
        rows = cmd_cdf(config, data)
        if args.out:
            with open(args.out, "w", newline="") as fh:
                _write_cdf_csv(rows, fh)
        else:
            _write_cdf_csv(rows, sys.stdout)
        return 0
    raise InputError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
