"""Monte Carlo lab: data generation, replication driver, metric tables.

The outcome model is Y* = 1 + 1*W + 2*X + e(tau) with (W, X) bivariate
normal, five error laws (A-E) recentred so the conditional tau-quantile of
e(tau) is zero, and three logistic selection mechanisms (M1 MAR, M2
MNAR-linear, M3 MNAR-nonlinear) calibrated to roughly 35% missingness.
Replications draw from pre-split RNG streams keyed by (seed, index), so
results are identical no matter how many workers run them.

Metric tables report coefficients in the order (intercept, w, x).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm, t as student_t

from . import estimator as est
from .data import ObservationSet
from .errors import InputError, NumericalError

SETTINGS = ("A", "B", "C", "D", "E")
MECHANISMS = ("M1", "M2", "M3")

# logistic selection index coefficients (alpha, gamma, xi)
_MECH_PARAMS = {
    "M1": (-0.1, 0.8, 0.0),
    "M2": (-2.4, 0.6, 0.6),
    "M3": (-2.6, 1.2, 0.6),
}

_BETA_TRUE = (1.0, 1.0, 2.0)   # intercept, w, x


@dataclass(frozen=True)
class SimulationSpec:
    setting: str
    mechanism: str
    n: int
    reps: int
    tau: float = 0.5
    seed: int = 0
    estimators: tuple[str, ...] = est.ESTIMATOR_NAMES
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.setting not in SETTINGS:
            raise InputError(f"setting must be one of {SETTINGS}")
        if self.mechanism not in MECHANISMS:
            raise InputError(f"mechanism must be one of {MECHANISMS}")
        if self.reps < 1:
            raise InputError("reps must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise InputError("tau must lie strictly inside (0, 1)")
        unknown = set(self.estimators) - set(est.ESTIMATOR_NAMES)
        if unknown:
            raise InputError(f"unknown estimator(s) {sorted(unknown)}")


@dataclass(frozen=True)
class GeneratedDataset:
    """One replication's sample plus the latent truth behind it."""

    data: ObservationSet
    y_star: np.ndarray
    p: np.ndarray
    theta_true: np.ndarray      # in Z order (intercept, x, w)
    setting: str
    mechanism: str
    tau: float


def _mixture_quantile(tau: float, tol: float = 1e-10) -> float:
    """tau-quantile of 0.4 N(0, 1.5^2) + 0.6 N(0, 1), by bisection."""
    cdf = lambda v: 0.4 * norm.cdf(v / 1.5) + 0.6 * norm.cdf(v)
    lo, hi = -20.0, 20.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _draw_errors(setting: str, tau: float, x: np.ndarray, rng) -> np.ndarray:
    """Draw e and recentre to e(tau) = e - F^-1(tau) (conditional for E)."""
    n = len(x)
    if setting == "A":
        return rng.standard_normal(n) - norm.ppf(tau)
    if setting == "B":
        wide = rng.random(n) < 0.4
        eps = rng.standard_normal(n) * np.where(wide, 1.5, 1.0)
        return eps - _mixture_quantile(tau)
    if setting == "C":
        return 0.7 * rng.standard_t(3, n) - 0.7 * student_t.ppf(tau, 3)
    if setting == "D":
        return rng.uniform(-1.5, 1.5, n) - (-1.5 + 3.0 * tau)
    if setting == "E":
        sd = 0.5 * (1.0 + np.abs(x))
        return sd * rng.standard_normal(n) - sd * norm.ppf(tau)
    raise InputError(f"unknown setting {setting!r}")


def generate(spec: SimulationSpec, replication_index: int) -> GeneratedDataset:
    """Deterministic per-replication draw: identical (seed, index) pairs
    reproduce the dataset bit for bit."""
    ss = np.random.SeedSequence(spec.seed, spawn_key=(replication_index,))
    rng = np.random.default_rng(ss)
    wx = rng.multivariate_normal([2.0, 1.0], [[1.0, 0.5], [0.5, 1.0]], size=spec.n)
    w, x = wx[:, 0], wx[:, 1]
    eps = _draw_errors(spec.setting, spec.tau, x, rng)
    b0, b1, b2 = _BETA_TRUE
    y_star = b0 + b1 * w + b2 * x + eps
    alpha, gamma, xi = _MECH_PARAMS[spec.mechanism]
    if spec.mechanism == "M3":
        index = alpha + gamma * np.sin(x) ** 2 + xi * y_star
    else:
        index = alpha + gamma * x + xi * y_star
    p = expit(index)
    d = (rng.random(spec.n) < p).astype(int)
    data = ObservationSet(d=d, y=np.where(d == 1, y_star, np.nan),
                          w=w.reshape(-1, 1), x=x.reshape(-1, 1))
    theta_true = np.array([b0, b2, b1])   # Z order: intercept, x, w
    return GeneratedDataset(data=data, y_star=y_star, p=p,
                            theta_true=theta_true, setting=spec.setting,
                            mechanism=spec.mechanism, tau=spec.tau)


# report order: intercept, instrument slope, covariate slope
REPORT_LABELS = ("intercept", "w", "x")
_Z_TO_REPORT = np.array([0, 2, 1])


def _default_fitters():
    return {
        "uncorrected": lambda gd, spec: est.fit_uncorrected(
            gd.data, spec.tau, level=spec.level),
        "mar": lambda gd, spec: est.fit_mar(gd.data, spec.tau, level=spec.level),
        "semiparametric_iv": lambda gd, spec: est.fit_semiparametric_iv(
            gd.data, spec.tau, level=spec.level),
    }


def _run_replication(spec: SimulationSpec, idx: int, fitters=None):
    fitters = fitters or _default_fitters()
    gd = generate(spec, idx)
    out = {}
    for name in spec.estimators:
        try:
            qf = fitters[name](gd, spec)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            return {"index": idx, "error": f"{name}: {exc}"}
        out[name] = {
            "theta": qf.theta[_Z_TO_REPORT],
            "ci_lo": qf.ci[_Z_TO_REPORT, 0],
            "ci_hi": qf.ci[_Z_TO_REPORT, 1],
        }
    out["index"] = idx
    out["theta_true"] = gd.theta_true[_Z_TO_REPORT]
    return out


def _pool_task(args):
    spec, idx = args
    return _run_replication(spec, idx)


@dataclass(frozen=True)
class MetricsTable:
    """Per-estimator, per-coefficient simulation metrics plus raw draws."""

    spec: SimulationSpec
    labels: tuple[str, ...]
    metrics: dict                 # estimator -> metric -> (d,) array
    replications: dict            # estimator -> {"theta","ci_lo","ci_hi"} (R,d)
    theta_true: np.ndarray
    excluded: tuple = ()

    METRIC_NAMES = ("bias", "rmse", "ci_length", "coverage")

    def to_rows(self):
        rows = []
        for name in self.spec.estimators:
            for j, label in enumerate(self.labels):
                for metric in self.METRIC_NAMES:
                    rows.append((name, label, metric,
                                 float(self.metrics[name][metric][j])))
        return rows

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["estimator", "coefficient", "metric", "value"])
            for row in self.to_rows():
                writer.writerow([row[0], row[1], row[2], repr(row[3])])

    def to_dict(self):
        from . import __version__
        return {
            "version": __version__,
            "spec": {
                "setting": self.spec.setting, "mechanism": self.spec.mechanism,
                "n": self.spec.n, "reps": self.spec.reps, "tau": self.spec.tau,
                "seed": self.spec.seed, "level": self.spec.level,
                "estimators": list(self.spec.estimators),
            },
            "labels": list(self.labels),
            "theta_true": [float(v) for v in self.theta_true],
            "excluded_replications": [list(e) for e in self.excluded],
            "metrics": {
                name: {metric: [float(v) for v in self.metrics[name][metric]]
                       for metric in self.METRIC_NAMES}
                for name in self.spec.estimators
            },
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def format(self) -> str:
        """Four-panel console table (bias, RMSE, CI length, coverage)."""
        width = max(len(n) for n in self.spec.estimators) + 2
        lines = [f"setting {self.spec.setting} / {self.spec.mechanism}  "
                 f"tau={self.spec.tau}  n={self.spec.n}  reps={self.spec.reps}"
                 + (f"  excluded={len(self.excluded)}" if self.excluded else "")]
        panel_names = {"bias": "Mean bias", "rmse": "RMSE",
                       "ci_length": "CI length", "coverage": "Coverage"}
        for metric in self.METRIC_NAMES:
            lines.append("")
            lines.append(panel_names[metric])
            header = " " * width + "".join(f"{lab:>12s}" for lab in self.labels)
            lines.append(header)
            for name in self.spec.estimators:
                vals = self.metrics[name][metric]
                lines.append(f"{name:<{width}s}"
                             + "".join(f"{v:12.3f}" for v in vals))
        return "\n".join(lines)


def run(spec: SimulationSpec, n_jobs: int = 1, fitters=None) -> MetricsTable:
    """Generate, fit and aggregate over spec.reps replications.

    Failed replications are excluded from aggregation and reported; more
    than 2% exclusions fails the run. Aggregates are means over stored
    per-replication arrays (numpy pairwise summation), so they do not
    depend on completion order or worker count.
    """
    results = [None] * spec.reps
    if n_jobs > 1 and fitters is None:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for res in pool.map(_pool_task, ((spec, i) for i in range(spec.reps)),
                                chunksize=max(1, spec.reps // (8 * n_jobs))):
                results[res["index"]] = res
    else:
        for i in range(spec.reps):
            results[i] = _run_replication(spec, i, fitters)

    excluded = tuple((r["index"], r["error"]) for r in results if "error" in r)
    kept = [r for r in results if "error" not in r]
    if len(excluded) > 0.02 * spec.reps:
        raise NumericalError(
            f"{len(excluded)} of {spec.reps} replications failed (>2%): "
            f"{excluded[:3]}...")
    if not kept:
        raise NumericalError("all replications failed")

    theta_true = kept[0]["theta_true"]
    d = len(theta_true)
    metrics, replications = {}, {}
    for name in spec.estimators:
        theta = np.vstack([r[name]["theta"] for r in kept])
        ci_lo = np.vstack([r[name]["ci_lo"] for r in kept])
        ci_hi = np.vstack([r[name]["ci_hi"] for r in kept])
        err = theta - theta_true
        metrics[name] = {
            "bias": err.mean(axis=0),
            "rmse": np.sqrt((err ** 2).mean(axis=0)),
            "ci_length": (ci_hi - ci_lo).mean(axis=0),
            "coverage": ((ci_lo <= theta_true) & (theta_true <= ci_hi)).mean(axis=0),
        }
        replications[name] = {"theta": theta, "ci_lo": ci_lo, "ci_hi": ci_hi}
    return MetricsTable(spec=spec, labels=REPORT_LABELS[:d], metrics=metrics,
                        replications=replications, theta_true=theta_true,
                        excluded=excluded)
