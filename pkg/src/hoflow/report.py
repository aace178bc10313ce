"""Experiment reports: JSON plus stable-schema CSV companions.

bounds.csv columns: check, t, x, lhs, rhs, ratio, pass
rate.csv columns:   regime, t, N, ise, rhs_scale, ratio

Numeric fields are written with repr (round-trip exact), so re-running
with an identical config hash reproduces the files byte-for-byte.
"""

import json
import math
import time
from dataclasses import dataclass, field


def _jsonable(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return v


@dataclass
class RateFit:
    regime: str
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    saturated: bool = False

    def to_dict(self):
        return self.__dict__.copy()


@dataclass
class ExperimentReport:
    config: dict
    config_hash: str
    bound_reports: list = field(default_factory=list)
    rate_rows: list = field(default_factory=list)
    rate_fits: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    runtime_s: float = 0.0

    def add_bound(self, rep):
        self.bound_reports.append(rep)
        if math.isfinite(rep.fitted_constant):
            self.constants.setdefault(rep.bound_name, rep.fitted_constant)

    def finish(self):
        self.runtime_s = time.time() - self.started
        return self

    @property
    def all_passed(self) -> bool:
        ok = all(r.passed or r.verdict == "NOT-APPLICABLE"
                 for r in self.bound_reports)
        return ok and not self.errors

    def summary_lines(self):
        lines = []
        for r in self.bound_reports:
            lines.append(f"[{r.verdict:>14s}] {r.bound_name}"
                         f"  C={r.fitted_constant:.6g}")
        for f in self.rate_fits:
            tag = " (saturated)" if f.saturated else ""
            lines.append(f"[{'RATE':>14s}] {f.regime}: slope {f.slope:+.3f}"
                         f" R2={f.r2:.4f}{tag}")
        for e in self.errors:
            lines.append(f"[{'ERROR':>14s}] {e}")
        return lines

    def to_dict(self):
        return _jsonable({
            "config": self.config,
            "config_hash": self.config_hash,
            "bound_reports": [r.to_dict() for r in self.bound_reports],
            "rate_fits": [f.to_dict() for f in self.rate_fits],
            "constants": self.constants,
            "tables": self.tables,
            "errors": self.errors,
            "all_passed": self.all_passed,
            "runtime_s": round(self.runtime_s, 3),
        })

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_bounds_csv(self, path):
        with open(path, "w") as fh:
            fh.write("check,t,x,lhs,rhs,ratio,pass\n")
            for rep in self.bound_reports:
                for row in rep.rows:
                    fh.write("%s,%r,%r,%r,%r,%r,%s\n" % (
                        row["check"], float(row["t"]), float(row["x"]),
                        float(row["lhs"]), float(row["rhs"]),
                        float(row["ratio"]), row.get("pass", rep.verdict)))

    def write_rate_csv(self, path):
        with open(path, "w") as fh:
            fh.write("regime,t,N,ise,rhs_scale,ratio\n")
            for row in self.rate_rows:
                fh.write("%s,%r,%d,%r,%r,%r\n" % (
                    row["regime"], float(row["t"]), row["N"], float(row["ise"]),
                    float(row["rhs_scale"]), float(row["ratio"])))


def fit_loglog(Ns, values, regime, floor=1e-24):
    """Least-squares slope of log(values) vs log(N) with R^2 and stderr."""
    import numpy as np
    Ns = np.asarray(Ns, dtype=float)
    v = np.maximum(np.asarray(values, dtype=float), floor)
    x = np.log(Ns)
    y = np.log(v)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    yhat = A @ [slope, intercept]
    ss_res = float(((y - yhat) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    n = len(x)
    if n > 2 and ss_res > 0:
        se = math.sqrt(ss_res / (n - 2) / float(((x - x.mean()) ** 2).sum()))
    else:
        se = 0.0
    saturated = bool(abs(slope) < 0.1 and v.max() < 1e-12)
    return RateFit(regime=regime, slope=float(slope), intercept=float(intercept),
                   r2=float(r2), slope_stderr=float(se), saturated=saturated)
