"""Flat key-value experiment configuration with dotted sections.

Files are `key = value` lines; `#` starts a comment.  Values are typed by
shape: int, float, `inf`, booleans, comma-separated lists, else string.
Every report embeds the fully resolved config and its hash; identical hash
implies identical numeric outputs.
"""

import hashlib
import math
from dataclasses import dataclass, field

DEFAULTS = {
    "seed": 1,
    "jobs": 1,
    "density.kind": "truncated-gaussian-mixture",
    "density.means": [0.25, -0.35],
    "density.sigmas": [0.5, 0.4],
    "density.weights": [0.6, 0.4],
    "density.degree": 8,
    "density.floor": 0.5,
    "density.besov.s": 1.0,
    "density.besov.p_prime": math.inf,
    "density.besov.q_prime": math.inf,
    "schedule.kind": "power",
    "schedule.b0": 1.0,
    "schedule.kappa": 0.5,
    "schedule.b0_tilde": 1.0,
    "schedule.kappa_tilde": 1.0,
    "grid.N": 64,
    "grid.R0": 4.0,
    "grid.delta": 0.05,
    "grid.d": 1,
    "grid.points": 512,
    "quad.nodes": 0,
    "quad.window_sigmas": 12.0,
    "consts.s": 1.0,
    "consts.omega": 0.5,
    "consts.eta": 2.0,
    "consts.C5": 2.0,
    "consts.Cb": 3.0,
    "consts.C4": 3.0,
    "consts.gamma": 1.0,
    "consts.t_boundary_mult": 3.0,
    "consts.D0_cap": 4.0,
    "f4.indicator": "coordinate",
    "rate.Ns": [16, 32, 64, 128, 256],
    "rate.ell": 0,
    "rate.bspline_ell": 1,
    "rate.bspline_s": 2.0,
    "rate.structure": "single",
    "rate.n_times": 5,
    "rate.t_star": 0.25,
    "gadgets.recip_eps": [0.1, 0.05, 0.02],
    "gadgets.mult_eps": 0.01,
    "train.width": 64,
    "train.depth": 3,
    "train.steps": 1500,
    "train.lr": 0.003,
    "train.momentum": 0.9,
    "train.batch": 256,
    "train.n_data": 4096,
    "train.order": 2,
    "sample.n": 4096,
    "sample.steps": 128,
    "sample.order": 1,
    "figures": True,
}


def _parse_scalar(tok: str):
    t = tok.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "inf":
        return math.inf
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_scalar(p) for p in raw.split(",") if p.strip()]
    return _parse_scalar(raw)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return DEFAULTS[key]

    def get(self, key, default=None):
        return self.values.get(key, DEFAULTS.get(key, default))

    def set(self, key, value):
        self.values[key] = value

    def resolved(self) -> dict:
        out = dict(DEFAULTS)
        out.update(self.values)
        return {k: out[k] for k in sorted(out)}

    def hash(self) -> str:
        blob = repr(sorted(self.resolved().items())).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def load(path) -> "ExperimentConfig":
        cfg = ExperimentConfig()
        with open(path) as fh:
            for ln, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{ln}: expected 'key = value'")
                key, _, raw = line.partition("=")
                cfg.set(key.strip(), parse_value(raw))
        return cfg

    def dump(self) -> str:
        def enc(v):
            if isinstance(v, list):
                return ", ".join(enc(x) for x in v)
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return str(v)
        return "\n".join(f"{k} = {enc(v)}" for k, v in self.resolved().items()) + "\n"
