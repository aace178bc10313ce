"""hoflow: second-order flow matching fields, constructions, and verification.

Library layout:

* schedule      - interpolation schedules, time grids, assumption checks
* density       - target densities on [-1,1]^d, modulus/Besov tooling
* gaussian_path - conditional/marginal fields, continuity residuals
* bounds        - envelope/tail/gamma bound checks with fitted constants
* bspline       - cardinal/tensor B-splines, adaptive expansions, f4
* relunet       - explicit ReLU networks, clip/recip/mult gadgets, pipeline
* trainer       - MLP heads, flow-matching losses, ODE sampler, W_p
* suites        - verify/rate/pipeline orchestration (CLI: `hoflow`)
"""

from .config import ExperimentConfig
from .density import BesovParams, Density
from .gaussian_path import GaussianPath, GaussianReferencePath, RebasedPath
from .quadrature import QuadratureSpec
from .schedule import Schedule, TimeGrid, eval_schedule, rebase_schedule
from .trainer import TrainConfig, TrainedFlowModel

__all__ = [
    "BesovParams", "Density", "ExperimentConfig", "GaussianPath",
    "GaussianReferencePath", "QuadratureSpec", "RebasedPath", "Schedule",
    "TimeGrid", "TrainConfig", "TrainedFlowModel", "eval_schedule",
    "rebase_schedule",
]

__version__ = "0.1.0"
