"""Physics-informed networks for parabolic obstacle problems and shallow-ice flow."""
from .network import ArchitectureSpec, NetworkParams, init_params, load_params, save_params
from .problems import PROBLEM_IDS, make_problem
from .training import LossWeights, TrainReport, mu_sweep, train, two_stage_train

__all__ = ["ArchitectureSpec", "NetworkParams", "init_params", "load_params", "save_params",
           "PROBLEM_IDS", "make_problem", "LossWeights", "TrainReport", "mu_sweep", "train",
           "two_stage_train", "ObstaclePINN"]

__version__ = "0.1.0"


def __getattr__(name):
    # sklearn is imported lazily so the core stays light
    if name == "ObstaclePINN":
        from .estimator import ObstaclePINN
        return ObstaclePINN
    raise AttributeError(name)
