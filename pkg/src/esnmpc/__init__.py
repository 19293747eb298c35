"""Echo State Network residual compensation for linear MPC."""

from .esn import EsnConfig, EsnWeights
from .experiment import ExperimentConfig, run_pipeline
from .mpc import MpcConfig
from .plant import LinearModel, ResidualSelector, ResidualSpec, SpringDamperParams

__all__ = [
    "EsnConfig",
    "EsnWeights",
    "ExperimentConfig",
    "LinearModel",
    "MpcConfig",
    "ResidualSelector",
    "ResidualSpec",
    "SpringDamperParams",
    "run_pipeline",
]

__version__ = "0.1.0"
