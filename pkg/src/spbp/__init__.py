"""Sub-pixel back-projection network for lightweight single-image super-resolution."""

from .complexity import compare_spc_dconv, count_multadds, count_params
from .network import (
    NetworkConfig,
    SpbpNetwork,
    build_network,
    forward,
    self_ensemble_forward,
)
from .train import TrainConfig
from .weights import load_weights, save_weights

__all__ = [
    "NetworkConfig",
    "SpbpNetwork",
    "TrainConfig",
    "build_network",
    "compare_spc_dconv",
    "count_multadds",
    "count_params",
    "forward",
    "load_weights",
    "save_weights",
    "self_ensemble_forward",
]
