from .arch import (ArchError, ArchSpec, CnnFields, cnn_arch, mlp_arch,
                   mlp_param_count, reference_arch, rnn_arch)
from .network import (InputError, Network, backward, forward, init_network,
                      loss_and_grad, output_grad, predict)
from .optim import DivergenceError, OptimizerState, optimizer_step
from .train import TrainConfig, initial_network, train

__all__ = [
    "ArchError", "ArchSpec", "CnnFields", "DivergenceError", "InputError",
    "Network", "OptimizerState", "TrainConfig", "backward", "cnn_arch",
    "forward", "init_network", "initial_network", "loss_and_grad",
    "mlp_arch", "mlp_param_count", "optimizer_step", "output_grad", "predict",
    "reference_arch", "rnn_arch", "train",
]
