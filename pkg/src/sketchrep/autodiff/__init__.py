"""Minimal reverse-mode autodiff core: tape, ops, GRU, optimizers."""

from . import ops
from .gradcheck import finite_difference_check
from .optim import Adam, RMSprop, make_optimizer
from .params import ParameterSet, load_checkpoint, save_checkpoint, uniform_fan_in
from .rnn import gru_bidirectional, init_gru_params, sequence_steps
from .tensor import Tensor, backward

__all__ = [
    "Adam",
    "ParameterSet",
    "RMSprop",
    "Tensor",
    "backward",
    "finite_difference_check",
    "gru_bidirectional",
    "init_gru_params",
    "load_checkpoint",
    "make_optimizer",
    "ops",
    "save_checkpoint",
    "sequence_steps",
    "uniform_fan_in",
]
