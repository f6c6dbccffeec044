"""Explicit deep ReLU network constructions with exact verification."""
from .net import (  # noqa: F401
    RATIONAL, F64, Affine, ReluNet, PrecisionBudgetExceeded, NetworkError,
    affine_net, identity_net, relu_net, selection, compose, chain, concat,
    extend_identity, lift, sum_nets, pad_depth, pad_width, to_f64, evaluate,
    serialize, deserialize,
)

__version__ = "0.1.0"
