"""Minimal neural network engine: recurrent cells, dense heads, BPTT and optimisers."""

from .layers import gru_forward, lstm_forward, rnn_backward, rnn_forward, sigmoid, softmax
from .losses import LossSpec, loss_action, loss_time
from .optim import SGD, Adadelta, Adam, RMSprop, make_optimizer
from .params import NetParams
from .train import SeqBatch, SequenceData, TrainConfig, TrainResult, evaluate, grad, train

__all__ = [
    "NetParams",
    "LossSpec",
    "loss_action",
    "loss_time",
    "gru_forward",
    "lstm_forward",
    "rnn_forward",
    "rnn_backward",
    "sigmoid",
    "softmax",
    "SGD",
    "Adam",
    "Adadelta",
    "RMSprop",
    "make_optimizer",
    "SeqBatch",
    "SequenceData",
    "TrainConfig",
    "TrainResult",
    "train",
    "grad",
    "evaluate",
]
