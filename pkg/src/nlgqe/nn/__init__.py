from .autodiff import Tape, Tensor, backward
from .layers import GRUParams, bidir_encode, dense, dropout, embed, encode_batch, gru_sequence, gru_step
from .optim import AdamState, adam_step

__all__ = [
    "Tape", "Tensor", "backward", "GRUParams", "bidir_encode", "dense", "dropout",
    "embed", "encode_batch", "gru_sequence", "gru_step", "AdamState", "adam_step",
]
