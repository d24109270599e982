"""Referenceless quality estimation for natural language generation output.

A dual-encoder GRU network scores (meaning representation, text) pairs and
is trained jointly on human ratings and pairwise rankings, optionally
augmented with synthetically corrupted texts.
"""

__version__ = "0.1.0"

from .data import Dataset, MeaningRepresentation, QEInstance, TextOutput, Vocabulary, parse_mr, tokenize
from .model import QEModel, load, save
from .trainer import TrainConfig, multi_seed_run, train

__all__ = [
    "Dataset", "MeaningRepresentation", "QEInstance", "QEModel", "TextOutput", "TrainConfig", "Vocabulary",
    "load", "multi_seed_run", "parse_mr", "save", "tokenize", "train",
]
