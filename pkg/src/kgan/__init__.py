"""Knowledge graph embeddings with adversarially generated negatives."""

from .data import KgDataset, Triple, Vocabulary, load_dataset
from .estimator import KGEmbedding, TripleClassifier
from .generator import GeneratorModel
from .scorers import DiscriminatorModel
from .trainer import TrainConfig, train

__all__ = [
    "DiscriminatorModel",
    "GeneratorModel",
    "KGEmbedding",
    "KgDataset",
    "TrainConfig",
    "Triple",
    "TripleClassifier",
    "Vocabulary",
    "load_dataset",
    "train",
]
__version__ = "0.1.0"
