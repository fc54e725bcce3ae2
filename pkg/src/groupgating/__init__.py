"""Gated autoencoders with diagonal, grouped, asymmetric and topographic
factor interactions, plus the data, analysis and evaluation tooling
around them."""

from .cores import CoreStructure
from .datagen import DatasetSpec, generate
from .estimators import GatedAutoencoder, PairWhitening, SquarePoolingAutoencoder
from .model import FactorModel, SquarePoolingModel, infer, loss_and_grad
from .training import TrainConfig, train

__all__ = [
    "CoreStructure",
    "DatasetSpec",
    "FactorModel",
    "GatedAutoencoder",
    "PairWhitening",
    "SquarePoolingAutoencoder",
    "SquarePoolingModel",
    "TrainConfig",
    "generate",
    "infer",
    "loss_and_grad",
    "train",
]
