"""Goal-conditioned grid navigation with a generative next-state regularizer."""

from .navmodel import VARIANTS, ModelConfig, NavModel, build_model
from .trainer import TrainConfig, Trainer, train

__version__ = "0.1.0"
