"""Deep topic model with sawtooth-factorized word/topic embeddings.

Modules: ``corpus`` (ingestion), ``tape`` (reverse-mode autodiff),
``decoder``/``encoder``/``model`` (generative and inference networks),
``trainer`` (ELBO and optimisation), ``evaluation`` (metrics) and ``cli``.
"""
from .trainer import TrainConfig, train
from .evaluation import EvalConfig

__all__ = ["TrainConfig", "EvalConfig", "train"]
__version__ = "0.1.0"
