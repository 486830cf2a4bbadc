"""Inductive link prediction on hyper-relational knowledge graphs."""
from .kg import Statement, StatementGraph, Vocabulary, intern, parse_statement_file
from .model import LinkPredictor, ModelConfig
from .splits import SamplerConfig, SplitBundle, audit, build_fi_split, build_si_split
from .training import TrainConfig, train

__all__ = ["Statement", "StatementGraph", "Vocabulary", "intern", "parse_statement_file", "LinkPredictor",
           "ModelConfig", "SamplerConfig", "SplitBundle", "audit", "build_fi_split", "build_si_split",
           "TrainConfig", "train"]
__version__ = "0.1.0"
