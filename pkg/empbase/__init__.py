"""
This package implements a trait and state emotion model for empathetic
response generation, with the corpus tooling, training loop, evaluation
and polarity analysis around it.
"""
from ._version import __version__

# relevant class and functions for root package level
from .utils import path_config
from .config import RunConfig
from .base import DB
from .model import EmpatheticModel, load_checkpoint
