"""Attention exporter bridging a diffusion backend to ASTD dumps."""

from .backend import EnvError, TokenizationError, ToyLatentModel, load_backend
from .export import ExportJob, ExportReport, run_export

__version__ = "0.1.0"
