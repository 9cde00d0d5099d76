"""Markovian diffusion: path sampling, operator calculus and wave dynamics."""

from .core import Grid, ModelParams, ParamError, Potential, ScalarField, WaveState

__all__ = ["Grid", "ModelParams", "ParamError", "Potential", "ScalarField", "WaveState"]
__version__ = "0.1.0"
