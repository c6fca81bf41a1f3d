"""Diffusion l0-LMS sparse reconstruction over simulated networks, with step-size stability analysis."""

from .diffusion import AlgorithmConfig, DiffusionState, RunResult, run
from .errors import InvalidParameterError
from .experiments import ExperimentConfig, monte_carlo
from .network import WeightMatrices, grow_network, metropolis_weights, averaging_weights
from .regularizer import RegularizerParams, zero_attraction
from .signal import ProblemInstance, make_instance, partition_uniform
from .stability import build_F, build_gamma, mu_bracket, mu_exact, spectral_radius

__version__ = "0.1.0"
