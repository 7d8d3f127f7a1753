"""Compressed, differentially private distributed Nash equilibrium seeking.

Simulation engine, theoretical constants and experiment harness for NE
seeking over directed graphs where agents perturb their states with Laplace
noise and exchange compressed state differences.
"""
from ._backend import BACKEND
from .compressors import (CompressorContract, Identity, NormSign, StochasticQuantizer, TopK,
                          estimate_contract, make_compressor)
from .engine import RunParams, Simulation, run, run_coupled_pair
from .games import BoxConstraint, ConnectivityControlGame, QuadraticGame, estimate_constants
from .graph import MixingMatrix, build_random_strongly_connected, build_ring, validate
from .privacy import NoiseParams, PrivacyBudget, min_noise_scale

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoxConstraint", "CompressorContract", "ConnectivityControlGame",
    "Identity", "MixingMatrix", "NoiseParams", "NormSign", "PrivacyBudget",
    "QuadraticGame", "RunParams", "Simulation", "StochasticQuantizer", "TopK",
    "build_random_strongly_connected", "build_ring", "estimate_constants",
    "estimate_contract", "make_compressor", "min_noise_scale", "run",
    "run_coupled_pair", "validate",
]
