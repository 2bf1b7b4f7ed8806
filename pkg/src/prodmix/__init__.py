"""Identify mixtures of product distributions on bits from multilinear moments."""

from .errors import IdentificationFailure
from .model import MixtureModel, exact_moment, model_distance, random_model, separation_report
from .moments import Dataset, MomentOracle, draw_samples
from .power import SpikeDistribution, learn_power_distribution, spike_moments
from .recover import RecoveredModel, identify

__all__ = [
    "Dataset",
    "IdentificationFailure",
    "MixtureModel",
    "MomentOracle",
    "RecoveredModel",
    "SpikeDistribution",
    "draw_samples",
    "exact_moment",
    "identify",
    "learn_power_distribution",
    "model_distance",
    "random_model",
    "separation_report",
    "spike_moments",
]
