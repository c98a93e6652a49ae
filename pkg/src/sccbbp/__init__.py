"""Spiked sample canonical correlations: limits, simulation and diagnostics."""
from .errors import ConstraintViolation, DegenerateInputError, DomainError, PoleError
from .theory import DimensionRatios, TheoryContext, fc, gc
from .model import EntryDistribution, generate_dataset, make_spike_model, spike_model_for_targets
from .spectrum import Spectrum, detect_spikes, scc_spectrum, scc_values

__version__ = "0.1.0"

__all__ = [
    "ConstraintViolation", "DegenerateInputError", "DomainError", "PoleError",
    "DimensionRatios", "TheoryContext", "fc", "gc",
    "EntryDistribution", "generate_dataset", "make_spike_model", "spike_model_for_targets",
    "Spectrum", "detect_spikes", "scc_spectrum", "scc_values",
]
