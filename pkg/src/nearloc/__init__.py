"""Near-field joint localization and synchronization with a linear array."""

from .scenario import ModelKind, Scatterer, Scenario, channel_gain, classify_regime, phase
from .fim import PilotSpectrum, fim, fim_numeric, peb, peb_for, to_position_domain
from .synth import ObservationGrid, synthesize
from .estimation import EstimatorConfig, localize_far_field_known_bias, localize_near_field

__all__ = [
    "ModelKind", "Scatterer", "Scenario", "channel_gain", "classify_regime", "phase",
    "PilotSpectrum", "fim", "fim_numeric", "peb", "peb_for", "to_position_domain",
    "ObservationGrid", "synthesize",
    "EstimatorConfig", "localize_far_field_known_bias", "localize_near_field",
]
