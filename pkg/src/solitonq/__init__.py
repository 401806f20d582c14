"""Quantum vector solitons: Bethe-ansatz amplitudes, pulse-center sampling,
the expansion/compression protocol, EPR metrics and a classical NLSE solver."""
from .model import (AdiabaticSchedule, DerivedScales, NoBoundStateError, Segment, SolitonParams,
                    derive_scales, shot_noise_dp)
from .bethe import Configuration, PulseCenterState, energy, eval_eigenamplitude, eval_time_amplitude
from ._accel import backend, set_backend

__version__ = "0.1.0"
