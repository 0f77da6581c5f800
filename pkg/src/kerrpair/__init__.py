"""Kerr-blockaded optical-microwave pair generation: simulation and analysis."""
from .errors import (KerrPairError, ConfigurationError, IntegrationError, DecompositionError,
                     UndefinedFidelityError, FitError)
from .fock import FockBasis, QOperator, DensityMatrix
from .dynamics import ModelParams, Layout, PRESETS, preset, propagate

__version__ = "0.1.0"
from .cascade import CascadeResult, run_cascade, decay_channel_probe
from .metrics import bell_fidelity, blockade_ratio, postselect_dualrail, spdc_best_fidelity
from .fitscan import ScanSpec, run_scan, fit_model, optimize_pulse, optimize_drive
