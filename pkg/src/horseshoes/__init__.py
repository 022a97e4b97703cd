"""Desk-scale construction of horseshoes approximating hyperbolic ergodic measures
of surface maps."""
from .dynamics import make_system, sample_orbit, orbit_from, BUILTINS
from .cocycle import lyapunov_spectrum_qr, orbit_cocycle, oseledets_splitting
from .pipeline import PipelineConfig, config_from_dict, load_config, run_extract, run_nest

__all__ = ["make_system", "sample_orbit", "orbit_from", "BUILTINS", "lyapunov_spectrum_qr",
           "orbit_cocycle", "oseledets_splitting", "PipelineConfig", "config_from_dict",
           "load_config", "run_extract", "run_nest"]
