"""Frequency-domain rate certificates for Lur'e systems and damped oscillators."""

__version__ = "0.1.0"

from .errors import LureError  # noqa: F401
from .systems import LtiSystem, zero_dynamics  # noqa: F401
from .dissipativity import (SupplyRate, CandidateStorage, fdi_grid_check,  # noqa: F401
                            lmi_max_eig, popov_eval)
from .oscillator import OscillatorParams, build_oscillator, certify  # noqa: F401
