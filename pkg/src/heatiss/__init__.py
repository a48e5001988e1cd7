"""Simulation and ISS certificates for three boundary-coupled delayed heat equations."""

__version__ = "0.1.0"

from .errors import HeatIssError, InputError, NumericalError
from .system_model import (
    ComponentParams,
    SpectralCertificate,
    SystemParams,
    Topology,
    check_iss_condition,
    gamma_d0_matrix,
    spectral_radius_gamma_d0,
    transfer_bound_tau,
    validate_params,
)

__all__ = [
    "ComponentParams",
    "HeatIssError",
    "InputError",
    "NumericalError",
    "SpectralCertificate",
    "SystemParams",
    "Topology",
    "__version__",
    "check_iss_condition",
    "gamma_d0_matrix",
    "spectral_radius_gamma_d0",
    "transfer_bound_tau",
    "validate_params",
]
