"""Age of information, peak age and delay in a two-hop tandem with priority.

Transform-domain analysis (:mod:`tandem_aoi.analytics`), a discrete-event
simulator (:mod:`tandem_aoi.simulator`) and sweeps comparing the two
(:mod:`tandem_aoi.experiments`).
"""

from .errors import (
    DomainError,
    NumericError,
    ResourceError,
    StabilityError,
    TandemAoIError,
    UndefinedMetricError,
)
from .params import SystemParams
from .transforms import ServiceDistribution, TransformFn, parse_service

__version__ = "0.1.0"

__all__ = [
    "SystemParams",
    "ServiceDistribution",
    "TransformFn",
    "parse_service",
    "TandemAoIError",
    "DomainError",
    "StabilityError",
    "NumericError",
    "UndefinedMetricError",
    "ResourceError",
]
