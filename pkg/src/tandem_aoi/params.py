"""Parameter bundle for the two-class tandem."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import DomainError, StabilityError
from .transforms import ServiceDistribution

__all__ = ["SystemParams"]


def _exp1():
    return ServiceDistribution.exponential(1.0)


@dataclass(frozen=True)
class SystemParams:
    """Arrival, routing and service parameters of the tandem.

    Class-1 packets (a fraction ``p`` of a Poisson(``lam``) stream) cross an
    exponential(``mu``) first hop and then get head-of-line priority at the
    shared second hop; class-2 packets only visit the second hop.

    Raises:
        DomainError: on non-positive rates or ``p`` outside [0, 1].
        StabilityError: when ``rho >= 1`` or ``rho11 >= 1``.
    """

    lam: float
    p: float
    mu: float = 1.0
    svc1: ServiceDistribution = field(default_factory=_exp1)
    svc2: ServiceDistribution = field(default_factory=_exp1)

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if not 0 <= self.p <= 1:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")
        if not self.mu > 0:
            raise DomainError(f"mu must be positive, got {self.mu}")
        if self.rho >= 1:
            raise StabilityError(f"second hop is unstable: rho = {self.rho:.6g} >= 1")
        if self.rho11 >= 1:
            raise StabilityError(f"first hop is unstable: rho11 = {self.rho11:.6g} >= 1")

    @classmethod
    def from_utilization(cls, rho, p, mu=1.0, svc1=None, svc2=None):
        """Pick ``lam`` so the second hop runs at load ``rho``."""
        svc1 = svc1 or _exp1()
        svc2 = svc2 or _exp1()
        per_packet = p * svc1.mean + (1 - p) * svc2.mean
        return cls(rho / per_packet, p, mu, svc1, svc2)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @property
    def lam1(self) -> float:
        return self.p * self.lam

    @property
    def lam2(self) -> float:
        return (1 - self.p) * self.lam

    @property
    def b1(self) -> float:
        return self.svc1.mean

    @property
    def b2(self) -> float:
        return self.svc2.mean

    @property
    def rho1(self) -> float:
        return self.lam1 * self.b1

    @property
    def rho2(self) -> float:
        return self.lam2 * self.b2

    @property
    def rho(self) -> float:
        return self.rho1 + self.rho2

    @property
    def rho11(self) -> float:
        """First-hop utilisation."""
        return self.lam1 / self.mu

    @property
    def theta(self) -> float:
        """Rate of the exponential first-hop sojourn time."""
        return self.mu - self.lam1

    @property
    def node1(self) -> ServiceDistribution:
        return ServiceDistribution.exponential(self.mu)

    @property
    def w0(self) -> float:
        """Mean residual work found by an arrival at the second hop."""
        return 0.5 * (self.lam1 * self.svc1.m2 + self.lam2 * self.svc2.m2)

    @property
    def has_class1(self) -> bool:
        return self.lam1 > 0

    @property
    def has_class2(self) -> bool:
        return self.lam2 > 0

    def describe(self) -> str:
        return (
            f"lam={self.lam:g} p={self.p:g} mu={self.mu:g} "
            f"svc1={self.svc1.describe()} svc2={self.svc2.describe()} "
            f"rho={self.rho:.4g} rho1={self.rho1:.4g} rho11={self.rho11:.4g}"
        )
