"""Transform-domain analysis of delay, peak age and age for both classes.

Every transform is evaluated in a form free of ``0/0`` at the origin: the
per-node delay transforms are written through residual-life transforms, and
the busy-period argument ``sigma(s) = s + lam1 (1 - gamma(s))`` is solved
directly so that ``sigma(s) / s`` stays accurate for small ``s``.

Class-2 results are exact.  Class-1 results rest on the independence
approximation that a class-1 packet finds no class-2 work with probability
``1 - rho2``; they are labelled approximate.  Functions whose name ends in
``_printed`` reproduce alternative closed forms kept for regression
comparison; :func:`analyze` reports where they disagree with the
authoritative implementation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, NumericError, UndefinedMetricError
from .params import SystemParams
from .transforms import (
    TransformFn,
    _check_nonneg,
    _out,
    busy_period_exponent,
    invert_lst_cdf,
    numeric_mean_from_lst,
    numeric_moment,
)

log = logging.getLogger(__name__)

EXACT = "exact"
APPROX = "approximate (independence assumption on class-2 occupancy)"
BOUND = "lower bound"

__all__ = [
    "tau11_lst",
    "tau12_lst",
    "tau2_lst",
    "psi2_lst",
    "case_lsts_priority",
    "case_lsts_nonpriority",
    "alpha1_lst",
    "alpha1_lst_printed",
    "tau1_lst",
    "tau1_lst_printed",
    "delta1_lst",
    "delta1_lst_printed",
    "alpha2_lst",
    "alpha2_lst_printed",
    "delta2_lst",
    "delta2_lst_printed",
    "mean_T1",
    "mean_T1_printed",
    "mean_T12",
    "mean_T2",
    "mean_T2_closed",
    "mean_A1",
    "mean_A1_printed",
    "mean_delta1",
    "mean_delta1_lower",
    "mean_delta1_lower_printed",
    "mean_A2",
    "mean_A2_printed",
    "mean_delta2",
    "mean_delta2_printed",
    "transform",
    "analyze",
    "AnalyticReport",
    "ClassMetrics",
    "Discrepancy",
    "CaseTerm",
]


class CaseTerm(NamedTuple):
    name: str
    alpha: object
    tau: object


class _Kernel:
    """Building blocks shared by the class-1 and class-2 transforms."""

    # Removable singularity of the C2 delay term at s = lam1.
    _POLE_REL = 1e-6
    _POLE_STEP = 1e-5

    def __init__(self, P: SystemParams):
        self.P = P
        self.d1, self.d2 = P.svc1, P.svc2
        self.lam1, self.lam2 = P.lam1, P.lam2
        self.rho, self.rho1, self.rho2, self.rho11 = P.rho, P.rho1, P.rho2, P.rho11
        self.mu, self.theta = P.mu, P.theta

    # -- first hop ------------------------------------------------------------

    def beta(self, s):
        """Node-1 service transform."""
        return self.mu / (self.mu + s)

    def tau11(self, s):
        return self.theta / (self.theta + s)

    # -- second hop -----------------------------------------------------------

    def tau12(self, s):
        num = (1 - self.rho) + self.rho2 * self.d2.residual(s)
        den = 1 - self.rho1 * self.d1.residual(s)
        return num / den * self.d1.lst(s)

    def sigma(self, s):
        return busy_period_exponent(self.d1, self.lam1, s)

    def kappa(self, s, sig):
        zero = s == 0
        return np.where(zero, 1 / (1 - self.rho1), sig / np.where(zero, 1.0, s))

    def omega2(self, s, sig=None):
        sig = self.sigma(s) if sig is None else sig
        k = self.kappa(s, sig)
        return (1 - self.rho) * k / (1 - self.rho2 * k * self.d2.residual(sig))

    def tau2(self, s):
        return self.omega2(s) * self.d2.lst(s)

    def psi2(self, s):
        sig = self.sigma(s)
        return self.omega2(s, sig) * self.d2.lst(sig)

    def gamma(self, s):
        return self.d1.lst(self.sigma(s))

    def gamma_residual(self, s):
        """Residual transform of the class-1 busy period, ``(1-gamma)/(s E[G1])``."""
        sig = self.sigma(s)
        return self.kappa(s, sig) * (1 - self.rho1) * self.d1.residual(sig)

    def g2_residual(self, s):
        """Residual transform of the class-2-initiated busy period."""
        sig = self.sigma(s)
        return self.kappa(s, sig) * (1 - self.rho1) * self.d2.residual(sig)

    def nu(self, s):
        return 1 - self.rho2 + self.rho2 * self.d2.residual(s)

    # -- class-1 cases ---------------------------------------------------------

    def _regular_at(self, f, s, a):
        """Evaluate ``f`` with a removable singularity at ``s = a`` smoothed over."""
        near = np.abs(s - a) < self._POLE_REL * a
        if not np.any(near):
            return f(s)
        val = f(np.where(near, a + 1.0, s))
        h = self._POLE_STEP * a
        return np.where(near, 0.5 * (f(s + h) + f(s - h)), val)

    def _dd_tau12(self, s):
        """``(tau12(s) - tau12(lam1)) / (lam1 - s)``, regular at ``s = lam1``."""
        a = self.lam1
        ta = self.tau12(np.float64(a))
        return self._regular_at(lambda x: (self.tau12(x) - ta) / (a - x), s, a)

    def eta_xi(self, s):
        lam1, mu, theta, r11 = self.lam1, self.mu, self.theta, self.rho11
        b = self.beta(s)
        t11 = self.tau11(s)
        t12 = self.tau12(s)
        t12_mu = self.tau12(s + mu)
        t12_l = self.tau12(np.float64(lam1))
        eta13 = lam1 / (lam1 + s) * b * self.tau12(s + lam1) - r11 * b * b * t12_mu
        xi13 = t11 * t12_l - r11 * t11 * b * t12_mu
        eta2 = (1 - r11) * b * t12 - b * self.tau12(s + lam1) + r11 * b * t12_mu
        xi2 = (1 - r11) * (lam1 * self._dd_tau12(s) - lam1 / (theta + s) * (t12_l - t12_mu))
        eta46 = r11 * t11 * b * b * t12_mu
        xi46 = r11 * t11 * b * t12_mu
        eta5 = r11 * t11 * b * (t12 - t12_mu)
        xi5 = r11 * t11 * (t12 - t12_mu)
        return (eta13, xi13), (eta2, xi2), (eta46, xi46), (eta5, xi5)

    def cases1(self, s):
        (e13, x13), (e2, x2), (e46, x46), (e5, x5) = self.eta_xi(s)
        b1 = self.d1.lst(s)
        res2 = self.d2.residual(s)
        free, busy = 1 - self.rho2, self.rho2 * res2
        return [
            CaseTerm("C1", free * e13 * b1, free * x13 * b1),
            CaseTerm("C2", e2 * b1, x2 * b1),
            CaseTerm("C3", busy * e13 * b1, busy * x13 * b1),
            CaseTerm("C4", free * e46 * b1, free * x46 * b1),
            CaseTerm("C5", e5 * b1, x5 * b1),
            CaseTerm("C6", busy * e46 * b1, busy * x46 * b1),
        ]

    def alpha1(self, s):
        return sum(c.alpha for c in self.cases1(s))

    def tau1(self, s):
        return sum(c.tau for c in self.cases1(s))

    def alpha1_printed(self, s):
        lam1, r11 = self.lam1, self.rho11
        b1 = self.d1.lst(s)
        nu = self.nu(s)
        inner = lam1 * nu / (lam1 + s) * b1 * self.tau12(s + lam1) - s / (s + self.theta) * r11 * b1 * (
            self.tau12(s) - self.tau12(s + self.mu) * (1 - nu * b1)
        )
        return inner * b1

    def tau1_printed(self, s):
        lam1, r11 = self.lam1, self.rho11
        t12_l = self.tau12(np.float64(lam1))

        def collected(x):
            t11 = self.tau11(x)
            w = lam1 / (lam1 - x)
            return t11 * t12_l * (self.nu(x) - w) + self.tau12(x) * ((1 - r11) * w + r11 * t11)

        return self._regular_at(collected, s, lam1) * self.d1.lst(s)

    def delta1_printed(self, s):
        lam1, r11, mu = self.lam1, self.rho11, self.mu
        b1 = self.d1.lst(s)
        b = self.beta(s)
        t11 = self.tau11(s)
        nu = self.nu(s)
        one_minus_nu_over_s = self.rho2 * self._res2_slope(s)
        term1 = t11 * self.tau12(np.float64(lam1)) * lam1 / (s - lam1) * (nu + lam1 * one_minus_nu_over_s)
        term2 = lam1 / (lam1 + s) * b1 * self.tau12(s) * (1 + lam1 * one_minus_nu_over_s)
        term3 = r11**3 * b / (1 - r11) * t11 * self.tau12(mu + s) * t11 * (1 - nu * b)
        term4 = nu * r11**2 * (mu / (mu + s)) * b
        return b1 * (term1 + term2 - term3 + term4)

    def _res2_slope(self, s):
        """``(1 - residual2(s)) / s`` with its limit at 0."""
        d2 = self.d2
        zero = s == 0
        safe = np.where(zero, 1.0, s)
        val = (1 - d2.residual(safe)) / safe
        return np.where(zero, d2.residual_mean, val)

    # -- class-2 ---------------------------------------------------------------

    def cases2(self, s):
        lam2 = self.lam2
        sig = self.sigma(s)
        sig_l = self.sigma(s + lam2)
        psi_s = self.omega2(s, sig) * self.d2.lst(sig)
        psi_l = self.omega2(s + lam2, sig_l) * self.d2.lst(sig_l)
        b2 = self.d2.lst(s)
        # lam1 (gamma(s) - gamma(s + lam2)) without subtracting two values near 1
        dg = sig_l - sig - lam2
        return [
            CaseTerm("B1", lam2 / sig_l * psi_l * b2, None),
            CaseTerm("B2", dg / sig_l * psi_l * b2, None),
            CaseTerm("B3", (psi_s - psi_l) * b2, None),
        ]

    def alpha2(self, s):
        return sum(c.alpha for c in self.cases2(s))

    def delta2(self, s):
        """``(lam2/s)(tau2 - alpha2)`` rewritten without cancellation."""
        lam2 = self.lam2
        d2 = self.d2
        sig = self.sigma(s)
        k = self.kappa(s, sig)
        om = self.omega2(s, sig)
        sig_l = self.sigma(s + lam2)
        psi_l = self.omega2(s + lam2, sig_l) * d2.lst(sig_l)
        # (1 - beta2(sigma)) / s = kappa b2 residual2(sigma)
        return lam2 * d2.lst(s) * k * (om * d2.mean * d2.residual(sig) + psi_l / sig_l)

    def alpha2_printed(self, s):
        lam2 = self.lam2
        psi_s, psi_l = self.psi2(s), self.psi2(s + lam2)
        w = lam2 / (lam2 + s)
        return ((1 - self.rho1) * w * psi_l + psi_s - psi_l + self.rho1 * w * psi_l * self.gamma_residual(s)) * self.d2.lst(s)

    def delta2_printed(self, s, denominator="lambda"):
        lam2 = self.lam2
        lam = self.P.lam if denominator == "lambda" else lam2
        first = self.rho2 / (1 - self.rho1) * self.tau2(s) * self.g2_residual(s)
        w = lam2 / (lam + s)
        second = self.psi2(lam2 + s) * self.d2.lst(s) * (w + self.rho1 * w * lam2 / s * (1 - self.gamma_residual(s)))
        return first + second


# -- public transform functions -------------------------------------------------


def _need_class1(P):
    if not P.has_class1:
        raise UndefinedMetricError("class-1 metrics need p > 0")


def _need_class2(P):
    if not P.has_class2:
        raise UndefinedMetricError("class-2 metrics need p < 1")


def tau11_lst(params: SystemParams, s):
    """First-hop delay transform ``theta / (theta + s)``."""
    return _out(_Kernel(params).tau11(_check_nonneg(s)))


def tau12_lst(params: SystemParams, s):
    """Second-hop delay transform of a class-1 packet (high priority)."""
    return _out(_Kernel(params).tau12(_check_nonneg(s)))


def tau2_lst(params: SystemParams, s):
    """Second-hop delay transform of a class-2 packet (low priority)."""
    return _out(_Kernel(params).tau2(_check_nonneg(s)))


def psi2_lst(params: SystemParams, s):
    """Transform of waiting time plus delay busy period of a class-2 packet."""
    return _out(_Kernel(params).psi2(_check_nonneg(s)))


def case_lsts_priority(params: SystemParams, s) -> list[CaseTerm]:
    """Per-case peak-age and delay contributions for class 1, cases C1..C6.

    The ``alpha`` fields sum to :func:`alpha1_lst` and the ``tau`` fields to
    :func:`tau1_lst`.
    """
    _need_class1(params)
    s = _check_nonneg(s)
    return [CaseTerm(c.name, _out(c.alpha), _out(c.tau)) for c in _Kernel(params).cases1(s)]


def case_lsts_nonpriority(params: SystemParams, s) -> list[CaseTerm]:
    """Per-case peak-age contributions for class 2, cases B1..B3."""
    _need_class2(params)
    s = _check_nonneg(s)
    return [CaseTerm(c.name, _out(c.alpha), None) for c in _Kernel(params).cases2(s)]


def alpha1_lst(params: SystemParams, s):
    """Peak-age transform of class 1 as the sum of the six case terms.

    The node-1 service transform ``mu/(mu+s)`` enters the case terms, so the
    result is a proper transform: ``alpha1_lst(params, 0) == 1``.
    """
    _need_class1(params)
    return _out(_Kernel(params).alpha1(_check_nonneg(s)))


def alpha1_lst_printed(params: SystemParams, s):
    """Collected closed form of the class-1 peak-age transform.

    Its value at 0 is ``tau12(lam1) < 1``; :func:`analyze` reports the
    deficit.
    """
    _need_class1(params)
    return _out(_Kernel(params).alpha1_printed(_check_nonneg(s)))


def tau1_lst(params: SystemParams, s):
    """End-to-end delay transform of class 1 (sum of the case terms)."""
    _need_class1(params)
    return _out(_Kernel(params).tau1(_check_nonneg(s)))


def tau1_lst_printed(params: SystemParams, s):
    """Collected closed form of the class-1 delay transform (same function)."""
    _need_class1(params)
    return _out(_Kernel(params).tau1_printed(_check_nonneg(s)))


def _aoi_from_pair(lam, tau, alpha, s):
    zero = s == 0
    safe = np.where(zero, 1.0, s)
    val = lam / safe * (tau(safe) - alpha(safe))
    return val, zero


def delta1_lst(params: SystemParams, s):
    """Age transform of class 1, ``(lam1/s)(tau1(s) - alpha1(s))``.

    At ``s = 0`` the limit (1) is returned.
    """
    _need_class1(params)
    return transform(params, "delta1")(_check_nonneg(s))


def delta1_lst_printed(params: SystemParams, s):
    """Expanded closed form of the class-1 age transform, for comparison."""
    _need_class1(params)
    return transform(params, "delta1_printed")(_check_nonneg(s))


def alpha2_lst(params: SystemParams, s):
    """Peak-age transform of class 2 from cases B1..B3.

    A class-2 arrival after the interval Psi of its predecessor sees an
    empty second hop plus fresh Poisson class-1 traffic, so the probability
    that it waits for a class-1 busy period follows from ``gamma`` directly.
    """
    _need_class2(params)
    return _out(_Kernel(params).alpha2(_check_nonneg(s)))


def alpha2_lst_printed(params: SystemParams, s):
    """Variant using stationary ``1 - rho1`` / ``rho1`` weights for B1/B2."""
    _need_class2(params)
    return _out(_Kernel(params).alpha2_printed(_check_nonneg(s)))


def delta2_lst(params: SystemParams, s):
    """Age transform of class 2, ``(lam2/s)(tau2(s) - alpha2(s))``."""
    _need_class2(params)
    return _out(_Kernel(params).delta2(_check_nonneg(s)))


def delta2_lst_printed(params: SystemParams, s, denominator: str = "lambda"):
    """Expanded closed form of the class-2 age transform, for comparison.

    ``denominator`` selects ``lam`` (default) or ``lam2`` for the
    ambiguous ``lam + s`` factors.
    """
    _need_class2(params)
    if denominator not in ("lambda", "lambda2"):
        raise DomainError("denominator must be 'lambda' or 'lambda2'")
    k = _Kernel(params)
    fn = TransformFn(lambda x: k.delta2_printed(x, denominator), singular_at_zero=True, scale=mean_A2(params))
    return fn(_check_nonneg(s))


# -- transform factory -------------------------------------------------------------


def transform(params: SystemParams, name: str) -> TransformFn:
    """Named transform of ``params`` as a :class:`TransformFn`.

    Names: tau11, tau12, tau2, psi2, tau1, tau1_printed, alpha1,
    alpha1_printed, delta1, delta1_printed, alpha2, alpha2_printed,
    delta2, delta2_printed.
    """
    P = params
    k = _Kernel(P)
    if name == "tau11":
        return TransformFn(k.tau11, name=name, scale=1 / P.theta)
    if name == "tau12":
        return TransformFn(k.tau12, name=name, scale=mean_T12(P))
    if name == "tau2":
        return TransformFn(k.tau2, name=name, scale=mean_T2_closed(P))
    if name == "psi2":
        return TransformFn(k.psi2, name=name, scale=mean_T2_closed(P))
    if name in ("tau1", "tau1_printed", "alpha1", "alpha1_printed", "delta1", "delta1_printed"):
        _need_class1(P)
        t1 = mean_T1(P)
        a1 = 1 / P.lam1 + t1
        if name == "tau1":
            return TransformFn(k.tau1, name=name, scale=t1)
        if name == "tau1_printed":
            return TransformFn(k.tau1_printed, name=name, scale=t1)
        if name == "alpha1":
            return TransformFn(k.alpha1, name=name, scale=a1)
        if name == "alpha1_printed":
            return TransformFn(k.alpha1_printed, name=name, proper=False, scale=a1)
        if name == "delta1":
            return TransformFn(
                lambda x: P.lam1 / x * (k.tau1(x) - k.alpha1(x)),
                name=name,
                singular_at_zero=True,
                limit=1.0,
                scale=a1,
            )
        return TransformFn(k.delta1_printed, name=name, proper=False, singular_at_zero=True, scale=a1)
    if name in ("alpha2", "alpha2_printed", "delta2", "delta2_printed"):
        _need_class2(P)
        a2 = 1 / P.lam2 + mean_T2_closed(P)
        if name == "alpha2":
            return TransformFn(k.alpha2, name=name, scale=a2)
        if name == "alpha2_printed":
            return TransformFn(k.alpha2_printed, name=name, scale=a2)
        if name == "delta2":
            return TransformFn(k.delta2, name=name, scale=a2)
        return TransformFn(k.delta2_printed, name=name, proper=False, singular_at_zero=True, scale=a2)
    raise DomainError(f"unknown transform {name!r}")


# -- closed-form and derived means ---------------------------------------------------


def mean_T12(params: SystemParams) -> float:
    """Class-1 second-hop delay: service plus the high-priority wait."""
    return params.b1 + params.w0 / (1 - params.rho1)


def mean_T1(params: SystemParams) -> float:
    """Class-1 end-to-end delay, ``1/(mu - lam1)`` plus the second-hop delay."""
    _need_class1(params)
    return 1 / params.theta + mean_T12(params)


def mean_T1_printed(params: SystemParams) -> float:
    """Alternative closed form whose first-hop wait carries ``1 - rho1``."""
    _need_class1(params)
    P = params
    b, b2nd = 1 / P.mu, 2 / P.mu**2
    return b + P.lam1 * b2nd / (2 * (1 - P.rho1)) + mean_T12(P)


def mean_T2_closed(params: SystemParams) -> float:
    """Class-2 delay, ``b2 + W0 / ((1 - rho1)(1 - rho))``."""
    P = params
    return P.b2 + P.w0 / ((1 - P.rho1) * (1 - P.rho))


def mean_T2(params: SystemParams) -> float:
    """Class-2 delay as ``-tau2'(0)`` from the transform."""
    return numeric_mean_from_lst(transform(params, "tau2"))


def mean_A1(params: SystemParams) -> float:
    """Class-1 mean peak age from the case decomposition (``-alpha1'(0)``).

    Closed form: ``1/theta + E[T12] + b1 + tau12(lam1) (1/lam1 + rho2 b2~)``
    with ``b2~`` the mean residual class-2 service.
    """
    _need_class1(params)
    P = params
    t12_l = float(_Kernel(P).tau12(np.float64(P.lam1)))
    return 1 / P.theta + mean_T12(P) + P.b1 + t12_l * (1 / P.lam1 + P.rho2 * P.svc2.residual_mean)


def mean_A1_printed(params: SystemParams) -> float:
    """Alternative closed form of the class-1 mean peak age."""
    _need_class1(params)
    P = params
    k = _Kernel(P)
    t12_l = float(k.tau12(np.float64(P.lam1)))
    t12_mu = float(k.tau12(np.float64(P.mu)))
    b = 1 / P.mu
    bt2 = P.svc2.residual_mean
    nu_bar = 1 - P.rho2 + P.rho2 * bt2
    et11, et12 = 1 / P.theta, mean_T12(P)
    r11 = P.rho11
    return (
        (1 / P.lam1 + P.b1 + P.rho2 * bt2) * t12_l
        - r11 * (b + b * t12_mu) * nu_bar
        + (1 - r11) * (P.b1 + et12 * t12_mu)
        + r11 * nu_bar * (P.b1 + et11 + et12 * t12_mu)
        + r11 * (P.b1 + et11 + et12 * (1 - t12_mu))
    )


def mean_delta1(params: SystemParams) -> float:
    """Class-1 mean age from the case model, ``lam1 (E[A^2] - E[T^2]) / 2``.

    Approximate when both classes are present; exact at ``p = 1``.
    """
    _need_class1(params)
    a2 = numeric_moment(transform(params, "alpha1"), 2)
    t2 = numeric_moment(transform(params, "tau1"), 2)
    return params.lam1 * (a2 - t2) / 2


def mean_delta1_lower(params: SystemParams) -> float:
    """Lower bound on the class-1 mean age.

    Removing class 2 can only advance every class-1 departure (it never
    helps a class-1 packet to find a low-priority packet in service), so the
    age of the class-1-only tandem is pathwise smaller.  That tandem is
    covered exactly by the case model with ``p = 1``.
    """
    _need_class1(params)
    P = params
    return mean_delta1(P.replace(lam=P.lam1, p=1.0))


def mean_delta1_lower_printed(params: SystemParams) -> float:
    """Alternative closed-form bound; not a valid bound at high ``p``."""
    _need_class1(params)
    P = params
    t12_l = float(_Kernel(P).tau12(np.float64(P.lam1)))
    et1 = mean_T1(P)
    r11, lam1, mu, theta = P.rho11, P.lam1, P.mu, P.theta
    tail = 1 / theta - r11 / mu + r11 / theta + 1 / lam1 + mu / lam1**2 - 1 / r11**2 - 1 / r11
    return P.b1 + t12_l / lam1 + t12_l * et1 + P.rho1**2 * et1 + r11**2 * tail


def mean_A2(params: SystemParams) -> float:
    """Class-2 mean peak age, ``1/lam2 + E[T2]``."""
    _need_class2(params)
    return 1 / params.lam2 + mean_T2_closed(params)


def _psi2_and_slope(P: SystemParams, s: float):
    """``psi2(s)`` and its derivative from the quotient form of psi2."""
    k = _Kernel(P)
    d1, d2 = P.svc1, P.svc2
    lam1, lam2 = P.lam1, P.lam2
    sig = float(k.sigma(np.float64(s)))
    g1p = float(d1.lst_derivative(sig))
    sig_p = 1 / (1 + lam1 * g1p)
    b2s, b2p = float(d2.lst(sig)), float(d2.lst_derivative(sig))
    num = (1 - P.rho) * sig * b2s
    num_p = (1 - P.rho) * sig_p * (b2s + sig * b2p)
    den = s - lam2 + lam2 * b2s
    den_p = 1 + lam2 * b2p * sig_p
    return num / den, (num_p * den - num * den_p) / den**2, sig, sig_p


def mean_A2_printed(params: SystemParams) -> float:
    """Alternative closed form of the class-2 mean peak age."""
    _need_class2(params)
    P = params
    psi_l = _psi2_and_slope(P, P.lam2)[0]
    return (
        P.b2
        + P.w0 / ((1 - P.rho) * (1 - P.rho1))
        + P.b1 / (1 - P.rho1)
        + psi_l / P.lam2
        + P.rho1 * psi_l * P.b2 / (2 * (1 - P.rho1) ** 2)
    )


def mean_delta2(params: SystemParams) -> float:
    """Class-2 mean age in closed form.

    With ``Psi`` the waiting time plus the delay busy period ``G2`` of the
    predecessor, and ``Phi`` the transform of the extra wait a packet
    arriving after ``Psi`` needs before its service,
    ``E[Delta2] = b2 + lam2/2 (2 E[W2] E[G2] + E[G2^2] - 2 psi'(lam2) m1 + psi(lam2) m2)``
    where ``m1, m2`` are the first two moments of the quantity whose
    transform is ``Phi(s) / sigma(s + lam2)``-weighted.
    """
    _need_class2(params)
    P = params
    r1 = P.rho1
    psi_l, psi_p, c, sig_p = _psi2_and_slope(P, P.lam2)
    eg1_2 = P.svc1.m2 / (1 - r1) ** 3
    eg2 = P.b2 / (1 - r1)
    eg2_2 = P.svc2.m2 / (1 - r1) ** 2 + P.lam1 * P.b2 * P.svc1.m2 / (1 - r1) ** 3
    ew2 = P.w0 / ((1 - r1) * (1 - P.rho))
    m1 = 1 / ((1 - r1) * c)
    m2 = P.lam1 * eg1_2 / c + 2 * sig_p / ((1 - r1) * c**2)
    return P.b2 + P.lam2 / 2 * (2 * ew2 * eg2 + eg2_2 - 2 * psi_p * m1 + psi_l * m2)


def mean_delta2_printed(params: SystemParams) -> float:
    """Alternative closed form of the class-2 mean age."""
    _need_class2(params)
    P = params
    r1 = P.rho1
    psi_l, psi_p, _, _ = _psi2_and_slope(P, P.lam2)
    d1 = P.svc1
    first = P.rho2 / (1 - r1) * (P.b2 + P.w0 / ((1 - P.rho) * (1 - r1)) + P.b1 / (1 - r1))
    second = psi_l * (
        1 / P.lam2 + r1 * P.lam2 / 2 * (d1.m3 / d1.m2 / (3 * (1 - r1)) + P.lam1 * d1.m2 / (1 - r1) ** 2)
    )
    third = psi_l * (1 + r1 * P.rho2 / (2 * (1 - r1) ** 2)) * (P.b2 + psi_p)
    return first + second + third


# -- report ------------------------------------------------------------------------


@dataclass
class Discrepancy:
    """A closed form that disagrees with the derivative of its transform."""

    quantity: str
    closed_form: float
    numeric: float
    note: str = ""

    @property
    def rel_diff(self) -> float:
        return abs(self.closed_form - self.numeric) / abs(self.numeric)


@dataclass
class ClassMetrics:
    """Per-class summary.  ``aoi_kind`` says whether ``mean_aoi`` is exact or a bound."""

    mean_delay: float
    mean_paoi: float
    mean_aoi: float
    label: str
    aoi_kind: str
    alpha_deficit: float
    extras: dict = field(default_factory=dict)
    cdf: dict = field(default_factory=dict)


@dataclass
class AnalyticReport:
    params: SystemParams
    class1: ClassMetrics | None
    class2: ClassMetrics | None
    discrepancies: list = field(default_factory=list)
    cdf_grid: np.ndarray | None = None

    def format(self) -> str:
        lines = [f"params: {self.params.describe()}"]
        for j, cm in ((1, self.class1), (2, self.class2)):
            if cm is None:
                lines.append(f"class {j}: not applicable (no class-{j} traffic)")
                continue
            lines.append(f"class {j} [{cm.label}]")
            lines.append(f"  E[T{j}]  = {cm.mean_delay:.6f}")
            lines.append(f"  E[A{j}]  = {cm.mean_paoi:.6f}")
            lines.append(f"  E[D{j}]  = {cm.mean_aoi:.6f}  ({cm.aoi_kind})")
            lines.append(f"  alpha{j}(0) deficit = {cm.alpha_deficit:.3e}")
            for key in sorted(cm.extras):
                lines.append(f"  {key} = {cm.extras[key]:.6f}")
        if self.discrepancies:
            lines.append("closed form vs transform derivative:")
            for d in self.discrepancies:
                lines.append(
                    f"  {d.quantity}: closed {d.closed_form:.6f} numeric {d.numeric:.6f} "
                    f"rel {d.rel_diff:.2e} {d.note}".rstrip()
                )
        return "\n".join(lines)


def _compare(out, quantity, closed, numeric, note="", tol=1e-6):
    d = Discrepancy(quantity, float(closed), float(numeric), note)
    if d.rel_diff > tol:
        log.warning("%s: closed form %.8g vs numeric %.8g (rel %.2e) %s", quantity, closed, numeric, d.rel_diff, note)
        out.append(d)
    return d


def _cdfs(P, names, grid):
    cdf = {}
    for key, name in names.items():
        try:
            cdf[key] = invert_lst_cdf(transform(P, name), grid)
        except NumericError as exc:
            log.warning("CDF of %s did not reach tolerance (residual %.2e)", name, exc.residual)
            cdf[key] = np.asarray(exc.estimate)
    return cdf


def analyze(params: SystemParams, cdf_grid=None) -> AnalyticReport:
    """All means, bounds and consistency checks for one parameter point.

    Closed forms are compared with numeric derivatives of the transforms;
    disagreements above 1e-6 (relative) are logged and listed in the report.
    """
    P = params
    disc: list = []
    grid = None if cdf_grid is None else np.asarray(cdf_grid, dtype=float)
    c1 = c2 = None
    if P.has_class1:
        k = _Kernel(P)
        t1 = mean_T1(P)
        a1 = mean_A1(P)
        num_t1 = numeric_mean_from_lst(transform(P, "tau1"))
        num_a1 = numeric_mean_from_lst(transform(P, "alpha1"))
        _compare(disc, "E[T1]", t1, num_t1, "delay transform relies on the independence assumption")
        _compare(disc, "E[T1] alternative", mean_T1_printed(P), t1, "first-hop wait uses 1-rho1")
        _compare(disc, "E[A1]", a1, num_a1)
        _compare(disc, "E[A1] alternative", mean_A1_printed(P), num_a1)
        deficit = 1 - float(k.alpha1_printed(np.float64(0.0)))
        lower = mean_delta1_lower(P)
        extras = {
            "E[D1] model": mean_delta1(P),
            "E[D1] alternative bound": mean_delta1_lower_printed(P),
            "E[T1] from transform": num_t1,
            "alpha1 collected form deficit": deficit,
        }
        c1 = ClassMetrics(t1, a1, lower, APPROX, BOUND, 1 - float(k.alpha1(np.float64(0.0))), extras)
        if grid is not None:
            c1.cdf = _cdfs(P, {"T": "tau1", "A": "alpha1", "D": "delta1"}, grid)
    if P.has_class2:
        t2 = mean_T2(P)
        a2 = mean_A2(P)
        d2 = mean_delta2(P)
        _compare(disc, "E[T2]", mean_T2_closed(P), t2)
        _compare(disc, "E[A2]", a2, numeric_mean_from_lst(transform(P, "alpha2")))
        _compare(disc, "E[A2] alternative", mean_A2_printed(P), a2, "stationary busy-period weights")
        _compare(disc, "E[D2]", d2, numeric_mean_from_lst(transform(P, "delta2")))
        _compare(disc, "E[D2] alternative", mean_delta2_printed(P), d2)
        k = _Kernel(P)
        extras = {
            "alpha2 stationary-weight variant deficit": 1 - float(k.alpha2_printed(np.float64(0.0))),
        }
        c2 = ClassMetrics(t2, a2, d2, EXACT, EXACT, 1 - float(k.alpha2(np.float64(0.0))), extras)
        if grid is not None:
            c2.cdf = _cdfs(P, {"T": "tau2", "A": "alpha2", "D": "delta2"}, grid)
    return AnalyticReport(P, c1, c2, disc, grid)
