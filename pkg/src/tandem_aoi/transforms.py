"""Service-time catalog and Laplace-Stieltjes transform numerics.

Everything here is vectorised over ``s`` and accepts complex arguments with
non-negative real part, which the Euler inversion needs.  Quantities of the
form ``(1 - f(s)) / s`` are never formed by subtraction near ``s = 0``;
each catalog law has a closed-form residual transform instead, so moments
recovered by finite differences keep full double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special, stats

from .errors import DomainError, NumericError, StabilityError

__all__ = [
    "ServiceDistribution",
    "TransformFn",
    "lst_eval",
    "residual_lst",
    "busy_period_lst",
    "busy_period_exponent",
    "numeric_mean_from_lst",
    "numeric_moment",
    "invert_lst_cdf",
    "parse_service",
]

_SMALL = 1e-4


def _expm1(z):
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return np.expm1(z)
    small = np.abs(z) < _SMALL
    zs = np.where(small, z, 0)
    series = zs * (1 + zs / 2 * (1 + zs / 3 * (1 + zs / 4)))
    return np.where(small, series, np.exp(np.where(small, 0, z)) - 1)


def _log1p(z):
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return np.log1p(z)
    small = np.abs(z) < _SMALL
    zs = np.where(small, z, 0)
    series = zs * (1 - zs * (1 / 2 - zs * (1 / 3 - zs / 4)))
    return np.where(small, series, np.log(1 + np.where(small, 0, z)))


def _as_s(s):
    arr = np.asarray(s)
    if arr.dtype.kind in "iub":
        arr = arr.astype(float)
    return arr


def _out(x):
    x = np.asarray(x)
    if x.ndim == 0:
        return x.item()
    return x


def _check_nonneg(s, name="s"):
    arr = _as_s(s)
    if np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(np.real(arr) < 0):
        raise DomainError(f"{name} must have non-negative real part, got {s!r}")
    return arr


@dataclass(frozen=True)
class ServiceDistribution:
    """A service-time law from a small catalog.

    ``params`` layout per kind:

    - exponential: ``(rate,)``
    - deterministic: ``(value,)``
    - erlang: ``(k, rate)`` with integer ``k``
    - gamma: ``(shape, rate)``
    - hyperexponential: ``(probs, rates)`` as tuples
    """

    kind: str
    params: tuple

    def __post_init__(self):
        kind, prm = self.kind, self.params
        if kind in ("exponential", "deterministic"):
            if len(prm) != 1 or not prm[0] > 0:
                raise DomainError(f"{kind} needs one positive parameter, got {prm}")
        elif kind in ("erlang", "gamma"):
            if len(prm) != 2 or not (prm[0] > 0 and prm[1] > 0):
                raise DomainError(f"{kind} needs (shape, rate) > 0, got {prm}")
            if kind == "erlang" and int(prm[0]) != prm[0]:
                raise DomainError("erlang shape must be an integer")
        elif kind == "hyperexponential":
            probs, rates = prm
            if len(probs) != len(rates) or not probs:
                raise DomainError("hyperexponential needs matching probs and rates")
            if any(q < 0 for q in probs) or abs(sum(probs) - 1) > 1e-12:
                raise DomainError("hyperexponential branch probabilities must sum to 1")
            if any(r <= 0 for r in rates):
                raise DomainError("hyperexponential rates must be positive")
        else:
            raise DomainError(f"unknown service kind {kind!r}")

    # -- constructors -----------------------------------------------------

    @classmethod
    def exponential(cls, rate=None, *, mean=None):
        if (rate is None) == (mean is None):
            raise DomainError("give exactly one of rate or mean")
        return cls("exponential", (float(rate if rate is not None else 1.0 / mean),))

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", (float(value),))

    @classmethod
    def erlang(cls, k, rate):
        if int(k) != k:
            raise DomainError(f"erlang shape must be an integer, got {k}")
        return cls("erlang", (int(k), float(rate)))

    @classmethod
    def gamma(cls, shape, rate):
        return cls("gamma", (float(shape), float(rate)))

    @classmethod
    def hyperexponential(cls, probs, rates):
        return cls("hyperexponential", (tuple(float(q) for q in probs), tuple(float(r) for r in rates)))

    # -- moments ----------------------------------------------------------

    def moment(self, k: int) -> float:
        """Raw moment ``E[S**k]`` for k = 1, 2, 3."""
        if k not in (1, 2, 3):
            raise DomainError("only the first three moments are tabulated")
        kind, prm = self.kind, self.params
        if kind == "exponential":
            return math.factorial(k) / prm[0] ** k
        if kind == "deterministic":
            return prm[0] ** k
        if kind in ("erlang", "gamma"):
            shape, rate = prm
            return math.prod(shape + i for i in range(k)) / rate**k
        probs, rates = prm
        return sum(q * math.factorial(k) / r**k for q, r in zip(probs, rates))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def m2(self) -> float:
        return self.moment(2)

    @property
    def m3(self) -> float:
        return self.moment(3)

    @property
    def scv(self) -> float:
        return self.m2 / self.mean**2 - 1

    @property
    def residual_mean(self) -> float:
        """Mean of the residual (equilibrium) law, ``b2 / (2 b)``."""
        return self.m2 / (2 * self.mean)

    # -- transforms -------------------------------------------------------

    def lst(self, s):
        """``E[exp(-s S)]``; vectorised, no domain check."""
        s = _as_s(s)
        kind, prm = self.kind, self.params
        if kind == "exponential":
            return prm[0] / (prm[0] + s)
        if kind == "deterministic":
            return np.exp(-s * prm[0])
        if kind in ("erlang", "gamma"):
            shape, rate = prm
            return np.exp(-shape * _log1p(s / rate))
        probs, rates = prm
        # 1 - s sum(q / (r + s)) is exactly 1 at s = 0, unlike the plain mixture sum.
        return 1 - s * sum(q / (r + s) for q, r in zip(probs, rates))

    def residual(self, s):
        """Residual-life transform ``(1 - lst(s)) / (s * mean)``, stable at 0."""
        s = _as_s(s)
        kind, prm = self.kind, self.params
        if kind == "exponential":
            return prm[0] / (prm[0] + s)
        zero = s == 0
        safe = np.where(zero, 1.0, s)
        if kind == "deterministic":
            x = safe * prm[0]
            val = -_expm1(-x) / x
        elif kind in ("erlang", "gamma"):
            shape, rate = prm
            val = -_expm1(-shape * _log1p(safe / rate)) / (safe * self.mean)
        else:
            probs, rates = prm
            val = sum(q / (r + s) for q, r in zip(probs, rates)) / self.mean
            return val
        return np.where(zero, 1.0, val)

    def lst_derivative(self, s):
        """First derivative of :meth:`lst` with respect to ``s``."""
        s = _as_s(s)
        kind, prm = self.kind, self.params
        if kind == "exponential":
            return -prm[0] / (prm[0] + s) ** 2
        if kind == "deterministic":
            return -prm[0] * np.exp(-s * prm[0])
        if kind in ("erlang", "gamma"):
            shape, rate = prm
            return -(shape / rate) * np.exp(-(shape + 1) * _log1p(s / rate))
        probs, rates = prm
        return -sum(q * r / (r + s) ** 2 for q, r in zip(probs, rates))

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        kind, prm = self.kind, self.params
        if kind == "exponential":
            return -np.expm1(-prm[0] * np.maximum(t, 0))
        if kind == "deterministic":
            return (t >= prm[0]).astype(float)
        if kind in ("erlang", "gamma"):
            return stats.gamma.cdf(t, prm[0], scale=1 / prm[1])
        probs, rates = prm
        return sum(q * -np.expm1(-r * np.maximum(t, 0)) for q, r in zip(probs, rates))

    def sample(self, rng: np.random.Generator, size=None):
        kind, prm = self.kind, self.params
        if kind == "exponential":
            return rng.exponential(1 / prm[0], size)
        if kind == "deterministic":
            return np.full(size, prm[0]) if size is not None else prm[0]
        if kind in ("erlang", "gamma"):
            return rng.gamma(prm[0], 1 / prm[1], size)
        probs, rates = prm
        branch = rng.choice(len(probs), size=size, p=probs)
        return rng.exponential(1.0, size) / np.asarray(rates)[branch]

    def describe(self) -> str:
        if self.kind == "hyperexponential":
            return f"hyperexponential(p={list(self.params[0])}, rates={list(self.params[1])})"
        return f"{self.kind}{self.params}"


def parse_service(spec: str, mean: float) -> ServiceDistribution:
    """Build a catalog law from a short descriptor string and a target mean.

    Accepted forms: ``exp``, ``det``, ``erlang:K``, ``gamma:SHAPE`` and
    ``hyperexp:SCV`` (two balanced-means branches, SCV >= 1).
    """
    if mean <= 0:
        raise DomainError("service mean must be positive")
    name, _, arg = spec.strip().lower().partition(":")
    try:
        return _parse_service(name, arg, mean, spec)
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"bad service spec {spec!r}: {exc}") from None


def _parse_service(name, arg, mean, spec):
    if name in ("exp", "exponential", "m"):
        return ServiceDistribution.exponential(mean=mean)
    if name in ("det", "deterministic", "d"):
        return ServiceDistribution.deterministic(mean)
    if name == "erlang":
        k = int(arg or 2)
        return ServiceDistribution.erlang(k, k / mean)
    if name == "gamma":
        shape = float(arg or 2.0)
        return ServiceDistribution.gamma(shape, shape / mean)
    if name in ("hyperexp", "hyperexponential", "h2"):
        scv = float(arg or 2.0)
        if scv < 1:
            raise DomainError("hyperexponential needs SCV >= 1")
        p1 = 0.5 * (1 + math.sqrt((scv - 1) / (scv + 1)))
        p2 = 1 - p1
        return ServiceDistribution.hyperexponential((p1, p2), (2 * p1 / mean, 2 * p2 / mean))
    raise DomainError(f"unknown service spec {spec!r}")


class TransformFn:
    """An evaluable LST with metadata about its behaviour at ``s = 0``.

    ``func`` must be vectorised over ``s``.  When ``singular_at_zero`` is set
    the expression is 0/0 at the origin and ``limit`` is returned there; if
    ``limit`` is None it is extrapolated from the right.
    """

    def __init__(
        self,
        func: Callable,
        *,
        name: str = "",
        proper: bool = True,
        singular_at_zero: bool = False,
        limit: float | None = None,
        scale: float | None = None,
    ):
        self.func = func
        self.name = name
        self.proper = proper
        self.singular_at_zero = singular_at_zero
        self.limit = limit
        self.scale = scale

    def __repr__(self):
        return f"TransformFn({self.name or self.func!r})"

    def __call__(self, s):
        s = _as_s(s)
        if not self.singular_at_zero:
            return _out(self.func(s))
        zero = s == 0
        if not np.any(zero):
            return _out(self.func(s))
        val = np.asarray(self.func(np.where(zero, 1.0, s)), dtype=complex if np.iscomplexobj(s) else float)
        return _out(np.where(zero, self.at_zero(), val))

    def at_zero(self) -> float:
        if not self.singular_at_zero:
            return float(np.real(self.func(np.float64(0.0))))
        if self.limit is not None:
            return float(self.limit)
        return _limit_from_right(self.func, self.time_scale())

    def time_scale(self) -> float:
        """Characteristic time of the underlying law (mean if known)."""
        if self.scale is not None:
            return float(self.scale)
        eps = 1e-5
        if self.singular_at_zero:
            f1, f2 = float(np.real(self.func(eps))), float(np.real(self.func(2 * eps)))
            m = (f1 - f2) / eps
        else:
            m = (self.at_zero() - float(np.real(self.func(eps)))) / eps
        if not np.isfinite(m) or m <= 0:
            m = 1.0
        return m


def _as_transform(f) -> TransformFn:
    if isinstance(f, TransformFn):
        return f
    if isinstance(f, ServiceDistribution):
        return TransformFn(f.lst, name=f.describe(), scale=f.mean)
    return TransformFn(f)


def _richardson(values, ratio=2.0):
    """Extrapolate a sequence computed at h, h/ratio, ... with an error series in h."""
    table = [np.asarray(values, dtype=float)]
    for j in range(1, len(values)):
        prev = table[-1]
        fac = ratio**j
        table.append(prev[1:] + (prev[1:] - prev[:-1]) / (fac - 1))
    return float(table[-1][0]), float(abs(table[-1][0] - table[-2][-1]))


def _limit_from_right(func, scale, levels=5):
    h = 1e-3 / scale
    hs = h / 2.0 ** np.arange(levels)
    vals = [float(np.real(func(x))) for x in hs]
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite evaluations near s = 0", estimate=vals[-1])
    est, _ = _richardson(vals)
    return est


# -- scalar operations ------------------------------------------------------


def lst_eval(dist: ServiceDistribution, s: float) -> float:
    """``E[exp(-s S)]`` for a catalog law at real ``s >= 0``."""
    if np.iscomplexobj(s) or s < 0 or not np.isfinite(s):
        raise DomainError(f"s must be a finite real >= 0, got {s!r}")
    return float(dist.lst(float(s)))


def residual_lst(dist: ServiceDistribution, s: float) -> float:
    """Transform of the residual service time, ``(1 - beta(s)) / (s b)``.

    Returns the limit 1 at ``s = 0``.
    """
    if np.iscomplexobj(s) or s < 0 or not np.isfinite(s):
        raise DomainError(f"s must be a finite real >= 0, got {s!r}")
    return float(dist.residual(float(s)))


def busy_period_lst(
    beta1,
    lambda1: float,
    s: float,
    *,
    mean: float | None = None,
    damping: float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> float:
    """Busy-period LST: the root in [0, 1] of ``g = beta1(s + lambda1 - lambda1 g)``.

    ``beta1`` is a :class:`ServiceDistribution` or any callable LST; for a
    plain callable pass ``mean`` or it is estimated numerically.  The
    iteration starts at 0 and increases monotonically to the minimal root.
    """
    if np.iscomplexobj(s) or s < 0:
        raise DomainError(f"s must be a real >= 0, got {s!r}")
    if lambda1 < 0:
        raise DomainError("lambda1 must be non-negative")
    if not 0 < damping <= 1:
        raise DomainError("damping must lie in (0, 1]")
    if isinstance(beta1, ServiceDistribution):
        f, b1 = beta1.lst, beta1.mean
    else:
        f = beta1
        b1 = mean if mean is not None else numeric_mean_from_lst(_as_transform(beta1))
    rho1 = lambda1 * b1
    if rho1 >= 1:
        raise StabilityError(f"busy period is not proper: rho1 = {rho1:.6g} >= 1")
    if s == 0:
        return 1.0
    g = 0.0
    for _ in range(max_iter):
        g_new = (1 - damping) * g + damping * float(f(s + lambda1 - lambda1 * g))
        if abs(g_new - g) <= tol * 1e-2:
            g = g_new
            break
        g = g_new
    residual = abs(g - float(f(s + lambda1 - lambda1 * g)))
    if residual > tol:
        raise NumericError(
            f"busy-period fixed point did not converge (residual {residual:.3e})",
            estimate=g,
            residual=residual,
        )
    return g


def busy_period_exponent(dist: ServiceDistribution, lambda1: float, s, *, tol=1e-15, max_iter=200):
    """``sigma(s) = s + lambda1 (1 - gamma(s))`` for the busy period of ``dist``.

    Solves ``sigma (1 - rho1 residual(sigma)) = s`` by Newton's method from
    ``sigma = s + lambda1`` (where the convex residual function is positive),
    so ``sigma / s`` stays accurate as ``s -> 0``.  Vectorised and valid for
    complex ``s`` with non-negative real part.  ``gamma(s) = dist.lst(sigma)``.
    """
    s = _as_s(s)
    if lambda1 == 0:
        return s + 0.0
    b1 = dist.mean
    rho1 = lambda1 * b1
    if rho1 >= 1:
        raise StabilityError(f"rho1 = {rho1:.6g} >= 1")
    sig = s + lambda1
    for _ in range(max_iter):
        f = sig * (1 - rho1 * dist.residual(sig)) - s
        fp = 1 + lambda1 * dist.lst_derivative(sig)
        step = f / fp
        sig = sig - step
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(sig), 1e-300)):
            break
    else:
        # Newton stalled somewhere (far complex arguments); polish by contraction.
        for _ in range(10_000):
            new = s + rho1 * sig * dist.residual(sig)
            done = np.all(np.abs(new - sig) <= 1e-14 * np.maximum(np.abs(new), 1e-300))
            sig = new
            if done:
                break
        else:
            raise NumericError("busy-period exponent did not converge", estimate=sig)
    return sig


# -- numeric derivatives ----------------------------------------------------


def _forward_table(f, f0, order, h, levels):
    vals = []
    for k in range(levels):
        hk = h / 2.0**k
        if order == 1:
            d = (float(np.real(f(hk))) - f0) / hk
        else:
            d = (float(np.real(f(2 * hk))) - 2 * float(np.real(f(hk))) + f0) / hk**2
        vals.append(d)
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite transform values near s = 0")
    return vals


def numeric_moment(f, order: int = 1, *, scale: float | None = None) -> float:
    """``(-1)**order * f^{(order)}(0)`` from one-sided differences.

    Forward differences keep every evaluation inside ``s >= 0``; four
    levels of Richardson extrapolation remove the O(h^3) terms.  ``order``
    may be 1 or 2.
    """
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    tf = _as_transform(f)
    m = scale if scale is not None else tf.time_scale()
    f0 = tf.at_zero()
    h = (2e-3 if order == 1 else 1e-2) / m
    est, err = _richardson(_forward_table(tf, f0, order, h, levels=5))
    if not np.isfinite(est):
        raise NumericError("numeric derivative is not finite", estimate=est, residual=err)
    return est if order == 2 else -est


def numeric_mean_from_lst(f, *, scale: float | None = None) -> float:
    """Mean ``-f'(0)`` of the law whose LST is ``f``."""
    return numeric_moment(f, 1, scale=scale)


# -- inversion --------------------------------------------------------------


def invert_lst_cdf(
    f,
    t,
    *,
    n_terms: int = 15,
    n_euler: int = 11,
    abscissa: float = 18.4,
    tol: float = 1e-6,
):
    """CDF ``F(t)`` of the law with LST ``f`` by Euler-summation inversion.

    The Laplace transform of the CDF, ``f(s)/s``, is inverted with the
    trapezoidal Bromwich rule and ``n_euler`` binomial averages over partial
    sums ``n_terms .. n_terms + n_euler`` (about 27 terms by default).
    Results are clamped to [0, 1].  The difference between two consecutive
    Euler averages serves as the residual; above ``tol`` a
    :class:`NumericError` carries the estimate and residual.
    """
    tf = _as_transform(f)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or np.any(~np.isfinite(t_arr)):
        raise DomainError("t must be finite and non-negative")
    out = np.empty_like(t_arr)
    resid = np.zeros_like(t_arr)

    zero = t_arr == 0
    if np.any(zero):
        # P(X = 0) = lim f(s) as s -> infinity.
        out[zero] = float(np.real(tf(1e12)))

    pos = ~zero
    if np.any(pos):
        tp = t_arr[pos][:, None]
        kmax = n_terms + n_euler
        k = np.arange(kmax + 1)[None, :]
        s = (abscissa + 2j * np.pi * k) / (2 * tp)
        vals = np.real(np.asarray(tf(s)) / s)
        if not np.all(np.isfinite(vals)):
            raise NumericError("transform returned non-finite values on the Bromwich contour")
        terms = vals * np.where(k % 2 == 0, 1.0, -1.0)
        terms[:, 0] *= 0.5
        partial = np.cumsum(terms, axis=1) * np.exp(abscissa / 2) / tp
        w = special.comb(n_euler, np.arange(n_euler + 1)) / 2.0**n_euler
        est = partial[:, n_terms : n_terms + n_euler + 1] @ w
        prev = partial[:, n_terms - 1 : n_terms + n_euler] @ w
        out[pos] = est
        resid[pos] = np.abs(est - prev)

    out = np.clip(out, 0.0, 1.0)
    worst = float(resid.max()) if resid.size else 0.0
    if worst > tol:
        raise NumericError(
            f"Euler inversion residual {worst:.2e} exceeds tolerance {tol:.1e}",
            estimate=_out(out if np.ndim(t) else out[0]),
            residual=worst,
        )
    return out if np.ndim(t) else float(out[0])
