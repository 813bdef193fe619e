import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tandem_aoi.errors import DomainError, NumericError, StabilityError
from tandem_aoi.transforms import (
    ServiceDistribution,
    TransformFn,
    busy_period_exponent,
    busy_period_lst,
    invert_lst_cdf,
    lst_eval,
    numeric_mean_from_lst,
    numeric_moment,
    parse_service,
    residual_lst,
)

EXP1 = ServiceDistribution.exponential(1.0)

CATALOG = [
    ServiceDistribution.exponential(1.0),
    ServiceDistribution.exponential(0.4),
    ServiceDistribution.deterministic(2.0),
    ServiceDistribution.erlang(3, 3.0),
    ServiceDistribution.gamma(0.5, 0.5),
    ServiceDistribution.gamma(2.5, 5.0),
    ServiceDistribution.hyperexponential((0.2, 0.8), (0.4, 1.6)),
]
SMOOTH = [d for d in CATALOG if d.kind != "deterministic"]


def mm1_busy_root(lam, s, mu=1.0):
    """Smaller root of lam g^2 - (s + lam + mu) g + mu = 0."""
    a = s + lam + mu
    return (a - math.sqrt(a * a - 4 * lam * mu)) / (2 * lam)


# -- lst_eval / residual_lst ------------------------------------------------


def test_lst_eval_examples():
    assert lst_eval(EXP1, 0.0) == 1.0
    assert lst_eval(EXP1, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert lst_eval(ServiceDistribution.deterministic(2.0), 0.5) == pytest.approx(math.exp(-1), abs=1e-15)
    assert lst_eval(ServiceDistribution.deterministic(2.0), 0.5) == pytest.approx(0.367879, abs=1e-6)


@pytest.mark.parametrize("bad", [-1e-9, -1.0, float("nan"), 1 + 1j])
def test_lst_eval_rejects_bad_argument(bad):
    with pytest.raises(DomainError):
        lst_eval(EXP1, bad)
    with pytest.raises(DomainError):
        residual_lst(EXP1, bad)


def test_residual_examples():
    assert residual_lst(EXP1, 1.0) == pytest.approx(0.5, abs=1e-15)
    for d in CATALOG:
        assert residual_lst(d, 0.0) == 1.0
        assert residual_lst(d, 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_residual_of_exponential_is_memoryless():
    f = TransformFn(EXP1.residual, scale=1.0)
    assert numeric_mean_from_lst(f) == pytest.approx(1.0, rel=1e-6)


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_residual_mean_matches_second_moment(dist):
    f = TransformFn(dist.residual, scale=dist.residual_mean)
    assert numeric_mean_from_lst(f) == pytest.approx(dist.m2 / (2 * dist.mean), rel=1e-6)


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_lst_bounded_and_non_increasing(dist):
    vals = [lst_eval(dist, s) for s in (0.0, 0.1, 1.0, 10.0)]
    assert all(0 < v <= 1 for v in vals)
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_lst_derivative_matches_difference(dist):
    s, h = 0.7, 1e-6
    fd = (dist.lst(s + h) - dist.lst(s - h)) / (2 * h)
    assert dist.lst_derivative(s) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_moments_consistent(dist):
    assert dist.m2 >= dist.mean**2 * (1 - 1e-12)
    assert dist.m3 * dist.mean >= dist.m2**2 * (1 - 1e-12)
    assert dist.scv == pytest.approx(dist.m2 / dist.mean**2 - 1)


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_sampling_matches_mean_and_lst(dist):
    rng = np.random.default_rng(7)
    x = dist.sample(rng, 200_000)
    assert x.mean() == pytest.approx(dist.mean, rel=0.02)
    assert np.exp(-x).mean() == pytest.approx(lst_eval(dist, 1.0), abs=5e-3)


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_numeric_mean_of_catalog(dist):
    assert numeric_mean_from_lst(dist) == pytest.approx(dist.mean, rel=1e-6)


@pytest.mark.parametrize("dist", CATALOG, ids=lambda d: d.describe())
def test_numeric_second_moment_of_catalog(dist):
    assert numeric_moment(dist, 2) == pytest.approx(dist.m2, rel=1e-6)


def test_distribution_validation():
    with pytest.raises(DomainError):
        ServiceDistribution.exponential(0.0)
    with pytest.raises(DomainError):
        ServiceDistribution.exponential()
    with pytest.raises(DomainError):
        ServiceDistribution.erlang(2.5, 1.0)
    with pytest.raises(DomainError):
        ServiceDistribution.hyperexponential((0.5, 0.6), (1.0, 2.0))
    with pytest.raises(DomainError):
        ServiceDistribution("weibull", (1.0,))


# -- parse_service --------------------------------------------------------------


@pytest.mark.parametrize(
    "spec, kind, scv",
    [("exp", "exponential", 1.0), ("det", "deterministic", 0.0), ("erlang:4", "erlang", 0.25),
     ("gamma:0.5", "gamma", 2.0), ("hyperexp:3", "hyperexponential", 3.0)],
)
def test_parse_service(spec, kind, scv):
    d = parse_service(spec, 2.0)
    assert d.kind == kind
    assert d.mean == pytest.approx(2.0, rel=1e-12)
    assert d.scv == pytest.approx(scv, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("spec", ["", "pareto", "erlang:x", "erlang:0", "hyperexp:0.5", "gamma:-1"])
def test_parse_service_rejects(spec):
    with pytest.raises(DomainError):
        parse_service(spec, 1.0)


def test_parse_service_rejects_bad_mean():
    with pytest.raises(DomainError):
        parse_service("exp", 0.0)


# -- busy period --------------------------------------------------------------------


def test_busy_period_examples():
    assert busy_period_lst(EXP1, 0.25, 0.0) == 1.0
    g = busy_period_lst(EXP1, 0.25, 1.0)
    assert g == pytest.approx(mm1_busy_root(0.25, 1.0), abs=1e-12)
    assert g == pytest.approx(0.468871, abs=1e-6)
    assert 0.25 * g * g - 2.25 * g + 1 == pytest.approx(0.0, abs=1e-12)


def test_busy_period_mean():
    f = TransformFn(lambda s: np.vectorize(lambda x: busy_period_lst(EXP1, 0.25, float(x)))(s), scale=4 / 3)
    assert numeric_mean_from_lst(f) == pytest.approx(4 / 3, rel=1e-6)


def test_busy_period_matches_quadratic_on_grid():
    for lam in (0.05, 0.25, 0.5, 0.9):
        for s in np.linspace(0, 20, 81):
            g = busy_period_lst(EXP1, lam, float(s))
            assert abs(g - mm1_busy_root(lam, float(s))) < 1e-10


@given(
    dist=st.sampled_from(CATALOG),
    load=st.floats(0.01, 0.95),
    s=st.floats(0.0, 50.0),
)
def test_busy_period_fixed_point_residual(dist, load, s):
    lam = load / dist.mean
    g = busy_period_lst(dist, lam, s)
    assert 0 <= g <= 1
    assert abs(g - lst_eval(dist, s + lam - lam * g)) < 1e-12


@given(dist=st.sampled_from(CATALOG), load=st.floats(0.01, 0.95), s=st.floats(0.0, 50.0))
def test_busy_period_exponent_agrees_with_iteration(dist, load, s):
    lam = load / dist.mean
    sig = float(busy_period_exponent(dist, lam, s))
    g = busy_period_lst(dist, lam, s)
    assert sig == pytest.approx(s + lam * (1 - g), rel=1e-9, abs=1e-12)


def test_busy_period_exponent_complex_argument():
    for dist in CATALOG:
        lam = 0.8 / dist.mean
        s = np.array([0.3 + 2.0j, 1.0 + 40.0j, 5.0 - 3.0j])
        sig = busy_period_exponent(dist, lam, s)
        resid = sig - (s + lam * (1 - dist.lst(sig)))
        assert np.max(np.abs(resid)) < 1e-10


def test_busy_period_accepts_plain_callable():
    g = busy_period_lst(lambda x: 1 / (1 + x), 0.25, 1.0, mean=1.0)
    assert g == pytest.approx(mm1_busy_root(0.25, 1.0), abs=1e-12)


def test_busy_period_unstable():
    with pytest.raises(StabilityError):
        busy_period_lst(EXP1, 1.0, 0.5)
    with pytest.raises(StabilityError):
        busy_period_exponent(EXP1, 1.2, 0.5)


def test_busy_period_budget_exhausted_reports_residual():
    with pytest.raises(NumericError) as info:
        busy_period_lst(EXP1, 0.9, 1e-3, max_iter=3)
    assert info.value.residual > 1e-12
    assert 0 < info.value.estimate < 1


def test_busy_period_damped_iteration_converges():
    g = busy_period_lst(EXP1, 0.5, 0.2, damping=0.5)
    assert g == pytest.approx(mm1_busy_root(0.5, 0.2), abs=1e-10)


def test_busy_period_rejects_negative_s():
    with pytest.raises(DomainError):
        busy_period_lst(EXP1, 0.25, -0.1)


# -- numeric derivatives ---------------------------------------------------------


def test_numeric_mean_examples():
    theta = 0.75
    assert numeric_mean_from_lst(TransformFn(lambda s: theta / (theta + s))) == pytest.approx(4 / 3, rel=1e-6)
    assert numeric_mean_from_lst(ServiceDistribution.deterministic(2.0)) == pytest.approx(2.0, rel=1e-6)


def test_numeric_mean_non_finite_raises():
    with pytest.raises(NumericError):
        numeric_mean_from_lst(TransformFn(lambda s: np.where(s > 0, np.nan, 1.0), scale=1.0))


def test_singular_transform_limit_is_extrapolated():
    # (1 - e^{-s}) / s has limit 1 at the origin and mean 1/2.
    f = TransformFn(lambda s: -np.expm1(-s) / s, singular_at_zero=True)
    assert f(0.0) == pytest.approx(1.0, abs=1e-9)
    assert numeric_mean_from_lst(f) == pytest.approx(0.5, rel=1e-6)


def test_numeric_moment_rejects_order():
    with pytest.raises(DomainError):
        numeric_moment(EXP1, 3)


# -- inversion ---------------------------------------------------------------------


def test_inversion_examples():
    assert invert_lst_cdf(EXP1, 0.0) == pytest.approx(0.0, abs=1e-6)
    exp_half = ServiceDistribution.exponential(0.5)
    assert invert_lst_cdf(exp_half, 2.0) == pytest.approx(1 - math.exp(-1), abs=1e-6)
    assert invert_lst_cdf(exp_half, 2.0) == pytest.approx(0.632121, abs=1e-6)
    exp_34 = ServiceDistribution.exponential(0.75)
    assert invert_lst_cdf(exp_34, 1.0) == pytest.approx(0.527633, abs=1e-6)


@pytest.mark.parametrize("dist", SMOOTH, ids=lambda d: d.describe())
def test_inversion_matches_catalog_cdf(dist):
    t = np.linspace(0, 8 * dist.mean, 60)
    got = invert_lst_cdf(dist, t)
    assert np.max(np.abs(got - dist.cdf(t))) < 1e-5


def test_inversion_of_jump_reports_residual():
    # A point mass has no smooth CDF; the Euler residual flags it.
    with pytest.raises(NumericError) as info:
        invert_lst_cdf(ServiceDistribution.deterministic(1.0), [0.5, 1.0, 1.5])
    assert info.value.residual > 1e-6
    assert info.value.estimate is not None


def test_inversion_busy_period_cdf_is_monotone():
    lam = 0.25
    f = TransformFn(lambda s: EXP1.lst(busy_period_exponent(EXP1, lam, s)), scale=4 / 3)
    assert f(1.0) == pytest.approx(mm1_busy_root(lam, 1.0), abs=1e-12)
    t = np.linspace(0.0, 40.0, 81)
    F = invert_lst_cdf(f, t)
    assert np.all(np.diff(F) >= -1e-9)
    assert F[-1] > 0.999


def test_inversion_rejects_negative_time():
    with pytest.raises(DomainError):
        invert_lst_cdf(EXP1, [-1.0])
