import pytest
from hypothesis import given
from hypothesis import strategies as st

from tandem_aoi.errors import DomainError, StabilityError
from tandem_aoi.params import SystemParams
from tandem_aoi.transforms import ServiceDistribution


def test_derived_quantities_at_baseline(p0):
    assert p0.lam1 == pytest.approx(0.25)
    assert p0.lam2 == pytest.approx(0.25)
    assert p0.rho1 == pytest.approx(0.25)
    assert p0.rho2 == pytest.approx(0.25)
    assert p0.rho == pytest.approx(0.5)
    assert p0.rho11 == pytest.approx(0.25)
    assert p0.theta == pytest.approx(0.75)
    # (lam1 * 2 + lam2 * 2) / 2 for unit-mean exponentials
    assert p0.w0 == pytest.approx(0.5)
    assert p0.has_class1 and p0.has_class2


def test_degenerate_routing():
    assert not SystemParams(0.5, 0.0).has_class1
    assert not SystemParams(0.5, 1.0).has_class2


@pytest.mark.parametrize("lam, p, mu", [(0.0, 0.5, 1.0), (-1.0, 0.5, 1.0), (0.5, -0.1, 1.0), (0.5, 1.1, 1.0),
                                        (0.5, 0.5, 0.0)])
def test_domain_errors(lam, p, mu):
    with pytest.raises(DomainError):
        SystemParams(lam, p, mu)


def test_second_hop_instability_names_rho():
    with pytest.raises(StabilityError, match=r"rho = 1\.2"):
        SystemParams(1.2, 0.5)


def test_first_hop_instability_names_rho11():
    slow = ServiceDistribution.exponential(10.0)
    with pytest.raises(StabilityError, match="rho11"):
        SystemParams(1.0, 1.0, mu=0.9, svc1=slow, svc2=slow)


def test_stability_error_is_value_error():
    with pytest.raises(ValueError):
        SystemParams(2.0, 0.5)


@given(rho=st.floats(0.01, 0.95), p=st.floats(0.0, 1.0), b1=st.floats(0.2, 3.0), b2=st.floats(0.2, 3.0))
def test_from_utilization_hits_target(rho, p, b1, b2):
    svc1 = ServiceDistribution.exponential(mean=b1)
    svc2 = ServiceDistribution.exponential(mean=b2)
    try:
        P = SystemParams.from_utilization(rho, p, 1.0, svc1, svc2)
    except StabilityError:
        # only the first hop may be overloaded here
        assert p * rho / (p * b1 + (1 - p) * b2) >= 1
        return
    assert P.rho == pytest.approx(rho, rel=1e-12)
    assert P.lam1 + P.lam2 == pytest.approx(P.lam, rel=1e-12)


def test_replace_revalidates(p0):
    assert p0.replace(p=0.2).lam1 == pytest.approx(0.1)
    with pytest.raises(StabilityError):
        p0.replace(lam=5.0)


def test_describe_mentions_loads(p0):
    text = p0.describe()
    assert "rho=0.5" in text and "rho11=0.25" in text
