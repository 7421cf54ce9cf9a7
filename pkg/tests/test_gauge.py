import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clqg.errors import DomainError, GaugeNotValidated, InvalidGauge, TailNotConvergent
from clqg.gauge import (
    GaugeTriple, IPsiClass, ParametricPsi, PowerGauge, TabulatedPsi, classify_I_psi, eval_gamma, eval_phi,
    parametric,
)

# phi(r) = int_{log 1/r}^inf exp(-sqrt(1+t) log(1+t)^-theta) dt, mpmath quad at 30 digits
MPMATH_PHI = {
    (2.0, math.exp(-1)): 41914.4222141569193,
    (0.5, 0.1): 4.89550839217190777,
    (0.5, math.exp(-3)): 4.76546974618975298,
    (1.0, 0.5): 55.9628686502779943,
}


def test_gamma_at_one_matches_hand_value():
    g = parametric(0.5, c=2.0, gamma_scale=3.0)
    assert eval_gamma(g, 1.0) == pytest.approx(3.0 * math.sqrt(2.0) * 2.0 * math.log(2.0) ** -0.5, rel=1e-14)


def test_gamma_blows_up_at_zero():
    assert math.isinf(eval_gamma(parametric(1.0), 0.0))


def test_negative_time_rejected():
    with pytest.raises(DomainError):
        eval_gamma(parametric(1.0), -0.1)


@pytest.mark.parametrize("theta,r", sorted(MPMATH_PHI))
def test_phi_against_high_precision_quadrature(theta, r):
    assert eval_phi(parametric(theta), r) == pytest.approx(MPMATH_PHI[(theta, r)], rel=1e-6)


def test_phi_domain():
    g = parametric(2.0)
    for r in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(DomainError):
            eval_phi(g, r)


def test_slow_tail_is_reported():
    # theta = 3 keeps gamma below ~log t until far past the truncation cap
    with pytest.raises(TailNotConvergent):
        eval_phi(parametric(3.0), 0.5)


def test_exponential_profile_gives_identity_gauge():
    # gamma(t) = t  =>  phi(r) = int_{log 1/r}^inf e^-t dt = r
    psi = TabulatedPsi.from_function(lambda t: t / np.sqrt(1 + t), 1e-9, 1e6, 3000)
    g = GaugeTriple(psi, force=True)
    assert g.validated
    for r in (0.5, 0.1, 1e-3, 1e-6):
        assert eval_phi(g, r) == pytest.approx(r, rel=1e-6)


def test_monotone_threshold_of_parametric_gamma():
    g = parametric(1.5)
    assert g.t_min_monotone == pytest.approx(math.expm1(3.0))
    t = np.linspace(g.t_min_monotone, g.t_min_monotone + 50, 200)
    assert np.all(np.diff(g.gamma(t)) >= 0)


def test_invalid_profiles():
    with pytest.raises(InvalidGauge):
        ParametricPsi(0.0)
    with pytest.raises(InvalidGauge):
        GaugeTriple(TabulatedPsi((1.0, 2.0, 3.0), (1.0, 2.0, 3.0)))
    with pytest.raises(InvalidGauge):
        TabulatedPsi((1.0, 1.0), (1.0, 0.5))


def test_unvalidated_gauge_refuses_phi():
    # psi bumps up mid-range, so gamma dips; force keeps it but phi stays locked
    t = np.geomspace(1e-3, 1e7, 60)
    v = 1.0 / np.log1p(t) ** 2
    v[30] *= 50
    g = GaugeTriple(TabulatedPsi(tuple(t), tuple(v)), force=True)
    assert not g.validated
    with pytest.raises(GaugeNotValidated):
        eval_phi(g, 0.5)


def test_parametric_classification_is_exact():
    assert classify_I_psi(parametric(1.0)) is IPsiClass.DIVERGENT
    assert classify_I_psi(parametric(0.5)) is IPsiClass.DIVERGENT
    assert classify_I_psi(parametric(1.0001)) is IPsiClass.CONVERGENT


@pytest.mark.parametrize("fn,expected", [
    (lambda t: np.log1p(t) ** -0.5, IPsiClass.DIVERGENT),
    (lambda t: np.log1p(t) ** -1.0, IPsiClass.DIVERGENT),
    (lambda t: np.log1p(t) ** -2.0, IPsiClass.CONVERGENT),
    (lambda t: 1.0 / (1.0 + t), IPsiClass.CONVERGENT),
])
def test_tabulated_classification(fn, expected):
    psi = TabulatedPsi.from_function(fn, 1e-3, 1e12, 2000)
    assert classify_I_psi(GaugeTriple(psi, force=True)) is expected


def test_short_table_is_inconclusive():
    psi = TabulatedPsi.from_function(lambda t: np.log1p(t) ** -2.0, 1e-3, 100.0, 100)
    assert classify_I_psi(GaugeTriple(psi, force=True)) is IPsiClass.INCONCLUSIVE


def test_record_round_trip():
    g = parametric(0.7, 1.3, 2.0)
    h = GaugeTriple.from_record(g.to_record())
    assert h.gamma(5.0) == g.gamma(5.0)
    psi = TabulatedPsi.from_function(lambda t: np.log1p(t) ** -2.0, 1e-3, 1e6, 50)
    g2 = GaugeTriple(psi, force=True)
    h2 = GaugeTriple.from_record(g2.to_record(), force=True)
    assert h2.gamma(17.0) == pytest.approx(g2.gamma(17.0), rel=1e-12)


def test_power_gauge():
    assert PowerGauge(2.0).phi(0.5) == 0.25
    with pytest.raises(InvalidGauge):
        PowerGauge(0.0)


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0.3, 2.2), r1=st.floats(1e-4, 0.9), r2=st.floats(1e-4, 0.9))
def test_phi_is_nondecreasing_in_r(theta, r1, r2):
    lo, hi = sorted((r1, r2))
    g = parametric(theta)
    assert eval_phi(g, lo) <= eval_phi(g, hi) * (1 + 1e-6)


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(0.3, 2.2), factor=st.floats(1.05, 4.0))
def test_larger_gamma_scale_shrinks_phi(theta, factor):
    g = parametric(theta)
    assert eval_phi(g.scaled(factor), 0.3) < eval_phi(g, 0.3)


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(0.1, 5.0), t=st.floats(0.01, 1e8))
def test_psi_positive_and_decreasing(theta, t):
    p = ParametricPsi(theta)
    assert 0 < p(t * 1.5) <= p(t)
