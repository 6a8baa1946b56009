import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mbtfit import (IterationError, StructureError, build_atmmpp,
                    curves, extinction_age_curve, extinction_by_initial_age,
                    extinction_vector, fertility_rate, matrix_exp,
                    mortality_rate, rates_model_equivalents, survival)
from strategies import subcritical_params, tmap_models


# ---------------------------------------------------------------------------
# single-phase closed forms

@pytest.mark.parametrize("lam,mu,l", [(2.0, 0.5, 1.0), (0.3, 1.2, 2.5),
                                      (5.0, 0.01, 0.25)])
def test_n1_closed_forms(n1_model, lam, mu, l):
    m = n1_model(lam, mu)
    for x in (0.0, 1.0, 3.7):
        assert survival(m, x) == pytest.approx(oracles.n1_survival(mu, x),
                                               abs=1e-12)
        assert mortality_rate(m, x, l) == pytest.approx(
            oracles.n1_death_prob(mu, l), abs=1e-12)
        assert fertility_rate(m, x, l) == pytest.approx(
            oracles.n1_birth_mean(lam, mu, l), abs=1e-12)


def test_n1_extinction(n1_model):
    q = extinction_vector(n1_model(2.0, 0.5))
    assert q[0] == pytest.approx(0.25, abs=1e-10)
    q = extinction_vector(n1_model(0.5, 2.0))
    assert q[0] == pytest.approx(1.0, abs=1e-10)


# ---------------------------------------------------------------------------
# identities relating the curves

@given(tmap_models(), st.floats(min_value=0.0, max_value=5.0),
       st.floats(min_value=0.1, max_value=3.0))
def test_mortality_is_survival_ratio(model, x, l):
    d = mortality_rate(model, x, l)
    s_ratio = 1.0 - survival(model, x + l) / survival(model, x)
    assert d == pytest.approx(s_ratio, abs=1e-10)


@given(tmap_models(), st.floats(min_value=0.0, max_value=5.0),
       st.floats(min_value=0.1, max_value=3.0))
def test_fertility_telescopes(model, x, l):
    """Interval births = cumulative-mean difference over the interval."""
    D = model.generator
    mean_births = np.linalg.solve(-D, model.D1.sum(axis=1))
    def remaining(age):
        return float(model.alpha @ matrix_exp(D, age) @ mean_births)
    want = (remaining(x) - remaining(x + l)) / survival(model, x)
    assert fertility_rate(model, x, l) == pytest.approx(want, abs=1e-8)


@given(tmap_models())
def test_curves_match_pointwise_calls(model):
    c = curves(model, 6, 0.5)
    for i, age in enumerate(c.ages):
        assert c.survival[i] == pytest.approx(survival(model, age), abs=1e-10)
        assert c.mortality[i] == pytest.approx(mortality_rate(model, age, 0.5),
                                               abs=1e-10)
        assert c.fertility[i] == pytest.approx(fertility_rate(model, age, 0.5),
                                               abs=1e-10)


def test_curves_input_checks(ex1):
    with pytest.raises(StructureError):
        curves(ex1, 0, 1.0)
    with pytest.raises(StructureError):
        curves(ex1, 5, -1.0)


# ---------------------------------------------------------------------------
# extinction fixed point

def test_extinction_example1(ex1):
    q = extinction_vector(ex1)
    assert q.shape == (3,)
    assert np.all((q >= 0) & (q <= 1))
    # supercritical: doom is not certain from any phase
    assert q.max() < 1.0
    # fixed-point residual at the returned vector
    exit_rate = -np.diag(ex1.D0)
    off = ex1.D0 - np.diag(np.diag(ex1.D0))
    child = float(ex1.alpha @ q)
    resid = np.abs(q * exit_rate - (ex1.d + off @ q + child * (ex1.D1 @ q)))
    assert resid.max() < 1e-11


@given(subcritical_params())
def test_extinction_certain_when_subcritical(params):
    q = extinction_vector(build_atmmpp(params))
    np.testing.assert_allclose(q, 1.0, atol=1e-9)


def test_extinction_iteration_budget(ex1):
    with pytest.raises(IterationError):
        extinction_vector(ex1, tol=1e-12, max_iter=3)


def test_extinction_by_age(ex1):
    q = extinction_vector(ex1)
    at0 = extinction_by_initial_age(ex1, 0.0)
    assert at0 == pytest.approx(float(ex1.alpha @ q), abs=1e-12)
    grid = extinction_age_curve(ex1, np.array([0.0, 1.0, 5.0]))
    assert grid.shape == (3,)
    assert np.all((grid >= 0) & (grid <= 1))
    assert grid[0] == pytest.approx(at0, abs=1e-12)


# ---------------------------------------------------------------------------
# per-year to per-class rate conversion

def test_rates_model_equivalents_identity():
    assert rates_model_equivalents(2.5, 0.3, 1) == (0.3, 2.5)


def test_rates_model_equivalents_compounding():
    d, b = rates_model_equivalents(1.2, 0.25, 3)
    assert d == pytest.approx(1 - 0.75 ** 3, abs=1e-15)
    assert b == pytest.approx(1.2 * d / 0.25, abs=1e-12)


def test_rates_model_equivalents_zero_death_limit():
    d, b = rates_model_equivalents(1.2, 0.0, 4)
    assert d == 0.0
    assert b == pytest.approx(4.8, abs=1e-15)
    # continuity: small mu approaches the limit
    d2, b2 = rates_model_equivalents(1.2, 1e-9, 4)
    assert b2 == pytest.approx(4.8, rel=1e-6)


def test_rates_model_equivalents_checks():
    with pytest.raises(StructureError):
        rates_model_equivalents(1.0, 1.5, 1)
    with pytest.raises(StructureError):
        rates_model_equivalents(-1.0, 0.5, 1)
    with pytest.raises(StructureError):
        rates_model_equivalents(1.0, 0.5, 0)
