import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mbtfit import (AtmmppParams, MatrixExpOptions, StructureError, TmapModel,
                    build_atmmpp, ensure_valid, matrix_exp, validate)
from strategies import atmmpp_params, tmap_models


# ---------------------------------------------------------------------------
# construction

def test_build_n1():
    m = build_atmmpp(AtmmppParams(gamma=np.zeros(0), mu=np.array([0.5]),
                                  lam=np.array([2.0])))
    assert m.alpha.tolist() == [1.0]
    assert m.D0.tolist() == [[-2.5]]
    assert m.D1.tolist() == [[2.0]]
    assert m.d.tolist() == [0.5]
    assert validate(m) == []


def test_build_example1_structure(ex1):
    assert ex1.n == 3
    assert ex1.alpha.tolist() == [1.0, 0.0, 0.0]
    assert ex1.D0[0, 1] == 0.25 and ex1.D0[1, 2] == 0.25
    assert ex1.D0[0, 2] == 0.0 and ex1.D0[1, 0] == 0.0
    np.testing.assert_allclose(np.diag(ex1.D1), [6.0, 3.0, 2.0])
    np.testing.assert_allclose(ex1.d, [0.2, 0.4, 0.9])
    # diagonal balances the row exactly
    np.testing.assert_allclose(np.diag(ex1.D0), [-6.45, -3.65, -2.9])
    assert validate(ex1) == []


def test_build_immortal_boundary():
    m = build_atmmpp(AtmmppParams(gamma=np.array([0.1]),
                                  mu=np.zeros(2), lam=np.array([1.0, 1.0])))
    assert m.d.tolist() == [0.0, 0.0]
    assert validate(m) == []


def test_param_validation():
    with pytest.raises(StructureError):
        AtmmppParams(gamma=np.array([0.0]), mu=np.zeros(2), lam=np.ones(2))
    with pytest.raises(StructureError):
        AtmmppParams(gamma=np.zeros(0), mu=np.array([-0.1]), lam=np.ones(1))
    with pytest.raises(StructureError):
        AtmmppParams(gamma=np.zeros(0), mu=np.ones(2), lam=np.ones(1))


def test_theta_round_trip():
    p = AtmmppParams(gamma=np.array([0.25, 0.25]),
                     mu=np.array([0.2, 0.4, 0.9]), lam=np.array([6.0, 3.0, 2.0]))
    assert p.theta.shape == (8,)
    q = AtmmppParams.from_theta(3, p.theta)
    np.testing.assert_array_equal(q.gamma, p.gamma)
    np.testing.assert_array_equal(q.mu, p.mu)
    np.testing.assert_array_equal(q.lam, p.lam)
    with pytest.raises(StructureError):
        AtmmppParams.from_theta(3, p.theta[:-1])


@given(atmmpp_params())
def test_build_always_valid(params):
    assert validate(build_atmmpp(params)) == []


# ---------------------------------------------------------------------------
# validate diagnostics

def _raw_example():
    return build_atmmpp(AtmmppParams(
        gamma=np.array([0.25, 0.25]), mu=np.array([0.2, 0.4, 0.9]),
        lam=np.array([6.0, 3.0, 2.0])))


def test_validate_row_conservation_residual():
    m = _raw_example()
    D0 = m.D0.copy()
    D0[0, 0] += 0.1
    bad = validate(TmapModel(alpha=m.alpha, D0=D0, D1=m.D1, d=m.d))
    names = [v.name for v in bad]
    assert "row conservation" in names
    v = bad[names.index("row conservation")]
    assert v.residual == pytest.approx(0.1, abs=1e-12)


def test_validate_negative_rate():
    m = _raw_example()
    D1 = m.D1.copy()
    D1[1, 1] = -3.0
    bad = validate(TmapModel(alpha=m.alpha, D0=m.D0, D1=D1, d=m.d))
    assert any(v.name == "D1 nonnegative" for v in bad)


def test_validate_alpha_rules():
    m = _raw_example()
    bad = validate(TmapModel(alpha=np.array([0.7, 0.2, 0.2]),
                             D0=m.D0, D1=m.D1, d=m.d))
    assert any(v.name == "alpha sums to one" for v in bad)
    bad = validate(TmapModel(alpha=np.array([1.5, -0.5, 0.0]),
                             D0=m.D0, D1=m.D1, d=m.d))
    assert any(v.name == "alpha nonnegative" for v in bad)


def test_validate_diagonal_sign():
    m = _raw_example()
    D0 = m.D0.copy()
    D0[2, 2] = 0.0
    bad = validate(TmapModel(alpha=m.alpha, D0=D0, D1=m.D1, d=m.d))
    assert any(v.name == "D0 diagonal negative" for v in bad)


def test_ensure_valid_raises():
    m = _raw_example()
    D0 = m.D0.copy()
    D0[0, 0] += 1.0
    with pytest.raises(StructureError, match="row conservation"):
        ensure_valid(TmapModel(alpha=m.alpha, D0=D0, D1=m.D1, d=m.d))
    assert ensure_valid(m) is m


def test_model_arrays_readonly(ex1):
    with pytest.raises(ValueError):
        ex1.D0[0, 0] = 1.0


# ---------------------------------------------------------------------------
# JSON dict round trip

def test_json_dict_round_trip(ex1):
    again = TmapModel.from_json_dict(ex1.to_json_dict())
    np.testing.assert_array_equal(again.alpha, ex1.alpha)
    np.testing.assert_array_equal(again.D0, ex1.D0)
    np.testing.assert_array_equal(again.D1, ex1.D1)
    np.testing.assert_array_equal(again.d, ex1.d)
    with pytest.raises(StructureError):
        TmapModel.from_json_dict({"n": 2, **{k: v for k, v in
                                             ex1.to_json_dict().items()
                                             if k != "n"}})


# ---------------------------------------------------------------------------
# matrix exponential

def test_matrix_exp_trivial():
    a = np.array([[0.3, -0.1], [0.0, 0.2]])
    np.testing.assert_array_equal(matrix_exp(a, 0.0), np.eye(2))
    out = matrix_exp(np.array([[-0.5]]), 2.0)
    assert out[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-14)


def test_matrix_exp_input_checks():
    with pytest.raises(StructureError):
        matrix_exp(np.ones((2, 3)))
    with pytest.raises(StructureError):
        matrix_exp(np.ones((2, 2)), -1.0)
    with pytest.raises(StructureError):
        matrix_exp(np.array([[np.nan]]))
    with pytest.raises(StructureError):
        MatrixExpOptions(method="magic")
    with pytest.raises(StructureError):
        MatrixExpOptions(tolerance=0.0)


def test_matrix_exp_against_high_precision_oracle(ex1, ex2, ex3):
    for m in (ex1, ex2, ex3):
        D = m.generator
        got = matrix_exp(D, 1.0)
        want = oracles.expm_mp(D, 1.0)
        np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)


def test_matrix_exp_taylor_backend_agrees(ex1):
    D = ex1.generator
    pade = matrix_exp(D, 2.0)
    taylor = matrix_exp(D, 2.0, MatrixExpOptions(method="taylor"))
    np.testing.assert_allclose(pade, taylor, atol=1e-12, rtol=0)


@given(tmap_models(), st.floats(min_value=0.0, max_value=4.0),
       st.floats(min_value=0.0, max_value=4.0))
def test_matrix_exp_semigroup(model, s, t):
    D = model.generator
    left = matrix_exp(D, s + t)
    right = matrix_exp(D, s) @ matrix_exp(D, t)
    np.testing.assert_allclose(left, right, atol=1e-8, rtol=0)


@given(tmap_models(), st.floats(min_value=0.0, max_value=10.0))
def test_substochastic_semigroup(model, t):
    E = matrix_exp(model.generator, t)
    assert E.min() >= -1e-12
    assert E.sum(axis=1).max() <= 1.0 + 1e-10
