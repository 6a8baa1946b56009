import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mbtfit import (AtmmppParams, CapacityError, LifeVector, LifeVectorSample,
                    LOG_ZERO, MsilClassVector, StructureError, build_atmmpp,
                    class_masses, classify_vector, count_kernels,
                    enumerate_classes, life_vector_probability, log_likelihood,
                    msil_class_mass, paper_class_count,
                    per_vector_log_probabilities, prepare_sample,
                    simulate_sample)
from strategies import tmap_models


# ---------------------------------------------------------------------------
# kernels against the scalar closed forms

@pytest.mark.parametrize("lam,mu,l", [(2.0, 0.5, 1.0), (0.3, 1.5, 2.0),
                                      (4.0, 0.05, 0.5)])
def test_kernels_n1_closed_form(n1_model, lam, mu, l):
    ker = count_kernels(n1_model(lam, mu), l, 12)
    for k in range(13):
        assert ker.P_k[k, 0, 0] == pytest.approx(
            oracles.n1_count_alive(lam, mu, l, k), abs=1e-12)
        assert ker.p_k[k, 0] == pytest.approx(
            oracles.n1_count_dead(lam, mu, l, k), abs=1e-12)
    assert ker.P[0, 0] == pytest.approx(math.exp(-mu * l), abs=1e-13)
    assert ker.p[0] == pytest.approx(1 - math.exp(-mu * l), abs=1e-13)


def test_kernels_against_high_precision_route(ex1):
    """Library doubles vs the factorial-scaled stacked system in mpmath."""
    K = 18
    ker = count_kernels(ex1, 1.0, K)
    P_mp, p_mp = oracles.kernels_mp(ex1.D0, ex1.D1, ex1.d, 1.0, K)
    np.testing.assert_allclose(ker.P_k, P_mp, atol=1e-11, rtol=0)
    np.testing.assert_allclose(ker.p_k, p_mp, atol=1e-11, rtol=0)


def test_kernels_high_precision_n2_long_interval():
    m = build_atmmpp(AtmmppParams(gamma=np.array([0.7]),
                                  mu=np.array([0.4, 1.1]),
                                  lam=np.array([2.5, 0.3])))
    ker = count_kernels(m, 3.0, 15)
    P_mp, p_mp = oracles.kernels_mp(m.D0, m.D1, m.d, 3.0, 15)
    np.testing.assert_allclose(ker.P_k, P_mp, atol=1e-11, rtol=0)
    np.testing.assert_allclose(ker.p_k, p_mp, atol=1e-11, rtol=0)


@given(tmap_models())
def test_kernel_invariants(model):
    ker = count_kernels(model, 1.0, 25)
    assert ker.P_k.min() >= 0 and ker.p_k.min() >= 0
    assert ker.P.min() >= 0 and ker.p.min() >= 0
    # marginal rows are exactly stochastic: survive-or-die partition
    np.testing.assert_allclose(ker.P.sum(axis=1) + ker.p, 1.0, atol=1e-10)
    # count-resolved masses never exceed their marginals
    assert (ker.P_k.sum(axis=0) <= ker.P + 1e-12).all()
    assert (ker.p_k.sum(axis=0) <= ker.p + 1e-12).all()


def test_kernel_completeness_at_large_K(ex1, ex2, ex3):
    for m in (ex1, ex2, ex3):
        ker = count_kernels(m, 1.0, 50)
        total = ker.P_k.sum(axis=0).sum(axis=1) + ker.p_k.sum(axis=0)
        assert np.abs(total - 1.0).max() < 1e-8
        np.testing.assert_allclose(ker.P_k.sum(axis=0), ker.P, atol=1e-8)
        np.testing.assert_allclose(ker.p_k.sum(axis=0), ker.p, atol=1e-8)


def test_kernel_caps_and_checks(ex1):
    with pytest.raises(CapacityError):
        count_kernels(ex1, 1.0, 171)
    big = build_atmmpp(AtmmppParams(gamma=np.full(39, 1.0), mu=np.full(40, 0.5),
                                    lam=np.full(40, 1.0)))
    with pytest.raises(CapacityError):
        count_kernels(big, 1.0, 130)
    with pytest.raises(StructureError):
        count_kernels(ex1, 0.0, 5)
    with pytest.raises(StructureError):
        count_kernels(ex1, 1.0, -1)


# ---------------------------------------------------------------------------
# life-vector probabilities: every terminal shape by hand

def test_vector_probability_shapes(ex1):
    ker = count_kernels(ex1, 1.0, 6)
    a = ex1.alpha
    one = np.ones(ex1.n)
    cases = {
        (3,): a @ (ker.P_k[3] @ one + ker.p_k[3]),
        (3, -1): a @ ker.p_k[3],
        (3, -2): a @ ker.P_k[3] @ one,
        (-2, -1): a @ ker.p,
        (2, 3, 1, -1): a @ ker.P_k[2] @ ker.P_k[3] @ ker.p_k[1],
        (2, 3): a @ ker.P_k[2] @ (ker.P_k[3] @ one + ker.p_k[3]),
        (-2, -2, -2): a @ ker.P @ ker.P @ one,
        (1, -2, 2): a @ ker.P_k[1] @ ker.P @ (ker.P_k[2] @ one + ker.p_k[2]),
    }
    for entries, want in cases.items():
        got = life_vector_probability(ex1, LifeVector(entries), ker)
        assert got == pytest.approx(float(want), abs=1e-14), entries


def test_vector_probability_errors(ex1):
    ker = count_kernels(ex1, 1.0, 3)
    with pytest.raises(StructureError):
        life_vector_probability(ex1, LifeVector((-1,)), ker)
    with pytest.raises(StructureError):
        life_vector_probability(ex1, LifeVector((5,)), ker)
    with pytest.raises(StructureError):
        life_vector_probability(ex1, LifeVector((1,), class_length=2.0), ker)


def test_all_censored_is_survival(ex1):
    ker = count_kernels(ex1, 1.0, 0)
    got = life_vector_probability(ex1, LifeVector((-2, -2, -2)), ker)
    surv2 = float(ex1.alpha @ np.linalg.matrix_power(ker.P, 2) @ np.ones(3))
    assert got == pytest.approx(surv2, abs=1e-14)


@given(tmap_models(), st.integers(min_value=0, max_value=3))
def test_censored_suffix_monotone(model, k):
    ker = count_kernels(model, 1.0, 3)
    base = (k, -2)
    longer = (k, -2, -2)
    p1 = life_vector_probability(model, LifeVector(base), ker)
    p2 = life_vector_probability(model, LifeVector(longer), ker)
    assert p2 <= p1 + 1e-15


def test_trivial_likelihoods(n1_model):
    m = n1_model(2.0, 0.5)
    s = LifeVectorSample.from_lists([[-2]], class_length=1.0)
    assert log_likelihood(m, s) == pytest.approx(0.0, abs=1e-15)
    s = LifeVectorSample.from_lists([[0, -1]], class_length=1.0)
    want = math.log(oracles.n1_count_dead(2.0, 0.5, 1.0, 0))
    assert log_likelihood(m, s) == pytest.approx(want, abs=1e-12)


# ---------------------------------------------------------------------------
# grouped evaluation equals the vector-at-a-time route

@given(tmap_models(max_n=3), st.integers(min_value=0, max_value=2 ** 31 - 1))
@settings(max_examples=15)
def test_prepared_likelihood_matches_naive(model, seed):
    rng = np.random.default_rng(seed)
    sample = simulate_sample(model, 60, 6.0, 1.0, rng)
    K = max(sample.max_count, 0)
    ker = count_kernels(model, 1.0, K)
    naive = sum(math.log(life_vector_probability(model, v, ker))
                for v in sample)
    prep = prepare_sample(sample)
    assert prep.multiplicity.sum() == sample.N
    got = log_likelihood(model, prep)
    assert got == pytest.approx(naive, rel=1e-10, abs=1e-10)
    per = per_vector_log_probabilities(model, sample)
    assert per.shape == (sample.N,)
    assert per.sum() == pytest.approx(naive, rel=1e-10, abs=1e-10)


def test_log_zero_sentinel(n1_model):
    m = n1_model(0.001, 0.5)
    s = LifeVectorSample.from_lists([[170]], class_length=1.0)
    assert log_likelihood(m, s) == LOG_ZERO
    per = per_vector_log_probabilities(m, s)
    assert per[0] == LOG_ZERO


# ---------------------------------------------------------------------------
# MSIL classes

def test_enumerate_classes_structure():
    classes = enumerate_classes(1, 2)
    assert len(classes) == 3 + 9
    death = [c for c in classes if c.entries[-1] == -1]
    assert len(death) == 3
    assert paper_class_count(1, 2) == 39
    assert paper_class_count(0, 1) == 6


def test_enumeration_cap():
    with pytest.raises(CapacityError):
        enumerate_classes(30, 5)


def test_partition_mass_sums_to_one(ex1):
    classes = enumerate_classes(2, 3)
    masses = class_masses(ex1, classes)
    assert masses.min() >= 0
    assert masses.sum() == pytest.approx(1.0, abs=1e-8)


@given(tmap_models(max_n=3))
@settings(max_examples=10)
def test_partition_mass_any_model(model):
    classes = enumerate_classes(1, 2)
    total = class_masses(model, classes).sum()
    assert total == pytest.approx(1.0, abs=1e-9)


def test_tail_class_inclusion_exclusion_vs_brute_force(ex1):
    K = 2
    kernels = count_kernels(ex1, 1.0, 50)
    a, one = ex1.alpha, np.ones(ex1.n)

    # pooled symbol at the only position of an alive class, M=1
    got = msil_class_mass(ex1, MsilClassVector((K + 1,), K, 1), kernels)
    want = oracles.brute_class_mass(
        lambda combo: float(a @ (kernels.P_k[combo[0]] @ one
                                 + kernels.p_k[combo[0]])),
        (K + 1,), K)
    assert got == pytest.approx(want, abs=1e-10)

    # pooled count followed by death, M=3
    got = msil_class_mass(ex1, MsilClassVector((K + 1, -1), K, 3), kernels)
    want = oracles.brute_class_mass(
        lambda combo: float(a @ kernels.p_k[combo[0]]), (K + 1,), K)
    assert got == pytest.approx(want, abs=1e-10)

    # middle and double pooled symbols in a full-length class, M=2
    got = msil_class_mass(ex1, MsilClassVector((K + 1, 1), K, 2), kernels)
    want = oracles.brute_class_mass(
        lambda combo: float(a @ kernels.P_k[combo[0]]
                            @ (kernels.P_k[1] @ one + kernels.p_k[1])),
        (K + 1,), K)
    assert got == pytest.approx(want, abs=1e-10)

    got = msil_class_mass(ex1, MsilClassVector((K + 1, K + 1), K, 2), kernels)
    want = oracles.brute_class_mass(
        lambda combo: float(a @ kernels.P_k[combo[0]]
                            @ (kernels.P_k[combo[1]] @ one
                               + kernels.p_k[combo[1]])),
        (K + 1, K + 1), K)
    assert got == pytest.approx(want, abs=1e-9)


def test_class_vector_validation():
    MsilClassVector((0, 1, -1), 1, 3)
    with pytest.raises(StructureError):
        MsilClassVector((0, 1, 2, -1), 1, 3)  # death content too long
    with pytest.raises(StructureError):
        MsilClassVector((0, 1), 1, 3)  # alive class must have M entries
    with pytest.raises(StructureError):
        MsilClassVector((3, 0, 0), 1, 3)  # entry above K+1


def test_classify_vector_rules():
    K, M = 1, 3
    assert classify_vector(LifeVector((-2, 1, -1)), K, M) is None
    assert classify_vector(LifeVector((1, -2, 3, -1)), K, M) is None
    assert classify_vector(LifeVector((1, 0)), K, M) is None
    got = classify_vector(LifeVector((4, 0, -1)), K, M)
    assert got.entries == (2, 0, -1)
    got = classify_vector(LifeVector((0, 1, 4, -1)), K, M)
    assert got.entries == (0, 1, 2)
    got = classify_vector(LifeVector((0, 1, 4, 0, -1)), K, M)
    assert got.entries == (0, 1, 2)
    got = classify_vector(LifeVector((1, 0, 1, 0)), K, M)
    assert got.entries == (1, 0, 1)
    got = classify_vector(LifeVector((1, 0, 1, -2, 5)), K, M)
    assert got.entries == (1, 0, 1)


def test_classified_mass_adds_up(ex1):
    """Empirical class frequencies agree with class masses at 10k draws."""
    K, M = 2, 3
    classes = enumerate_classes(K, M)
    masses = class_masses(ex1, classes)
    index = {c.entries: i for i, c in enumerate(classes)}
    rng = np.random.default_rng(5)
    sample = simulate_sample(ex1, 10_000, 15.0, 1.0, rng)
    counts = np.zeros(len(classes))
    total = 0
    for v in sample:
        c = classify_vector(v, K, M)
        if c is None:
            continue
        counts[index[c.entries]] += 1
        total += 1
    assert total == sample.N  # uncensored sample: everything classifies
    freq = counts / total
    se = np.sqrt(np.clip(masses * (1 - masses), 1e-12, None) / total)
    z = np.abs(freq - masses) / se
    assert (z < 4.0).mean() > 0.97
