import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_bandits.core_online import (
    ArmDistribution,
    ClassicExp3,
    Exp3,
    Exp3State,
    check_cover,
    exp3_update,
    lemma_rate,
    sample_arm,
    sample_index,
    sparse_loss_estimate,
    uniform_distribution,
)
from adaptive_bandits.errors import InvalidArgumentError, NumericDomainError


@pytest.mark.parametrize("n", [1, 3, 4, 17])
def test_uniform_distribution(n):
    d = uniform_distribution(n)
    assert d.n == n
    np.testing.assert_allclose(d.probs, 1.0 / n)
    assert abs(d.probs.sum() - 1.0) <= 1e-12


def test_uniform_distribution_rejects_zero():
    with pytest.raises(InvalidArgumentError):
        uniform_distribution(0)


@pytest.mark.parametrize("probs", [[], [0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]])
def test_arm_distribution_rejects_invalid(probs):
    with pytest.raises(InvalidArgumentError):
        ArmDistribution(probs)


def test_arm_distribution_is_read_only():
    d = ArmDistribution([0.25, 0.75])
    with pytest.raises(ValueError):
        d.probs[0] = 1.0


@pytest.mark.parametrize("probs, expected", [([1.0, 0.0], 0), ([0.0, 0.0, 1.0], 2)])
def test_sample_arm_degenerate(probs, expected):
    rng = np.random.default_rng(123)
    assert all(sample_arm(ArmDistribution(probs), rng) == expected for _ in range(200))


def test_sample_index_boundaries():
    p = np.array([0.5, 0.5])
    assert sample_index(p, 0.5) == 0  # boundary tie goes low
    assert sample_index(np.array([0.0, 1.0]), 0.0) == 1  # never a zero-probability arm
    assert sample_index(p, 0.999999) == 1


def test_sample_arm_frequency():
    # binomial: sd of the mean at 1e5 draws is 0.0016, so +-0.01 is > 6 sd
    rng = np.random.default_rng(7)
    d = ArmDistribution([0.5, 0.5])
    draws = np.array([sample_arm(d, rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 0) - 0.5) <= 0.01


def test_sample_arm_deterministic():
    d = ArmDistribution([0.2, 0.3, 0.5])
    a = [sample_arm(d, np.random.default_rng(5)) for _ in range(3)]
    b = [sample_arm(d, np.random.default_rng(5)) for _ in range(3)]
    assert a == b


def test_sparse_loss_estimate_values():
    e = sparse_loss_estimate(1, 0.5, 0.25, 3)
    assert (e.arm, e.value, e.n) == (1, 2.0, 3)
    np.testing.assert_array_equal(e.dense(), [0.0, 2.0, 0.0])
    assert sparse_loss_estimate(0, 0.0, 0.5, 2).value == 0.0


@pytest.mark.parametrize("prob", [0.0, -0.1])
def test_sparse_loss_estimate_rejects_bad_prob(prob):
    with pytest.raises(InvalidArgumentError):
        sparse_loss_estimate(0, 0.5, prob, 2)


def test_sparse_loss_estimate_unbiased():
    loss = np.array([0.2, 0.8])
    z = np.array([0.5, 0.5])
    rng = np.random.default_rng(11)
    arms = rng.choice(2, size=100_000, p=z)
    dense = np.zeros((arms.size, 2))
    dense[np.arange(arms.size), arms] = loss[arms] / z[arms]
    np.testing.assert_allclose(dense.mean(axis=0), loss, atol=0.02)


def test_exp3_update_zero_loss_identity():
    s = Exp3State(ArmDistribution([0.5, 0.5]), eta=1.0)
    out = exp3_update(s, sparse_loss_estimate(0, 0.0, 1.0, 2))
    np.testing.assert_allclose(out.weights.probs, [0.5, 0.5])


def test_exp3_update_hand_value():
    # y = [0.5 * e^{-ln 2}, 0.5] = [0.25, 0.5] -> [1/3, 2/3]
    s = Exp3State(ArmDistribution([0.5, 0.5]), eta=math.log(2))
    est = sparse_loss_estimate(0, 1.0, 1.0, 2)
    out = exp3_update(s, est)
    np.testing.assert_allclose(out.weights.probs, [1 / 3, 2 / 3], rtol=1e-12)


def test_exp3_update_monotone():
    s = Exp3State(uniform_distribution(3), eta=1.0)
    est = sparse_loss_estimate(2, 1.0, 0.1, 3)
    assert est.value == pytest.approx(10.0)
    w = exp3_update(s, est).weights.probs
    assert w[2] < w[0] and w[0] == w[1] and w[0] > 1 / 3


def test_exp3_update_rejects_non_finite():
    from adaptive_bandits.core_online import SparseLossEstimate

    s = Exp3State(uniform_distribution(2), eta=1.0)
    with pytest.raises(NumericDomainError):
        exp3_update(s, SparseLossEstimate(0, math.inf, 2))


def test_exp3_update_stays_positive_under_huge_losses():
    s = Exp3State(uniform_distribution(2), eta=1.0)
    for _ in range(5):
        s = exp3_update(s, sparse_loss_estimate(0, 1.0, 1e-6, 2))
    assert s.weights.probs[0] > 0
    assert abs(s.weights.probs.sum() - 1) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8),
    st.floats(1e-3, 5.0),
    st.data(),
)
def test_exp3_update_preserves_simplex(raw, eta, data):
    w = np.array(raw) / sum(raw)
    n = len(w)
    arm = data.draw(st.integers(0, n - 1))
    loss = data.draw(st.floats(0.0, 1.0))
    prob = data.draw(st.floats(1e-4, 1.0))
    out = exp3_update(Exp3State(ArmDistribution(w), eta), sparse_loss_estimate(arm, loss, prob, n))
    p = out.weights.probs
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-9


def test_exp3_trajectories_bit_identical():
    def run(seed):
        rng = np.random.default_rng(seed)
        algo = Exp3(4, 0.1)
        traj = []
        for _ in range(50):
            z = 0.5 * algo.weights + 0.125
            j = sample_arm(z / z.sum(), rng)
            algo.observe(j, 0.3 if j else 0.9, z / z.sum())
            traj.append(algo.weights.copy())
        return np.array(traj)

    assert np.array_equal(run(3), run(3))


def test_exp3_cover_assertion():
    algo = Exp3(2, 0.1, cover=1.0)
    with pytest.raises(AssertionError):
        algo.observe(0, 0.5, [0.9, 0.1])  # weight 0.5 > 1.0 * 0.1


def test_check_cover():
    assert check_cover([0.5, 0.5], [0.25, 0.75], 2.0)
    assert not check_cover([0.5, 0.5], [0.2, 0.8], 2.0)


def test_lemma_rate():
    assert lemma_rate(2, 512, 2.0) == pytest.approx(math.sqrt(math.log(2) / (512 * 2 * 2)))


def test_classic_exp3_defaults():
    algo = ClassicExp3(30, 4096)
    assert algo.eta == pytest.approx(math.sqrt(math.log(30) / (4096 * 30)))
    assert algo.gamma == pytest.approx(math.sqrt(30 * math.log(30) / 4096))
    p = algo.play_distribution()
    assert p.min() >= algo.gamma / 30 - 1e-15
    assert abs(p.sum() - 1) < 1e-12
