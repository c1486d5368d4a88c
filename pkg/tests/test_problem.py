import json

import numpy as np
import pytest

from conftest import MARKOWITZ_ATOMS, MARKOWITZ_PROBS, qp_instance
from spdfb.config import problem_from_toml, problem_to_toml
from spdfb.core import DimensionError
from spdfb.problem import (
    FiniteDistribution,
    ProblemError,
    StochasticSaddleProblem,
    constrained_qp_problem,
    growth_diagnostic,
    markowitz_problem,
    sample,
)
from spdfb.prox import Linear, Zero


class TestSampling:
    def test_degenerate(self):
        dist = FiniteDistribution(["only"], [1.0])
        rng = np.random.default_rng(0)
        assert {sample(dist, rng).atom_index for _ in range(100)} == {0}

    def test_frequency(self):
        dist = FiniteDistribution(["a", "b"], [0.5, 0.5])
        rng = np.random.default_rng(2024)
        hits = sum(sample(dist, rng).atom_index == 0 for _ in range(10**5))
        assert 0.49 <= hits / 10**5 <= 0.51

    def test_unequal_frequencies(self):
        probs = [0.1, 0.6, 0.3]
        dist = FiniteDistribution(list("abc"), probs)
        idx = dist.indices(np.random.default_rng(1), 10**5)
        freq = np.bincount(idx, minlength=3) / 10**5
        se = np.sqrt(np.array(probs) * (1 - np.array(probs)) / 10**5)
        assert np.all(np.abs(freq - probs) <= 4 * se)

    def test_same_seed_same_sequence(self):
        dist = FiniteDistribution(list("abcd"), [0.1, 0.2, 0.3, 0.4])
        r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
        a = [sample(dist, r1).atom_index for _ in range(500)]
        b = [sample(dist, r2).atom_index for _ in range(500)]
        assert a == b

    def test_block_draws_match_single_draws(self):
        dist = FiniteDistribution(list("abcd"), [0.1, 0.2, 0.3, 0.4])
        r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
        single = [sample(dist, r1).atom_index for _ in range(1000)]
        assert dist.indices(r2, 1000) == single

    def test_payload_attached(self):
        dist = FiniteDistribution(["a", "b"], [0.5, 0.5])
        s = sample(dist, np.random.default_rng(0))
        assert s.payload == ["a", "b"][s.atom_index]

    @pytest.mark.parametrize(
        "probs, message",
        [([0.5, 0.6], "sum to 1"), ([1.0, 0.0], "positive"), ([0.5], "atoms")],
    )
    def test_validation(self, probs, message):
        with pytest.raises(ProblemError, match=message):
            FiniteDistribution(["a", "b"], probs)


class TestMarkowitz:
    def test_expected_operator(self, markowitz):
        _, det = markowitz
        # 0.5 * (1, 0) + 0.5 * (0, 2)
        np.testing.assert_array_equal(det.L_bar, [[0.5, 1.0]])

    def test_expected_gradient(self, markowitz):
        _, det = markowitz
        second_moment = 0.5 * np.outer([1, 0], [1, 0]) + 0.5 * np.outer([0, 2], [0, 2])
        np.testing.assert_allclose(second_moment, np.diag([0.5, 2.0]))
        np.testing.assert_allclose(det.grad_F(np.array([1.0, 0.0])), 2 * second_moment @ [1.0, 0.0])
        np.testing.assert_allclose(det.grad_F(np.array([1.0, 0.0])), [1.0, 0.0])

    def test_per_atom_oracles(self, markowitz):
        stoch, _ = markowitz
        s = stoch.distribution.point(1)
        x = np.array([0.25, 0.75])
        np.testing.assert_allclose(stoch.f_subgrad(s, x), 2 * 1.5 * np.array([0.0, 2.0]))
        assert stoch.L_op(s).shape == (1, 2)
        assert isinstance(stoch.p_prox(s), Linear) and stoch.p_prox(s).c.tolist() == [0.75]
        assert stoch.f_value(s, x) == pytest.approx(1.5**2)

    @pytest.mark.parametrize("c", [0.4, 0.5, 1.0, 1.2])
    def test_qualification_rejects(self, c):
        with pytest.raises(ProblemError, match="relint"):
            markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, c)

    @pytest.mark.parametrize("c", [0.5 + 1e-6, 0.75, 1.0 - 1e-6])
    def test_qualification_accepts_interior(self, c):
        markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, c)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            markowitz_problem([[1.0, 0.0], [1.0]], [0.5, 0.5], 0.75)


class TestConstrainedQP:
    def test_unconstrained_identity_quadratic(self):
        stoch, det = constrained_qp_problem([np.eye(2)], [np.zeros(2)], [np.zeros((1, 2))], [[0.0]],
                                            [1.0], Zero(2))
        x = np.array([0.3, -1.2])
        np.testing.assert_array_equal(det.grad_F(x), x)
        np.testing.assert_array_equal(stoch.f_subgrad(stoch.distribution.point(0), x), x)

    def test_expected_constraint(self):
        _, det = constrained_qp_problem([np.eye(2)] * 2, [np.zeros(2)] * 2, [[1.0, 0.0], [0.0, 1.0]],
                                        [0.0, 2.0], [0.5, 0.5], Zero(2))
        np.testing.assert_array_equal(det.L_bar, [[0.5, 0.5]])
        assert det.Hstar_prox.c.tolist() == [1.0]

    def test_rejects_non_psd(self):
        with pytest.raises(ProblemError, match="positive semidefinite"):
            constrained_qp_problem([-np.eye(2)], [np.zeros(2)], [[1.0, 0.0]], [0.0], [1.0], Zero(2))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            constrained_qp_problem([np.eye(2)], [np.zeros(3)], [[1.0, 0.0]], [0.0], [1.0], Zero(2))
        with pytest.raises(DimensionError):
            constrained_qp_problem([np.eye(2)], [np.zeros(2)], [[1.0, 0.0, 0.0]], [0.0], [1.0], Zero(2))
        with pytest.raises(DimensionError):
            constrained_qp_problem([np.eye(2)], [np.zeros(2)], [[1.0, 0.0]], [0.0], [1.0], Zero(3))


def _mc_mean(values, idx, M):
    counts = np.bincount(idx, minlength=M)
    n = counts.sum()
    mean = sum(counts[m] * values[m] for m in range(M)) / n
    second = sum(counts[m] * values[m] ** 2 for m in range(M)) / n
    se = np.sqrt(np.maximum(second - mean**2, 0.0) / n)
    return mean, se


@pytest.mark.parametrize("which", ["markowitz", "qp"])
def test_expectation_consistency(which):
    if which == "markowitz":
        stoch, det = markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, 0.75)
    else:
        stoch, det = qp_instance()
    dist = stoch.distribution
    M = len(dist)
    idx = dist.indices(np.random.default_rng(77), 10**5)
    points = [dist.point(m) for m in range(M)]
    rng = np.random.default_rng(78)

    def within(values, exact):
        mean, se = _mc_mean(values, idx, M)
        assert np.all(np.abs(mean - exact) <= 3 * se + 1e-12)

    for _ in range(5):
        x = rng.uniform(-1, 1, stoch.d)
        within([stoch.f_subgrad(s, x) for s in points], det.grad_F(x))
    within([stoch.L_op(s) for s in points], det.L_bar)
    within([stoch.p_prox(s).c for s in points], det.Hstar_prox.c)


def test_generator_determinism():
    a, _ = qp_instance()
    b, _ = qp_instance()
    assert json.dumps(a.describe()).encode() == json.dumps(b.describe()).encode()
    assert json.dumps(a.spec).encode() == json.dumps(b.spec).encode()
    m1, _ = markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, 0.75)
    m2, _ = markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, 0.75)
    assert json.dumps(m1.describe()) == json.dumps(m2.describe())


@pytest.mark.parametrize("which", ["markowitz", "qp"])
def test_toml_round_trip(which):
    if which == "markowitz":
        stoch, det = markowitz_problem(MARKOWITZ_ATOMS, MARKOWITZ_PROBS, 0.75)
    else:
        stoch, det = qp_instance()
    again, det2 = problem_from_toml(problem_to_toml(stoch.spec))
    assert again.describe() == stoch.describe()
    x = np.linspace(0.1, 0.3, stoch.d)
    np.testing.assert_array_equal(det.grad_F(x), det2.grad_F(x))


class TestGrowth:
    def test_constant_gradient(self):
        bs = [np.array([3.0, 4.0]), np.array([0.0, 1.0])]
        dist = FiniteDistribution(bs, [0.5, 0.5])
        prob = StochasticSaddleProblem(
            d=2, k=1,
            f_subgrad=lambda s, x: bs[s.atom_index],
            g_prox=lambda s: Zero(), p_prox=lambda s: Zero(),
            L_op=lambda s: np.zeros((1, 2)),
        )
        report = growth_diagnostic(prob, dist, 200, 5.0)
        # the origin is always sampled, where the ratio equals |b|
        assert report.beta[0] == pytest.approx(5.0)
        assert report.beta[1] == pytest.approx(1.0)

    def test_markowitz_bound(self):
        stoch, _ = markowitz_problem([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5], 0.5)
        report = growth_diagnostic(stoch, stoch.distribution, 2000, 10.0)
        assert report.beta[0] <= 2.0
        assert report.beta[0] > 1.0

    def test_zero_gradient(self):
        dist = FiniteDistribution([None], [1.0])
        prob = StochasticSaddleProblem(
            d=3, k=1, f_subgrad=lambda s, x: np.zeros(3),
            g_prox=lambda s: Zero(), p_prox=lambda s: Zero(), L_op=lambda s: np.zeros((1, 3)),
        )
        assert growth_diagnostic(prob, dist, 10, 1.0).max_beta == 0.0

    def test_requires_samples(self):
        stoch, _ = qp_instance()
        with pytest.raises(ValueError):
            growth_diagnostic(stoch, stoch.distribution, 0, 1.0)
