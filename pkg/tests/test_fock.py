import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import eval_hermite

from heraldsim.errors import UnsupportedOrder
from heraldsim.fock import (
    MAX_FOCK,
    bin_averaged_marginals,
    fock_marginal,
    fock_marginals,
    hermite_functions,
    sample_fock,
)


def closed_form(n, x):
    return eval_hermite(n, x) ** 2 * np.exp(-x * x) / (2.0 ** n * math.factorial(n) * np.sqrt(np.pi))


def test_examples():
    assert fock_marginal(0, 0.0) == pytest.approx(1 / np.sqrt(np.pi), rel=1e-14)
    assert fock_marginal(1, 0.0) == 0.0


@pytest.mark.parametrize("n", range(MAX_FOCK + 1))
def test_matches_closed_form(n):
    x = np.linspace(-6, 6, 241)
    assert np.allclose(fock_marginal(n, x), closed_form(n, x), rtol=1e-11, atol=1e-15)


@pytest.mark.parametrize("n", range(MAX_FOCK + 1))
def test_norm_and_second_moment(n):
    norm, _ = quad(lambda x: fock_marginal(n, x), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    m2, _ = quad(lambda x: x * x * fock_marginal(n, x), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)
    assert abs(norm - 1.0) < 1e-8
    assert abs(m2 - (n + 0.5)) < 1e-6


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        fock_marginal(7, 0.0)
    with pytest.raises(UnsupportedOrder):
        fock_marginal(-1, 0.0)


def test_hermite_functions_orthonormal():
    x = np.linspace(-12, 12, 24001)
    phi = hermite_functions(x, 6)
    gram = phi @ phi.T * (x[1] - x[0])
    assert np.allclose(gram, np.eye(7), atol=1e-10)


def test_stack_shape():
    assert fock_marginals(np.zeros(5)).shape == (5, 7)


@pytest.mark.parametrize("n", [0, 1, 2, 6])
def test_inverse_cdf_sampling_moments(n):
    u = np.random.default_rng(n).random(200_000)
    x = sample_fock(n, u)
    se = np.sqrt(np.var(x ** 2) / x.size)
    assert np.mean(x ** 2) == pytest.approx(n + 0.5, abs=5 * se)
    assert abs(np.mean(x)) < 5 * np.sqrt((n + 0.5) / x.size)


def test_bin_averages_sum_to_one():
    edges = np.linspace(-8, 8, 161)
    avg = bin_averaged_marginals(edges)
    assert np.allclose(avg.sum(axis=0) * 0.1, 1.0, atol=1e-9)
