"""Phase-averaged quadrature marginals of Fock states.

Convention: the vacuum quadrature variance is 1/2, so
``P_n(x) = H_n(x)^2 exp(-x^2) / (2^n n! sqrt(pi))``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import UnsupportedOrder

#: highest photon number in the mixture model
MAX_FOCK = 6
N_FOCK = MAX_FOCK + 1


def hermite_functions(x, n_max: int = MAX_FOCK) -> np.ndarray:
    """Normalized Hermite functions phi_0..phi_n_max at ``x``; shape (n_max + 1, *x.shape).

    Uses the three-term recurrence on the normalized functions, which stays
    well scaled where the raw polynomials would not.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def fock_marginal(n: int, x):
    """Quadrature density of the Fock state ``|n>`` at ``x``."""
    if not 0 <= n <= MAX_FOCK or int(n) != n:
        raise UnsupportedOrder(f"Fock order must be in 0..{MAX_FOCK}, got {n}")
    phi = hermite_functions(x, int(n))[int(n)]
    out = phi * phi
    return float(out) if np.ndim(x) == 0 else out


def fock_marginals(x) -> np.ndarray:
    """All marginals P_0..P_6 at ``x``; shape (len(x), 7)."""
    phi = hermite_functions(np.ravel(x))
    return (phi * phi).T


@lru_cache(maxsize=None)
def _inverse_cdf_tables(half_width: float = 12.0, n_grid: int = 48001):
    x = np.linspace(-half_width, half_width, n_grid)
    p = fock_marginals(x)
    # cumulative trapezoid per order
    cdf = np.concatenate([np.zeros((1, N_FOCK)),
                          np.cumsum(0.5 * (p[1:] + p[:-1]) * (x[1] - x[0]), axis=0)])
    cdf /= cdf[-1]
    return x, cdf


def sample_fock(n: int, u) -> np.ndarray:
    """Map uniforms ``u`` to quadrature draws of ``|n>`` by inverse-CDF lookup."""
    if not 0 <= n <= MAX_FOCK:
        raise UnsupportedOrder(f"Fock order must be in 0..{MAX_FOCK}, got {n}")
    x, cdf = _inverse_cdf_tables()
    return np.interp(u, cdf[:, n], x)


def bin_averaged_marginals(edges) -> np.ndarray:
    """Mean of each P_n over each bin, by 8-point Gauss-Legendre per bin; shape (n_bins, 7)."""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    p = fock_marginals(pts).reshape(pts.shape + (N_FOCK,))
    return 0.5 * np.einsum("bkn,k->bn", p, weights)
