"""Photon-number distributions that are diagonal in the Fock basis.

Single-mode distributions are 1-D arrays ``p[n]``; two-mode (signal, idler)
distributions are 2-D arrays ``P[m, n]`` with ``m`` the signal photon number.
"""

import numpy as np
from scipy.special import comb, gammaln

SUM_TOL = 1e-9


def _check_distribution(p, name="distribution"):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if p.sum() > 1 + SUM_TOL:
        raise ValueError(f"{name} sums to {p.sum():.12g} > 1")
    return p


def thermal(mean_n, d):
    """Bose-Einstein (thermal) single-mode distribution truncated at ``d``."""
    if mean_n < 0:
        raise ValueError("mean photon number must be nonnegative")
    n = np.arange(d)
    if mean_n == 0:
        return (n == 0).astype(float)
    return np.exp(n * np.log(mean_n) - (n + 1) * np.log1p(mean_n))


def pdc_distribution(mean_n, d):
    """Twin-beam distribution of an ideal single-mode down-converter.

    Perfect photon-number correlation, thermal statistics on the diagonal,
    exactly zero off the diagonal.
    """
    if d < 1:
        raise ValueError("cutoff must be >= 1")
    return np.diag(thermal(mean_n, d))


def poisson(mu, d):
    """Poisson distribution of mean ``mu`` on ``0..d-1``."""
    if mu < 0:
        raise ValueError("mean photon number must be nonnegative")
    n = np.arange(d)
    if mu == 0:
        return (n == 0).astype(float)
    return np.exp(n * np.log(mu) - mu - gammaln(n + 1))


def poisson_product(mu_s, mu_i, d):
    """Two-mode coherent-state statistics, ``Pois(m; mu_s) * Pois(n; mu_i)``."""
    return np.outer(poisson(mu_s, d), poisson(mu_i, d))


def loss_matrix(eta, d):
    """Binomial (beam-splitter) loss kernel ``B[m, k] = C(k, m) eta^m (1-eta)^(k-m)``."""
    if not 0 <= eta <= 1:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    k = np.arange(d)
    m = k[:, None]
    lost = np.clip(k - m, 0, None)
    B = comb(k, m) * np.power(eta, m) * np.power(1 - eta, lost)
    B[m > k] = 0.0
    return B


def apply_loss(P, eta):
    """Bernoulli photon loss.

    ``P`` may be single-mode (1-D, scalar ``eta``) or two-mode (2-D, ``eta``
    a scalar or an ``(eta_signal, eta_idler)`` pair).
    """
    P = _check_distribution(P)
    if P.ndim == 1:
        return loss_matrix(float(eta), P.shape[0]) @ P
    eta_s, eta_i = np.broadcast_to(np.asarray(eta, dtype=float), (2,))
    Bs = loss_matrix(eta_s, P.shape[0])
    Bi = loss_matrix(eta_i, P.shape[1])
    return Bs @ P @ Bi.T


def marginals(P):
    """Signal and idler marginals of a two-mode distribution."""
    P = np.asarray(P)
    return P.sum(axis=1), P.sum(axis=0)


def wigner_at_origin(p):
    """Photon-number parity, i.e. W(0) scaled so vacuum is +1 and |1> is -1."""
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * (-1.0) ** np.arange(p.shape[0])))


def fidelity(p, q):
    """Classical (Bhattacharyya) fidelity ``(sum sqrt(p q))**2``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    bc = np.sum(np.sqrt(np.clip(p, 0, None) * np.clip(q, 0, None)))
    return float(min(bc**2, 1.0))


def mean_photon(p):
    p = np.asarray(p, dtype=float)
    return float(np.sum(np.arange(p.shape[0]) * p))


def normalized(p):
    p = np.asarray(p, dtype=float)
    s = p.sum()
    if s <= 0:
        raise ValueError("cannot normalize a distribution with zero mass")
    return p / s
