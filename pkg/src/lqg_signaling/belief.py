"""Gaussian common beliefs under linear deterministic partial strategies.

When player ``i`` plays ``u^i = L x^i + m`` and the public belief on ``x^i``
is ``N(xhat, Sigma)``, observing ``u^i`` is a noiseless linear measurement
of the type. The posterior stays Gaussian and is propagated by a Kalman-type
step whose gain depends on the strategy itself, which is what makes the
equilibrium signaling.

All inverses are pseudo-inverses, so ``L = 0`` (nothing revealed) and
rank-deficient gains are handled without special cases.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import PSD_TOL, psd_floor

__all__ = [
    "GaussianBelief",
    "LinearPartialStrategy",
    "kalman_gain",
    "update_mean",
    "update_cov",
    "update_belief",
    "propagate_cov",
]


@dataclass(frozen=True)
class GaussianBelief:
    """Independent per-player Gaussian beliefs ``N(mean[i], cov[i])``."""

    mean: tuple
    cov: tuple

    @classmethod
    def prior(cls, spec):
        return cls(tuple(np.zeros(k) for k in spec.n), tuple(np.array(s) for s in spec.prior_cov))

    def is_valid(self, tol=PSD_TOL):
        for c in self.cov:
            c = np.asarray(c)
            if not np.allclose(c, c.T, atol=tol):
                return False
            if c.size and np.linalg.eigvalsh(0.5 * (c + c.T))[0] < -tol:
                return False
        return True


@dataclass(frozen=True)
class LinearPartialStrategy:
    """Per-player strategy ``u^i = gain[i] @ x^i + offset[i]`` for one stage."""

    gain: tuple
    offset: tuple

    def action(self, i, x_i):
        return self.gain[i] @ x_i + self.offset[i]


def kalman_gain(sigma, L):
    """Belief-update gain ``Sigma L' (L Sigma L')^+``.

    Zero whenever ``L Sigma L'`` vanishes (for instance ``L = 0``).
    """
    sigma = np.asarray(sigma, dtype=float)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != sigma.shape[0] or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"gain {L.shape} incompatible with covariance {sigma.shape}")
    s = L @ sigma @ L.T
    return sigma @ L.T @ np.linalg.pinv(0.5 * (s + s.T), hermitian=True)


def update_mean(xhat, sigma, L, offset, u, spec, i, t):
    """Posterior-predicted mean of player ``i``'s next type.

    ``u`` is the joint action; ``u^i`` is read from it. The innovation
    ``u^i - L xhat - offset`` is used as observed, also off the equilibrium
    path.
    """
    xhat = np.asarray(xhat, dtype=float)
    u = np.asarray(u, dtype=float)
    A, B = spec.A_at(i, t), spec.B_at(i, t)
    if xhat.shape != (spec.n[i],) or u.shape != (spec.m_total,):
        raise ValueError("mean or joint action has the wrong length")
    G = kalman_gain(sigma, L)
    innovation = u[spec.action_slice(i)] - L @ xhat - offset
    return A @ xhat + B @ u + A @ G @ innovation


def propagate_cov(sigma, L, A, Q):
    """``A (I - G L) Sigma (I - G L)' A' + Q`` with ``G`` the belief gain."""
    sigma = np.asarray(sigma, dtype=float)
    G = kalman_gain(sigma, L)
    K = np.eye(sigma.shape[0]) - G @ L
    return psd_floor(A @ K @ sigma @ K.T @ A.T + Q)


def update_cov(sigma, L, spec, i, t):
    """Next-stage covariance of player ``i``'s type given strategy gain ``L``.

    Depends on ``L`` only through its row space, so rescaling ``L`` by a
    nonzero constant leaves the result unchanged.
    """
    return propagate_cov(sigma, np.atleast_2d(L), spec.A_at(i, t), spec.noise_cov[i])


def update_belief(belief, strategy, u, spec, t):
    """Apply the mean and covariance updates to both players' beliefs."""
    means, covs = [], []
    for i in range(2):
        L = np.atleast_2d(strategy.gain[i])
        means.append(update_mean(belief.mean[i], belief.cov[i], L, strategy.offset[i], u, spec, i, t))
        covs.append(update_cov(belief.cov[i], L, spec, i, t))
    return GaussianBelief(tuple(means), tuple(covs))
