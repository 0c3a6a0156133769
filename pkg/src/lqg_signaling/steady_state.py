"""Steady-state signaling equilibria of time-homogeneous games.

Drops the stage index from the backward recursion and looks for a joint
fixed point ``(L, Sigma, V)`` of

    Sigma = phi_s(Sigma, L)                     (covariance)
    (Du' Vbar Du) L = -Du' Vbar De1             (gain)
    V = F' Vbar F                               (value)

where ``Vbar`` embeds ``V`` itself rather than a continuation evaluated at
the next covariance. Whether such a point describes the long-horizon limit
of the finite game is not established, so reports carry a heuristic label.
"""

from dataclasses import dataclass, field

import numpy as np

from ._linalg import min_eig
from .belief import kalman_gain, update_cov
from .solver import (
    NonConvergence, SingularStage, SolverOptions, ValueQuadratic, gain_equation,
    solve_affine_term, terminal_gain, update_rho, update_value,
)
from .stages import StackedLayout

__all__ = [
    "HEURISTIC_NOTE",
    "RANK_TOL",
    "SteadyStateSolution",
    "default_init",
    "steady_state_residuals",
    "solve_steady_state",
    "numerical_rank",
]

HEURISTIC_NOTE = (
    "heuristic: stationary fixed point of the stage equations; "
    "not proven to be the infinite-horizon limit"
)
RANK_TOL = 1e-6
ORDERS = ("SLV", "LSV")


@dataclass
class SteadyStateSolution:
    L: tuple
    sigma: tuple
    V: tuple
    M: np.ndarray
    rho_increment: tuple
    residuals: dict
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)

    def revelation(self, spec, tol=RANK_TOL):
        """Rank of each gain and, for full column rank, the gap ``|Sigma - Q|``."""
        out = []
        for i in range(2):
            s = np.linalg.svd(self.L[i], compute_uv=False)
            rank = numerical_rank(self.L[i], tol)
            entry = {
                "rank": rank,
                "singular_values": s.tolist(),
                "sv_ratio": float(s[-1] / s[0]) if s.size and s[0] > 0 else 0.0,
                "full_column_rank": rank == spec.n[i],
            }
            if entry["full_column_rank"]:
                entry["sigma_minus_Q"] = float(np.linalg.norm(self.sigma[i] - spec.noise_cov[i]))
            out.append(entry)
        return out


def numerical_rank(a, tol=RANK_TOL):
    s = np.linalg.svd(np.atleast_2d(a), compute_uv=False)
    if not s.size or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def default_init(spec):
    """``(L0, Sigma0, V0)``: zero-continuation gains, the prior, zero values."""
    L0 = tuple(terminal_gain(spec, i) for i in range(2))
    S0 = tuple(np.array(s, dtype=float) for s in spec.prior_cov)
    V0 = tuple(np.zeros((StackedLayout.of(spec, i).e_len,) * 2) for i in range(2))
    return L0, S0, V0


def _stage(spec, sigma, L, V):
    """Linear gain solve, affine terms and value congruence at ``(sigma, L, V)``."""
    cont = tuple(ValueQuadratic(V[i], 0.0) for i in range(2))
    L_solve, K, rhs, mats = gain_equation(spec, 1, sigma, L, cont)
    M, info = solve_affine_term(spec, mats)
    V_new = update_value(spec, mats, L, M)
    return L_solve, K, rhs, mats, M, V_new, info


def steady_state_residuals(spec, L, sigma, V):
    """Frobenius residuals of the covariance, gain and value equations (max over players)."""
    L_solve, K, rhs, mats, M, V_new, _ = _stage(spec, sigma, L, V)
    r_sig = max(float(np.linalg.norm(sigma[i] - update_cov(sigma[i], L[i], spec, i, 1))) for i in range(2))
    r_gain = max(float(np.linalg.norm(K[i] @ L[i] + rhs[i])) for i in range(2))
    r_val = max(float(np.linalg.norm(V[i] - V_new[i])) for i in range(2))
    return {"covariance": r_sig, "gain": r_gain, "value": r_val}


def solve_steady_state(spec, init=None, tol=1e-10, max_iter=20_000, damping=0.5, order="SLV",
                       options=None):
    """Cyclic damped iteration on the stationary equations.

    Each sweep updates the covariance, then the gains (damped), then the
    value matrices; ``order="LSV"`` updates the gains before the covariance.
    Stops when all three residuals are at most ``tol``. On failure raises
    :class:`NonConvergence` with the last iterate in ``best``.
    """
    if not spec.constant_dynamics:
        raise ValueError("steady state requires time-homogeneous dynamics")
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}")
    opts = options or SolverOptions()
    L0, S0, V0 = default_init(spec) if init is None else init
    L = tuple(np.array(l, dtype=float) for l in L0)
    sigma = tuple(np.array(s, dtype=float) for s in S0)
    V = tuple(np.array(v, dtype=float) for v in V0)
    a = damping
    res = None
    for k in range(1, max_iter + 1):
        if order == "SLV":
            sigma = tuple(update_cov(sigma[i], L[i], spec, i, 1) for i in range(2))
        L_solve, *_ = _stage(spec, sigma, L, V)
        L_next = tuple((1 - a) * L[i] + a * L_solve[i] for i in range(2))
        if order == "LSV":
            sigma = tuple(update_cov(sigma[i], L_next[i], spec, i, 1) for i in range(2))
        L = L_next
        V = _stage(spec, sigma, L, V)[5]
        if not all(np.all(np.isfinite(x)) for x in L + V):
            raise NonConvergence(f"steady-state iteration diverged at sweep {k}", best=(L, sigma, V))
        if k % 10 == 0 or k == max_iter:
            res = steady_state_residuals(spec, L, sigma, V)
            if max(res.values()) <= tol:
                break
    else:
        exc = NonConvergence(f"steady state not reached in {max_iter} sweeps", best=(L, sigma, V),
                             residual=res)
        raise exc
    L_solve, K, rhs, mats, M, V_new, info = _stage(spec, sigma, L, V)
    curv = [min_eig(K[i]) for i in range(2)]
    for i in range(2):
        if curv[i] < -opts.curvature_tol:
            raise SingularStage(f"player {i + 1}: stationary curvature eigenvalue {curv[i]:.3e}",
                                player=i, min_eig=curv[i])
    cont = tuple(ValueQuadratic(V[i], 0.0) for i in range(2))
    rho = update_rho(spec, sigma, mats, cont)
    G = tuple(kalman_gain(sigma[i], L[i]) for i in range(2))
    diag = dict(info)
    diag.update({"curvature_min_eig": curv, "belief_gain": [g.tolist() for g in G],
                 "order": order, "damping": damping, "tol": tol})
    return SteadyStateSolution(L=L, sigma=sigma, V=V, M=M, rho_increment=rho, residuals=res,
                               iterations=k, converged=True, diagnostics=diag)
