"""Existence test for the stationary gain equation with scalar actions.

For a player with ``m_i = 1`` write the normalized gain as
``L Sigma^{1/2} = lam * l'`` with ``l`` a unit direction. Given ``Sigma``
and ``V``, the gain equation along ``l`` becomes the scalar quadratic

    lam^2 La + lam (Lc l + l' Ld) + l' Lb l = 0,

so a real ``lam`` exists iff ``l' Delta l >= 0`` with

    Delta = Lc' Lc + Ld Ld' + 2 Ld Lc - 4 La Lb.

``Delta + Delta'`` PSD is sufficient for every direction at once. A negative
``lam`` is the same gain with ``l`` flipped. ``Lb`` here carries both
own-mean blocks of ``V``: the quadratic form ``Abar' V_22 Abar`` and the
mean/type cross block ``Abar' V_21 Abar``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._linalg import min_eig, psd_sqrt
from .stages import StackedLayout

__all__ = [
    "Lambdas",
    "ExistenceReport",
    "assemble_lambdas",
    "lambda_quadratic",
    "existence_verdict",
    "existence_check",
    "direction_survey",
    "normalized_gain",
]


@dataclass(frozen=True)
class Lambdas:
    a: float
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def delta(self):
        c = self.c.reshape(1, -1)
        d = self.d.reshape(-1, 1)
        return c.T @ c + d @ d.T + 2.0 * d @ c - 4.0 * self.a * self.b


@dataclass
class ExistenceReport:
    directions: tuple
    lambdas: tuple
    delta: tuple
    quad_form: tuple
    roots: tuple
    exists: tuple
    sufficient: tuple
    sufficient_min_eig: tuple
    notes: list = field(default_factory=list)

    def to_dict(self):
        out = []
        for i in range(2):
            lam = self.lambdas[i]
            out.append({
                "direction": self.directions[i].tolist(),
                "Lambda_a": lam.a,
                "Lambda_b": lam.b.tolist(),
                "Lambda_c": lam.c.tolist(),
                "Lambda_d": lam.d.tolist(),
                "Delta": self.delta[i].tolist(),
                "lDl": self.quad_form[i],
                "roots": list(self.roots[i]),
                "solution_exists_at_l": self.exists[i],
                "sufficient_condition": self.sufficient[i],
                "sufficient_min_eig": self.sufficient_min_eig[i],
            })
        return {"players": out, "notes": list(self.notes)}


def _need_scalar(spec, i):
    if spec.m[i] != 1:
        raise ValueError(f"player {i + 1} has m = {spec.m[i]}; the existence test needs scalar actions")


def assemble_lambdas(spec, i, sigma, V, t=1):
    """Coefficients of the scalar gain quadratic for player ``i``.

    ``sigma`` is the player's own covariance and ``V`` its value matrix
    over ``e = [x^i; xhat^1; xhat^2]``.
    """
    _need_scalar(spec, i)
    j = 1 - i
    lay = StackedLayout.of(spec, i)
    e = lay.e
    own, mean = e[0], e[lay.e_own_mean()]
    V = np.asarray(V, dtype=float)
    root = psd_sqrt(sigma)
    Abar = spec.A_at(i, t) @ root
    Bs_i, Bs_j = spec.B_split(i, t), spec.B_split(j, t)
    bbar = np.zeros(lay.e_len)
    bbar[own] = Bs_i[i][:, 0]
    bbar[mean] = Bs_i[i][:, 0]
    bbar[e[1 + j]] = Bs_j[i][:, 0]
    V_all_mean = V[:, mean]
    V_all_own = V[:, own]
    la = float(spec.own_action_cost(i)[0, 0] + bbar @ V @ bbar)
    lb = Abar.T @ V[mean, mean] @ Abar + Abar.T @ V[mean, own] @ Abar
    lc = bbar @ V_all_mean @ Abar + spec.own_cross_cost(i)[0] @ root + bbar @ V_all_own @ Abar
    ld = Abar.T @ V[mean, :] @ bbar
    return Lambdas(la, lb, lc, ld)


def lambda_quadratic(lam, l, tol=1e-14):
    """Real roots in ``lam`` along direction ``l``; ``(roots, flags)``.

    A vanishing leading coefficient switches to the linear equation and sets
    ``flags["linear"]``.
    """
    l = np.asarray(l, dtype=float).ravel()
    a = lam.a
    b = float(lam.c @ l + l @ lam.d)
    c = float(l @ lam.b @ l)
    if abs(a) <= tol:
        if abs(b) <= tol:
            return (), {"linear": True, "degenerate": True}
        return (-c / b,), {"linear": True}
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return (), {"linear": False, "discriminant": disc}
    s = np.sqrt(disc)
    # stable form of the two roots
    q = -0.5 * (b + np.copysign(s, b)) if b != 0 else -0.5 * s
    r1 = q / a
    r2 = c / q if q != 0 else -r1
    return tuple(sorted((float(r1), float(r2)))), {"linear": False, "discriminant": disc}


def existence_verdict(delta, l):
    """``(l' Delta l >= 0, Delta + Delta' PSD, l' Delta l, min eig)``."""
    l = np.asarray(l, dtype=float).ravel()
    delta = np.asarray(delta, dtype=float)
    q = float(l @ delta @ l)
    lo = min_eig(delta + delta.T)
    return q >= 0, lo >= 0, q, lo


def normalized_gain(L, sigma):
    """``(lam, l)`` with ``L Sigma^{1/2} = lam l'`` and ``|l| = 1``."""
    lbar = (np.atleast_2d(L) @ psd_sqrt(sigma)).ravel()
    lam = float(np.linalg.norm(lbar))
    return lam, (lbar / lam if lam > 0 else lbar)


def existence_check(spec, sigma, V, directions=None, t=1):
    """Evaluate the existence test for both players.

    ``directions`` defaults to ``[1, ..., 1] / sqrt(n)``; a solved steady
    state supplies its own directions through :func:`normalized_gain`.
    """
    for i in range(2):
        _need_scalar(spec, i)
    if directions is None:
        directions = tuple(np.ones(spec.n[i]) / np.sqrt(spec.n[i]) for i in range(2))
    dirs, lams, deltas, qs, roots, ex, suff, lows = [], [], [], [], [], [], [], []
    notes = []
    for i in range(2):
        l = np.asarray(directions[i], dtype=float).ravel()
        nrm = np.linalg.norm(l)
        if nrm == 0:
            raise ValueError("direction must be nonzero")
        l = l / nrm
        lam = assemble_lambdas(spec, i, sigma[i], V[i], t)
        d = lam.delta()
        ok, sok, q, lo = existence_verdict(d, l)
        r, flags = lambda_quadratic(lam, l)
        if flags.get("linear"):
            notes.append(f"player {i + 1}: leading coefficient vanishes, linear branch used")
        dirs.append(l)
        lams.append(lam)
        deltas.append(d)
        qs.append(q)
        roots.append(r)
        ex.append(bool(ok))
        suff.append(bool(sok))
        lows.append(lo)
    return ExistenceReport(tuple(dirs), tuple(lams), tuple(deltas), tuple(qs), tuple(roots),
                           tuple(ex), tuple(suff), tuple(lows), notes)


def direction_survey(spec, i, sigma, V, count=64, seed=0, t=1):
    """``l' Delta l`` over a set of unit directions (angle grid for ``n = 2``).

    Returns ``(directions, values)``. This is a survey of the test, not a
    decision procedure for existence.
    """
    lam = assemble_lambdas(spec, i, sigma, V, t)
    d = lam.delta()
    n = spec.n[i]
    if n == 1:
        dirs = np.array([[1.0]])
    elif n == 2:
        th = np.linspace(0.0, np.pi, count, endpoint=False)
        dirs = np.column_stack([np.cos(th), np.sin(th)])
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((count, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = np.einsum("ki,ij,kj->k", dirs, d, dirs)
    return dirs, vals
