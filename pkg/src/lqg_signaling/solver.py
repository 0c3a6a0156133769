"""Backward recursion for signaling equilibria with linear strategies.

At stage ``t`` and belief covariances ``Sigma = (Sigma^1, Sigma^2)`` each
player plays ``u^i = L^i x^i + M^i xhat``. The gains solve the coupled
fixed point

    (Du' Vbar Du) L^i = -Du' Vbar De1,

where ``Du``/``De1`` depend on both gains through the belief gains ``G``
and ``Vbar`` embeds the next stage's value evaluated at the covariance
``phi_s(Sigma, L)`` the gains themselves induce. Values are quadratic,
``quad(V^i; e^i) + rho^i``, with ``V``/``rho`` functions of ``Sigma``.

Single stage: an outer loop anchors the continuation covariance
``Sigma' = phi_s(Sigma, L)`` and asks a value oracle for the next-stage
value there; an inner damped iteration (``L <- (1-a) L + a L_solve``)
solves the gain equation with that continuation held fixed. The outer loop
stops once the gain equation holds, to ``residual_tol``, with the
continuation evaluated at the covariance induced by the final gains.

Whole subgame: the continuation of stage ``t`` is only ever needed at the
one covariance its own gains induce, so the stages ``t..T`` from a given
``Sigma_t`` are solved jointly by forward-backward sweeps (propagate the
covariances with the current gains, re-solve every stage backward against
the value just computed after it) until a sweep leaves every gain in place.
Nesting the single-stage solve recursively would cost a fresh subgame
solve per outer round, exponential in the horizon.

Iterations start from the zero-continuation gain ``-(T_ii)^+ S_ii``; when
several fixed points exist, the one reached from there is returned.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from ._linalg import min_eig, solve_psd, sym
from .belief import kalman_gain, update_cov
from .stages import StackedLayout, assemble_dcj, assemble_vbar

__all__ = [
    "SolverOptions",
    "SolverError",
    "NonConvergence",
    "SingularStage",
    "ValueQuadratic",
    "StageSolution",
    "ValueCache",
    "terminal_gain",
    "propagate_sigma",
    "gain_equation",
    "solve_signaling_gain",
    "solve_affine_term",
    "update_rho",
    "update_value",
    "solve_stage",
    "solve_subgame",
    "solve_stage_cached",
    "evaluate_value",
    "zero_value",
]


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-12
    residual_tol: float = 1e-9
    max_iter: int = 10_000
    damping: float = 0.5
    max_outer: int = 200
    max_sweeps: int = 1000
    cache_grid: float = 1e-9
    max_stage_solves: int = 200_000
    curvature_tol: float = 1e-12
    belief_gain_limit: float = 1e8

    def to_dict(self):
        return dict(self.__dict__)


class SolverError(RuntimeError):
    pass


class NonConvergence(SolverError):
    """The gain fixed point was not reached within the iteration budget.

    ``best`` is the last iterate, ``residual`` its gain-equation residual and
    ``trace`` the chain of ``(t, Sigma)`` recursion frames that led here,
    innermost first.
    """

    def __init__(self, message, stage=None, best=None, residual=None):
        super().__init__(message)
        self.stage = stage
        self.best = best
        self.residual = residual
        self.trace = []


class SingularStage(SolverError):
    """Stage curvature ``Du' Vbar Du`` is not positive semidefinite."""

    def __init__(self, message, stage=None, player=None, min_eig=None):
        super().__init__(message)
        self.stage = stage
        self.player = player
        self.min_eig = min_eig
        self.trace = []


@dataclass(frozen=True)
class ValueQuadratic:
    """Cost-to-go ``e' V e + rho`` over ``e = [x^i; xhat^1; xhat^2]``."""

    V: np.ndarray
    rho: float

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        return float(e @ self.V @ e + self.rho)

    def own_type_block(self, n_i):
        return self.V[:n_i, :n_i]


def zero_value(spec):
    return tuple(ValueQuadratic(np.zeros((StackedLayout.of(spec, i).e_len,) * 2), 0.0) for i in range(2))


@dataclass
class StageSolution:
    t: int
    sigma: tuple
    L: tuple
    M: np.ndarray
    values: tuple
    matrices: tuple
    sigma_next: tuple
    diagnostics: dict = field(default_factory=dict)

    def M_player(self, spec, i):
        return self.M[spec.action_slice(i)]


class ValueCache:
    """Memo of stage solutions keyed by stage and quantized covariances.

    Covariance entries are rounded to the nearest multiple of ``grid`` before
    keying, so a hit is at most ``grid`` away entrywise from the stored key.
    Inserts are serialized by a lock; lookups are plain dict reads.
    """

    def __init__(self, grid=1e-9):
        self.grid = float(grid)
        self._store = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.solves = 0

    def key(self, t, sigma):
        parts = [int(t)]
        for s in sigma:
            parts.extend(np.rint(np.asarray(s, dtype=float) / self.grid).astype(np.int64).ravel().tolist())
        return tuple(parts)

    def get(self, t, sigma):
        sol = self._store.get(self.key(t, sigma))
        if sol is None:
            self.misses += 1
        else:
            self.hits += 1
        return sol

    def put(self, t, sigma, sol):
        with self._lock:
            self._store.setdefault(self.key(t, sigma), sol)

    def __len__(self):
        return len(self._store)


def terminal_gain(spec, i):
    """Gain ``-(T_ii)^+ S_ii`` solving the stage problem with zero continuation."""
    x, _ = solve_psd(spec.own_action_cost(i), spec.own_cross_cost(i))
    return -x


def propagate_sigma(spec, t, sigma, L):
    return tuple(update_cov(sigma[i], L[i], spec, i, t) for i in range(2))


def gain_equation(spec, t, sigma, L, V_next):
    """Linear solve of the gain equation for fixed belief gains and continuation.

    Returns ``(L_solve, K, rhs, matrices)`` where player ``i``'s equation is
    ``K[i] L = -rhs[i]`` and ``matrices`` carry their ``vbar``.
    """
    G = tuple(kalman_gain(sigma[i], L[i]) for i in range(2))
    mats = assemble_dcj(spec, t, L, G)
    L_solve, K, rhs, out = [], [], [], []
    for i in range(2):
        vbar = assemble_vbar(spec, i, V_next[i].V)
        mi = mats[i].with_vbar(vbar)
        Du = mi.Du
        k = sym(Du.T @ vbar @ Du)
        r = Du.T @ vbar @ mi.De1
        x, _ = solve_psd(k, r)
        L_solve.append(-x)
        K.append(k)
        rhs.append(r)
        out.append(mi)
    return tuple(L_solve), tuple(K), tuple(rhs), tuple(out)


def _residuals(L, K, rhs):
    return tuple(float(np.linalg.norm(K[i] @ L[i] + rhs[i])) for i in range(2))


def _solve_gain(spec, t, sigma, value_oracle, options, init=None):
    opts = options
    L = tuple(np.array(l, dtype=float) for l in init) if init is not None else \
        tuple(terminal_gain(spec, i) for i in range(2))
    a = opts.damping
    inner_total = 0
    res = (np.inf, np.inf)
    for outer in range(opts.max_outer):
        sigma_next = propagate_sigma(spec, t, sigma, L)
        V_next = value_oracle(sigma_next)
        _, K, rhs, mats = gain_equation(spec, t, sigma, L, V_next)
        res = _residuals(L, K, rhs)
        if max(res) <= opts.residual_tol:
            break
        for _ in range(opts.max_iter):
            L_solve, _, _, it_mats = gain_equation(spec, t, sigma, L, V_next)
            for i in range(2):
                if np.max(np.abs(it_mats[0].G[i]), initial=0.0) > opts.belief_gain_limit:
                    raise NonConvergence(
                        f"stage {t}: player {i + 1}'s gain is collapsing towards zero (belief gain "
                        f"beyond {opts.belief_gain_limit:.0e}); the gain equation may have no solution here",
                        stage=t, best=L, residual=res)
            step = max(float(np.linalg.norm(L_solve[i] - L[i])) for i in range(2))
            L = tuple((1 - a) * L[i] + a * L_solve[i] for i in range(2))
            inner_total += 1
            if not np.all(np.isfinite(L[0])) or not np.all(np.isfinite(L[1])):
                raise NonConvergence(f"stage {t}: gain iteration diverged", stage=t, best=L)
            if step <= opts.tol:
                break
        else:
            raise NonConvergence(f"stage {t}: damped gain iteration hit max_iter={opts.max_iter}",
                                 stage=t, best=L, residual=res)
    else:
        raise NonConvergence(f"stage {t}: continuation anchor did not settle in {opts.max_outer} rounds "
                             f"(residual {max(res):.3e})", stage=t, best=L, residual=res)
    curv = tuple(min_eig(K[i]) for i in range(2))
    for i in range(2):
        if curv[i] < -opts.curvature_tol:
            raise SingularStage(f"stage {t}, player {i + 1}: stage curvature has eigenvalue {curv[i]:.3e}",
                                stage=t, player=i, min_eig=curv[i])
    diag = {
        "outer_iterations": outer + 1,
        "inner_iterations": inner_total,
        "gain_residual": list(res),
        "curvature_min_eig": list(curv),
        "curvature_singular": [bool(abs(c) <= opts.curvature_tol) for c in curv],
    }
    return L, sigma_next, V_next, mats, diag


def solve_signaling_gain(spec, t, sigma, value_oracle, options=None, init=None):
    """Solve the stage-``t`` gain fixed point at covariances ``sigma``.

    ``value_oracle(sigma_next)`` must return the pair of next-stage
    :class:`ValueQuadratic` at an arbitrary covariance pair.
    Returns ``(L, diagnostics)``.
    """
    L, _, _, _, diag = _solve_gain(spec, t, sigma, value_oracle, options or SolverOptions(), init)
    return L, diag


def solve_affine_term(spec, matrices):
    """Map ``M`` with ``m = M xhat`` from the coupled affine-term equations.

    ``matrices`` are both players' converged stage matrices with ``vbar``
    attached. Returns ``(M, info)`` with the condition number of the system
    matrix and the residual of the linear system.
    """
    m = spec.m
    rows_k, rows_c, rows_r = [], [], []
    blk = np.zeros((spec.m_total, spec.m_total))
    off = 0
    for i in range(2):
        mi = matrices[i]
        Du, vbar = mi.Du, mi.vbar
        blk[off:off + m[i], off:off + m[i]] = Du.T @ vbar @ Du
        rows_c.append(Du.T @ vbar @ mi.C)
        rows_r.append(Du.T @ vbar @ mi.De23)
        off += m[i]
    H = blk + np.vstack(rows_c)
    R = np.vstack(rows_r)
    cond = float(np.linalg.cond(H)) if H.size else 1.0
    if np.isfinite(cond) and cond < 1e12:
        M = -np.linalg.solve(H, R)
        singular = False
    else:
        M = -np.linalg.lstsq(H, R, rcond=None)[0]
        singular = True
    residual = float(np.linalg.norm(H @ M + R))
    return M, {"condition": cond, "affine_residual": residual, "affine_singular": singular}


def update_value(spec, matrices, L, M):
    """``V^i = F' Vbar F`` with ``F = [Du L^i, Du M^i + C M] + De``."""
    out = []
    for i in range(2):
        mi = matrices[i]
        lay = mi.layout
        F = np.array(mi.De, dtype=float)
        own = lay.e[0]
        means = slice(lay.e[1].start, lay.e[2].stop)
        F[:, own] += mi.Du @ L[i]
        F[:, means] += mi.Du @ M[spec.action_slice(i)] + mi.C @ M
        out.append(sym(F.T @ mi.vbar @ F))
    return tuple(out)


def update_rho(spec, sigma, matrices, V_next):
    """Constant terms: opponent-uncertainty, own-noise and continuation parts."""
    out = []
    for i in range(2):
        j = 1 - i
        J, vbar = matrices[i].J, matrices[i].vbar
        n_i = spec.n[i]
        rho = np.trace(np.asarray(sigma[j]) @ (J.T @ vbar @ J))
        rho += np.trace(spec.noise_cov[i] @ V_next[i].V[:n_i, :n_i])
        rho += V_next[i].rho
        out.append(float(rho))
    return tuple(out)


def solve_stage(spec, t, sigma, value_oracle, options=None, init=None):
    """Gains, affine terms and values of stage ``t`` at covariances ``sigma``."""
    opts = options or SolverOptions()
    sigma = tuple(np.asarray(s, dtype=float) for s in sigma)
    L, sigma_next, V_next, mats, diag = _solve_gain(spec, t, sigma, value_oracle, opts, init)
    M, info = solve_affine_term(spec, mats)
    V = update_value(spec, mats, L, M)
    rho = update_rho(spec, sigma, mats, V_next)
    diag.update(info)
    diag["value_asymmetry"] = [float(np.max(np.abs(v - v.T), initial=0.0)) for v in V]
    return StageSolution(
        t=t, sigma=sigma, L=L, M=M,
        values=tuple(ValueQuadratic(V[i], rho[i]) for i in range(2)),
        matrices=mats, sigma_next=sigma_next, diagnostics=diag,
    )


def _constant(values):
    return lambda sigma_next: values


def solve_subgame(spec, t0, sigma, options=None, init=None, cache=None):
    """Equilibrium stage solutions for ``t0..T`` starting from covariances ``sigma``.

    ``init`` optionally maps stage to a starting gain pair. Solver errors
    carry ``last_sweep``, the stage solutions of the last complete sweep
    (``None`` if the first sweep failed). Each sweep
    propagates the covariances forward with the current gains and re-solves
    the stages backward, warm-started, against the next stage's fresh value.
    The sweep in which every stage already satisfies its gain equation at
    the start (no stage moves) is returned, so reported covariances, gains
    and values are mutually consistent. ``cache`` (a :class:`ValueCache`)
    only counts stage solves against ``max_stage_solves`` here.
    """
    opts = options or SolverOptions()
    T = spec.horizon
    sigma = tuple(np.array(s, dtype=float) for s in sigma)
    L = {t: (init or {}).get(t) or tuple(terminal_gain(spec, i) for i in range(2)) for t in range(t0, T + 1)}
    last = None
    for sweep in range(opts.max_sweeps):
        sig = {t0: sigma}
        for t in range(t0, T + 1):
            sig[t + 1] = propagate_sigma(spec, t, sig[t], L[t])
        V_next = zero_value(spec)
        sols = {}
        settled = True
        for t in range(T, t0 - 1, -1):
            try:
                if cache is not None and cache is not False:
                    cache.solves += 1
                    if cache.solves > opts.max_stage_solves:
                        raise NonConvergence(f"stage-solve budget of {opts.max_stage_solves} exhausted", stage=t)
                sol = solve_stage(spec, t, sig[t], _constant(V_next), opts, init=L[t])
            except SolverError as exc:
                exc.last_sweep = last
                raise
            settled = settled and sol.diagnostics["outer_iterations"] == 1
            sols[t] = sol
            L[t] = sol.L
            V_next = sol.values
        if settled:
            for t in range(t0, T + 1):
                sols[t].diagnostics["sweeps"] = sweep + 1
            return [sols[t] for t in range(t0, T + 1)]
        last = [sols[t] for t in range(t0, T + 1)]
    exc = NonConvergence(f"stages {t0}..{T}: forward-backward sweeps did not settle in {opts.max_sweeps} rounds",
                         stage=t0, best=L[t0])
    exc.last_sweep = last
    raise exc


def solve_stage_cached(spec, t, sigma, cache, options=None):
    """Stage-``t`` solution at ``sigma`` within the equilibrium of the subgame from there.

    Solving the subgame also yields the stages after ``t`` on its path; all
    of them go into ``cache``. ``cache=False`` disables memoization.
    """
    opts = options or SolverOptions()
    if cache is not False:
        hit = cache.get(t, sigma)
        if hit is not None:
            return hit
    try:
        sols = solve_subgame(spec, t, sigma, opts, cache=cache)
    except SolverError as exc:
        exc.trace.append((t, tuple(np.array(s) for s in sigma)))
        raise
    if cache is not False:
        for sol in sols:
            cache.put(sol.t, sol.sigma, sol)
    return sols[0]


def evaluate_value(spec, t, sigma, cache=None, options=None):
    """Pair of :class:`ValueQuadratic` at stage ``t`` (1..T+1) and covariances ``sigma``."""
    if not 1 <= t <= spec.horizon + 1:
        raise ValueError(f"stage {t} outside 1..{spec.horizon + 1}")
    if t == spec.horizon + 1:
        return zero_value(spec)
    opts = options or SolverOptions()
    if cache is None:
        cache = ValueCache(opts.cache_grid)
    return solve_stage_cached(spec, t, sigma, cache, opts).values
