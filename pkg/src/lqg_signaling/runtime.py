"""Forward construction of the equilibrium and Monte-Carlo play.

The covariance path ``Sigma_1, Sigma_2, ...`` does not depend on realized
actions, so the whole on-path strategy profile is fixed before any play:
stage ``t`` uses ``u^i = L_t^i x^i + M_t^i xhat`` with ``xhat`` the public
means, themselves propagated by the belief filter from observed actions.

Random numbers: trajectories are simulated in chunks of
``SimulationConfig.chunk``; chunk ``c`` draws from
``default_rng(SeedSequence(seed, spawn_key=(c,)))`` the standard normals
for the prior sample and every stage's noise, in that order. Trajectory
``k`` therefore sees the same draws whatever ``n_traj`` or the strategy
overrides are, which is what paired (common random number) comparisons rely
on.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from ._linalg import psd_sqrt
from .belief import kalman_gain
from .game import Trajectory
from .solver import SolverError, SolverOptions, ValueCache, ValueQuadratic, propagate_sigma, solve_subgame

__all__ = [
    "PathStage",
    "EquilibriumPath",
    "SimulationConfig",
    "Ensemble",
    "build_equilibrium_path",
    "simulate",
    "posterior_check",
    "InsufficientSamples",
]


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class PathStage:
    t: int
    sigma: tuple
    L: tuple
    M: np.ndarray
    values: tuple
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EquilibriumPath:
    """On-path ``(Sigma_t, L_t, M_t, V_t, rho_t)`` for t = 1..T plus ``Sigma_{T+1}``."""

    stages: tuple
    final_sigma: tuple

    @property
    def horizon(self):
        return len(self.stages)

    def stage(self, t):
        return self.stages[t - 1]

    def sigma(self, t):
        return self.final_sigma if t == self.horizon + 1 else self.stages[t - 1].sigma

    def covariance_residual(self, spec):
        """Largest ``|Sigma_{t+1} - phi_s(Sigma_t, L_t)|`` along the path."""
        worst = 0.0
        for st in self.stages:
            nxt = propagate_sigma(spec, st.t, st.sigma, st.L)
            ref = self.sigma(st.t + 1)
            worst = max(worst, max(float(np.max(np.abs(nxt[i] - ref[i]))) for i in range(2)))
        return worst

    def with_gain(self, spec, i, L, stages=None):
        """Copy with player ``i``'s gain overwritten (beliefs follow the new gains)."""
        stages = range(1, self.horizon + 1) if stages is None else stages
        out = list(self.stages)
        for t in stages:
            st = out[t - 1]
            gains = list(st.L)
            gains[i] = np.array(L, dtype=float).reshape(spec.m[i], spec.n[i])
            out[t - 1] = replace(st, L=tuple(gains))
        return EquilibriumPath(tuple(out), self.final_sigma)

    def to_dict(self):
        def st(s):
            return {
                "t": s.t,
                "Sigma": [x.tolist() for x in s.sigma],
                "L": [x.tolist() for x in s.L],
                "M": np.asarray(s.M).tolist(),
                "V": [v.V.tolist() for v in s.values],
                "rho": [v.rho for v in s.values],
                "diagnostics": s.diagnostics,
            }
        return {"stages": [st(s) for s in self.stages], "final_Sigma": [x.tolist() for x in self.final_sigma]}

    @classmethod
    def from_dict(cls, doc):
        stages = []
        for s in doc["stages"]:
            stages.append(PathStage(
                t=int(s["t"]),
                sigma=tuple(np.array(x, dtype=float) for x in s["Sigma"]),
                L=tuple(np.atleast_2d(np.array(x, dtype=float)) for x in s["L"]),
                M=np.atleast_2d(np.array(s["M"], dtype=float)),
                values=tuple(ValueQuadratic(np.array(v, dtype=float), float(r)) for v, r in zip(s["V"], s["rho"])),
                diagnostics=s.get("diagnostics", {}),
            ))
        return cls(tuple(stages), tuple(np.array(x, dtype=float) for x in doc["final_Sigma"]))


def build_equilibrium_path(spec, cache=None, options=None):
    """Equilibrium path from the prior covariance, stage 1 to T.

    All stages are solved jointly (see :func:`solve_subgame`) and stored in
    ``cache``. Solver errors get a ``partial`` attribute: the unconverged
    iterate of the last complete sweep, or an empty path if there was none.
    """
    opts = options or SolverOptions()
    if cache is None:
        cache = ValueCache(opts.cache_grid)
    prior = tuple(np.array(s, dtype=float) for s in spec.prior_cov)
    try:
        sols = solve_subgame(spec, 1, prior, opts, cache=cache)
    except SolverError as exc:
        exc.trace.append((1, prior))
        exc.partial = _as_path(spec, getattr(exc, "last_sweep", None) or [], prior)
        raise
    for sol in sols:
        cache.put(sol.t, sol.sigma, sol)
    return _as_path(spec, sols, prior)


def _as_path(spec, sols, prior):
    stages = tuple(PathStage(s.t, s.sigma, s.L, s.M, s.values, dict(s.diagnostics)) for s in sols)
    final = propagate_sigma(spec, sols[-1].t, sols[-1].sigma, sols[-1].L) if sols else prior
    return EquilibriumPath(stages, final)


@dataclass(frozen=True)
class SimulationConfig:
    """Monte-Carlo settings.

    ``overrides`` maps ``(player, t)`` to a replacement ``(L, M)`` for that
    player's strategy at stage ``t``. Public beliefs are always updated with
    the path's own strategies, whatever is actually played.
    """

    n_traj: int = 10_000
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    chunk: int = 4096

    def with_overrides(self, overrides):
        return replace(self, overrides=dict(overrides))


@dataclass
class Ensemble:
    """``N`` simulated plays; arrays indexed ``[trajectory, stage, ...]``.

    ``x`` and ``xhat`` cover t = 1..T+1, ``u``, ``w`` and ``stage_cost``
    cover t = 1..T. ``stage_cost[k, t-1, i]`` is player ``i``'s cost at
    stage ``t``.
    """

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    xhat: np.ndarray
    stage_cost: np.ndarray
    seed: int

    @property
    def n_traj(self):
        return self.x.shape[0]

    @property
    def cost(self):
        return self.stage_cost.sum(axis=1)

    def trajectory(self, k):
        return Trajectory(x=self.x[k].copy(), u=self.u[k].copy(), w=self.w[k].copy(),
                          cost=self.cost[k].copy(), xhat=self.xhat[k].copy())

    def csv_header(self, spec):
        cols = ["trajectory", "t"]
        for name, dims in (("x", spec.n), ("u", spec.m), ("xhat", spec.n)):
            for p in range(2):
                cols += [f"{name}{p + 1}_{k + 1}" for k in range(dims[p])]
        return cols + ["cost1", "cost2"]

    def to_csv(self, spec, path):
        """One row per (trajectory, t), t = 1..T+1.

        ``cost1``/``cost2`` are accumulated through stage ``t - 1``, so the
        row for ``t = T+1`` holds the path totals; ``u`` is blank there.
        """
        T = self.u.shape[1]
        acc = np.concatenate([np.zeros((self.n_traj, 1, 2)), np.cumsum(self.stage_cost, axis=1)], axis=1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.csv_header(spec))
            for k in range(self.n_traj):
                for t in range(T + 1):
                    u = [repr(float(v)) for v in self.u[k, t]] if t < T else [""] * spec.m_total
                    row = [k, t + 1] + [repr(float(v)) for v in self.x[k, t]] + u
                    row += [repr(float(v)) for v in self.xhat[k, t]] + [repr(float(v)) for v in acc[k, t]]
                    w.writerow(row)


def _strategy(spec, path, cfg, i, t):
    st = path.stage(t)
    return cfg.overrides.get((i, t), (st.L[i], st.M[spec.action_slice(i)]))


def _simulate_chunk(spec, path, cfg, z):
    T, N = spec.horizon, spec.n_total
    size = z.shape[1]
    sx = [spec.state_slice(i) for i in range(2)]
    su = [spec.action_slice(i) for i in range(2)]
    prior_f = [psd_sqrt(spec.prior_cov[i]) for i in range(2)]
    noise_f = [psd_sqrt(spec.noise_cov[i]) for i in range(2)]
    x = np.zeros((size, T + 1, N))
    xhat = np.zeros((size, T + 1, N))
    u = np.zeros((size, T, spec.m_total))
    w = np.zeros((size, T, N))
    cost = np.zeros((size, T, 2))
    for i in range(2):
        x[:, 0, sx[i]] = spec.prior_mean[i] + z[0][:, sx[i]] @ prior_f[i].T
        xhat[:, 0, sx[i]] = spec.prior_mean[i]
    for t in range(1, T + 1):
        st = path.stage(t)
        k = t - 1
        for i in range(2):
            L, M = _strategy(spec, path, cfg, i, t)
            u[:, k, su[i]] = x[:, k, sx[i]] @ np.atleast_2d(L).T + xhat[:, k] @ np.atleast_2d(M).T
        for i in range(2):
            w[:, k, sx[i]] = z[t][:, sx[i]] @ noise_f[i].T
            A, B = spec.A_at(i, t), spec.B_at(i, t)
            x[:, t, sx[i]] = x[:, k, sx[i]] @ A.T + u[:, k] @ B.T + w[:, k, sx[i]]
            # belief update with the path's strategies, as observed
            Li, Mi = st.L[i], st.M[su[i]]
            G = kalman_gain(st.sigma[i], Li)
            innov = u[:, k, su[i]] - xhat[:, k, sx[i]] @ Li.T - xhat[:, k] @ Mi.T
            xhat[:, t, sx[i]] = xhat[:, k, sx[i]] @ A.T + u[:, k] @ B.T + innov @ (A @ G).T
        for i in range(2):
            Tm, S, P = spec.action_cost[i], spec.cross_cost[i], spec.state_cost[i]
            uk, xk = u[:, k], x[:, k]
            cost[:, k, i] = (np.einsum("ka,ab,kb->k", uk, Tm, uk) + np.einsum("ka,ab,kb->k", xk, P, xk)
                             + 2.0 * np.einsum("ka,ab,kb->k", uk, S, xk))
    return x, u, w, xhat, cost


def simulate(spec, path, cfg):
    """Sample ``cfg.n_traj`` plays of the (possibly overridden) strategy profile."""
    if path.horizon != spec.horizon:
        raise ValueError(f"path covers {path.horizon} stages, game has {spec.horizon}")
    for (i, t), (L, M) in cfg.overrides.items():
        if np.shape(np.atleast_2d(L)) != (spec.m[i], spec.n[i]) or np.shape(np.atleast_2d(M)) != (spec.m[i], spec.n_total):
            raise ValueError(f"override for player {i + 1}, stage {t} has wrong dimensions")
    parts = []
    done, c = 0, 0
    while done < cfg.n_traj:
        size = min(cfg.chunk, cfg.n_traj - done)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(c,)))
        # always draw a full chunk so trajectory k's numbers do not depend on n_traj
        z = rng.standard_normal((spec.horizon + 1, cfg.chunk, spec.n_total))
        parts.append(_simulate_chunk(spec, path, cfg, z[:, :size]))
        done += size
        c += 1
    x, u, w, xhat, cost = (np.concatenate([p[j] for p in parts]) for j in range(5))
    return Ensemble(x=x, u=u, w=w, xhat=xhat, stage_cost=cost, seed=cfg.seed)


def _mean_se(a):
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    mean = a.mean(axis=0)
    se = a.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def posterior_check(spec, path, cfg, t, k_se=3.0, bins=4, bin_k_se=4.0, min_samples=10_000):
    """Empirical check of the Gaussian beliefs at stage ``t`` along the path.

    Per player, the residual ``r = x_t - xhat_t`` must have zero mean,
    covariance ``Sigma_t`` and be uncorrelated with the public mean; the
    same mean and covariance tests are repeated within quantile bins of the
    public mean (a function of the action history). The on-path innovation
    ``u_t - L xhat_t - m_t`` is checked for zero mean. Tolerances are
    ``k_se`` standard errors, ``bin_k_se`` within bins (many more
    comparisons).
    """
    if cfg.n_traj < min_samples:
        raise InsufficientSamples(f"posterior check needs at least {min_samples} trajectories")
    if not 1 <= t <= spec.horizon + 1:
        raise ValueError(f"stage {t} outside 1..{spec.horizon + 1}")
    ens = simulate(spec, path, replace(cfg, overrides={}))
    out = {"t": t, "k_se": k_se, "n_traj": cfg.n_traj, "seed": cfg.seed, "players": []}
    all_ok = True
    for i in range(2):
        sx = spec.state_slice(i)
        r = ens.x[:, t - 1, sx] - ens.xhat[:, t - 1, sx]
        target = np.asarray(path.sigma(t)[i])
        rep = _moment_check(r, target, k_se)
        mh = ens.xhat[:, t - 1]
        prod = r[:, :, None] * mh[:, None, :]
        pm, pse = _mean_se(prod.reshape(len(r), -1))
        rep["orthogonality_max_z"] = float(np.max(np.abs(pm) / np.maximum(pse, 1e-300), initial=0.0)) if np.any(pse > 0) else 0.0
        rep["orthogonality_ok"] = bool(np.all(np.abs(pm) <= k_se * pse + 1e-12))
        rep["bins"] = []
        key = mh[:, sx][:, 0] if spec.n[i] else np.zeros(len(r))
        if np.ptp(key) > 0 and bins > 1:
            edges = np.quantile(key, np.linspace(0, 1, bins + 1))
            idx = np.clip(np.searchsorted(edges, key, side="right") - 1, 0, bins - 1)
            for b in range(bins):
                sel = idx == b
                if sel.sum() > 1:
                    rep["bins"].append(_moment_check(r[sel], target, bin_k_se))
        if t <= spec.horizon:
            st = path.stage(t)
            su = spec.action_slice(i)
            innov = ens.u[:, t - 1, su] - ens.xhat[:, t - 1, sx] @ st.L[i].T - ens.xhat[:, t - 1] @ st.M[su].T
            im, ise = _mean_se(innov)
            rep["innovation_mean"] = im.tolist()
            rep["innovation_se"] = ise.tolist()
            rep["innovation_ok"] = bool(np.all(np.abs(im) <= k_se * ise + 1e-12))
            icov = np.cov(innov, rowvar=False, ddof=1).reshape(spec.m[i], spec.m[i])
            rep["innovation_cov"] = icov.tolist()
            rep["innovation_cov_target"] = (st.L[i] @ st.sigma[i] @ st.L[i].T).tolist()
        ok = rep["mean_ok"] and rep["cov_ok"] and rep["orthogonality_ok"] and rep.get("innovation_ok", True)
        ok = ok and all(b["mean_ok"] and b["cov_ok"] for b in rep["bins"])
        rep["passed"] = bool(ok)
        all_ok = all_ok and ok
        out["players"].append(rep)
    out["passed"] = bool(all_ok)
    return out


def _moment_check(r, target, k_se):
    n = r.shape[0]
    mean, se = _mean_se(r)
    c = r - mean
    prod = (c[:, :, None] * c[:, None, :]).reshape(n, -1)
    cm, cse = _mean_se(prod)
    cov = (cm * n / (n - 1)).reshape(target.shape)
    cse = cse.reshape(target.shape)
    return {
        "n": int(n),
        "mean": mean.tolist(),
        "mean_se": se.tolist(),
        "mean_ok": bool(np.all(np.abs(mean) <= k_se * se + 1e-12)),
        "cov": cov.tolist(),
        "cov_target": target.tolist(),
        "cov_se": cse.tolist(),
        "cov_ok": bool(np.all(np.abs(cov - target) <= k_se * cse + 1e-12)),
    }
