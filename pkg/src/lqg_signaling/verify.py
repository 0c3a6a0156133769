"""Monte-Carlo checks of the equilibrium claim within the linear-affine class.

Deviations replace a player's ``(L_t, M_t)`` on chosen stages; the public
beliefs keep following the equilibrium strategies, so the deviator is
evaluated against the belief system the equilibrium prescribes. All costs
are estimated with common random numbers: the equilibrium run and every
deviation run reuse the same draws trajectory by trajectory, and the test
statistic is the per-trajectory cost difference.
"""

from dataclasses import dataclass, field

import numpy as np

from .runtime import SimulationConfig, simulate

__all__ = [
    "CLASS_NOTE",
    "DeviationSpec",
    "CostEstimate",
    "DeviationVerdict",
    "mc_cost_estimate",
    "deviation_test",
    "random_deviations",
    "value_consistency_test",
    "deviation_suite",
]

CLASS_NOTE = ("deviations are restricted to linear-affine strategies u = L x + M xhat; "
              "beliefs stay at the equilibrium belief system")


@dataclass(frozen=True)
class DeviationSpec:
    """Additive perturbation ``epsilon * (dL_t, dM_t)`` of one player's strategy.

    ``dL`` and ``dM`` are tuples aligned with ``stages``.
    """

    player: int
    stages: tuple
    dL: tuple
    dM: tuple
    epsilon: float = 1.0

    def overrides(self, spec, path):
        rows = spec.action_slice(self.player)
        out = {}
        for t, dl, dm in zip(self.stages, self.dL, self.dM):
            st = path.stage(t)
            L = st.L[self.player] + self.epsilon * np.asarray(dl, dtype=float)
            M = st.M[rows] + self.epsilon * np.asarray(dm, dtype=float)
            out[(self.player, t)] = (L, M)
        return out

    def to_dict(self):
        return {"player": self.player + 1, "stages": list(self.stages), "epsilon": self.epsilon,
                "dL": [np.asarray(a).tolist() for a in self.dL],
                "dM": [np.asarray(a).tolist() for a in self.dM]}


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    se: float
    n: int
    seed: int

    def to_dict(self):
        return {"mean": self.mean, "se": self.se, "n": self.n, "seed": self.seed}


@dataclass
class DeviationVerdict:
    deviation: DeviationSpec
    delta: float
    se: float
    k_se: float
    passed: bool
    deviated: CostEstimate
    equilibrium: CostEstimate

    def to_dict(self):
        return {"deviation": self.deviation.to_dict(), "delta_cost": self.delta, "se": self.se,
                "k_se": self.k_se, "passed": self.passed,
                "deviated": self.deviated.to_dict(), "equilibrium": self.equilibrium.to_dict()}


def _estimate(a, seed):
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    se = float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return CostEstimate(float(a.mean()), se, int(n), int(seed))


def mc_cost_estimate(spec, path, overrides, cfg):
    """Total-cost estimates of both players under ``overrides``."""
    if cfg.n_traj < 2:
        raise ValueError("need at least two trajectories for a standard error")
    ens = simulate(spec, path, cfg.with_overrides(overrides or {}))
    return tuple(_estimate(ens.cost[:, i], cfg.seed) for i in range(2))


def _paired(spec, path, dev, cfg, base_cost, k_se):
    i = dev.player
    ens = simulate(spec, path, cfg.with_overrides(dev.overrides(spec, path)))
    d = ens.cost[:, i] - base_cost[:, i]
    diff = _estimate(d, cfg.seed)
    # exact zero differences give se = 0; the verdict is then delta >= 0
    passed = bool(diff.mean >= -k_se * diff.se)
    return DeviationVerdict(dev, diff.mean, diff.se, k_se, passed,
                            _estimate(ens.cost[:, i], cfg.seed), _estimate(base_cost[:, i], cfg.seed))


def deviation_test(spec, path, dev, cfg, k_se=2.0):
    """PASS when the deviator's paired cost change is at least ``-k_se`` SE."""
    base = simulate(spec, path, cfg.with_overrides({}))
    return _paired(spec, path, dev, cfg, base.cost, k_se)


def random_deviations(spec, path, player, count, epsilon, seed, stages=None):
    """Random perturbation directions of unit total Frobenius norm."""
    stages = tuple(range(1, path.horizon + 1)) if stages is None else tuple(stages)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(player,)))
    m, n, N = spec.m[player], spec.n[player], spec.n_total
    out = []
    for _ in range(count):
        dL = rng.standard_normal((len(stages), m, n))
        dM = rng.standard_normal((len(stages), m, N))
        scale = np.sqrt(np.sum(dL ** 2) + np.sum(dM ** 2))
        out.append(DeviationSpec(player, stages, tuple(dL / scale), tuple(dM / scale), float(epsilon)))
    return out


def deviation_suite(spec, path, cfg, count=20, epsilon=0.1, dev_seed=0, k_se=2.0):
    """Run ``count`` random deviations per player against one shared baseline run."""
    base = simulate(spec, path, cfg.with_overrides({}))
    results = []
    for i in range(2):
        for dev in random_deviations(spec, path, i, count, epsilon, dev_seed):
            results.append(_paired(spec, path, dev, cfg, base.cost, k_se))
    return {
        "note": CLASS_NOTE,
        "n_traj": cfg.n_traj,
        "seed": cfg.seed,
        "deviation_seed": dev_seed,
        "epsilon": epsilon,
        "k_se": k_se,
        "passed": all(r.passed for r in results),
        "n_failed": sum(not r.passed for r in results),
        "results": [r.to_dict() for r in results],
    }


def value_consistency_test(spec, path, cfg, k_se=3.0):
    """Compare simulated costs-to-go with the quadratic value functions.

    For stage 1 the target is the prior expectation ``tr(V_11 Sigma_1) + rho``
    of the value. For every stage ``t`` the per-trajectory difference between
    the realized cost-to-go and ``quad(V_t; e_t) + rho_t`` at the sampled
    ``e_t = [x_t^i; xhat_t]`` must have zero mean within ``k_se`` SE.
    """
    ens = simulate(spec, path, cfg.with_overrides({}))
    ctg = np.cumsum(ens.stage_cost[:, ::-1], axis=1)[:, ::-1]
    players = []
    ok_all = True
    for i in range(2):
        n_i = spec.n[i]
        st1 = path.stage(1)
        target = float(np.trace(st1.values[i].V[:n_i, :n_i] @ spec.prior_cov[i]) + st1.values[i].rho)
        est = _estimate(ens.cost[:, i], cfg.seed)
        ok1 = bool(abs(est.mean - target) <= k_se * est.se + 1e-9 * max(1.0, abs(target)))
        stages = []
        for st in path.stages:
            k = st.t - 1
            e = np.concatenate([ens.x[:, k, spec.state_slice(i)], ens.xhat[:, k]], axis=1)
            pred = np.einsum("ka,ab,kb->k", e, st.values[i].V, e) + st.values[i].rho
            diff = _estimate(ctg[:, k, i] - pred, cfg.seed)
            sok = bool(abs(diff.mean) <= k_se * diff.se + 1e-9 * max(1.0, abs(float(pred.mean()))))
            stages.append({"t": st.t, "mean_difference": diff.mean, "se": diff.se, "passed": sok})
            ok1 = ok1 and sok
        players.append({"player": i + 1, "target": target, "estimate": est.to_dict(),
                        "stages": stages, "passed": ok1})
        ok_all = ok_all and ok1
    return {"n_traj": cfg.n_traj, "seed": cfg.seed, "k_se": k_se, "players": players, "passed": ok_all}
