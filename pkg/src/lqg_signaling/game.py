"""Two-player dynamic LQG game with privately observed linear-Gaussian types.

Player ``i`` has a type ``x^i`` in R^{n_i} evolving as

    x_{t+1}^i = A_t^i x_t^i + B_t^i u_t + w_t^i,   w_t^i ~ N(0, Q^i),

with ``u_t = (u_t^1, u_t^2)`` the joint, publicly observed action and
``x_1^i ~ N(0, Sigma_1^i)``. Each player pays the quadratic stage cost

    u' T^i u + x' P^i x + 2 u' S^i x

on the joint action and joint type. The game is a cost *minimization*
for both players.

Players are indexed 0 and 1 in code; stages are 1-based (t = 1..T).
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._linalg import PSD_TOL, block_slices, min_eig

__all__ = [
    "GameSpec",
    "Trajectory",
    "Check",
    "ValidationReport",
    "SpecFormatError",
    "validate_spec",
    "stage_cost",
    "path_cost",
    "spec_from_dict",
    "spec_to_dict",
    "load_spec",
    "dump_spec",
    "spec_hash",
]

SYM_TOL = 1e-12


class SpecFormatError(ValueError):
    """Raised when a game-spec document cannot be parsed into a GameSpec."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _per_stage(mats, horizon):
    """Accept one matrix (replicated) or a sequence of ``horizon`` matrices."""
    if isinstance(mats, (list, tuple)) and mats and np.ndim(mats[0]) == 2:
        return tuple(_frozen(a) for a in mats)
    a = np.asarray(mats, dtype=float)
    if a.ndim == 3:
        return tuple(_frozen(x) for x in a)
    return tuple(_frozen(a) for _ in range(horizon))


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Immutable description of the game.

    ``A[i][t-1]`` and ``B[i][t-1]`` are the stage-``t`` dynamics of player
    ``i``. ``B[i]`` has ``m_1 + m_2`` columns, split as
    ``[B_{1}^i  B_{2}^i]`` by action block (see :meth:`B_split`).
    Cost matrices act on the joint action (size ``m_1 + m_2``) and the joint
    type (size ``n_1 + n_2``).
    """

    horizon: int
    n: tuple
    m: tuple
    A: tuple
    B: tuple
    noise_cov: tuple
    prior_cov: tuple
    action_cost: tuple
    cross_cost: tuple
    state_cost: tuple
    prior_mean: tuple = None
    constant_dynamics: bool = field(default=True)

    @classmethod
    def build(cls, horizon, n, m, A, B, noise_cov, prior_cov, action_cost,
              cross_cost, state_cost, prior_mean=None):
        """Construct a spec; ``A[i]``/``B[i]`` may be a single matrix or one per stage."""
        horizon = int(horizon)
        A_st = tuple(_per_stage(A[i], horizon) for i in range(2))
        B_st = tuple(_per_stage(B[i], horizon) for i in range(2))
        constant = all(
            all(np.array_equal(s[0], s[k]) for k in range(len(s)))
            for s in A_st + B_st if s
        )
        if prior_mean is None:
            prior_mean = tuple(np.zeros(int(k)) for k in n)
        return cls(
            horizon=horizon,
            n=tuple(int(k) for k in n),
            m=tuple(int(k) for k in m),
            A=A_st,
            B=B_st,
            noise_cov=tuple(_frozen(q) for q in noise_cov),
            prior_cov=tuple(_frozen(s) for s in prior_cov),
            action_cost=tuple(_frozen(t) for t in action_cost),
            cross_cost=tuple(_frozen(s) for s in cross_cost),
            state_cost=tuple(_frozen(p) for p in state_cost),
            prior_mean=tuple(_frozen(np.ravel(mu)) for mu in prior_mean),
            constant_dynamics=constant,
        )

    # dimensions -----------------------------------------------------------
    @property
    def n_total(self):
        return self.n[0] + self.n[1]

    @property
    def m_total(self):
        return self.m[0] + self.m[1]

    def action_slice(self, i):
        return block_slices(self.m)[i]

    def state_slice(self, i):
        return block_slices(self.n)[i]

    # dynamics ---------------------------------------------------------------
    def A_at(self, i, t):
        return self.A[i][t - 1]

    def B_at(self, i, t):
        return self.B[i][t - 1]

    def B_split(self, i, t):
        """Return ``(B_1^i, B_2^i)``: the columns of ``B_t^i`` acting on u^1 and u^2."""
        b = self.B_at(i, t)
        return b[:, : self.m[0]], b[:, self.m[0]:]

    # costs ------------------------------------------------------------------
    def composite_cost(self, i):
        """R^i = [[T^i, S^i], [S^i', P^i]] acting on ``[u; x]``."""
        t, s, p = self.action_cost[i], self.cross_cost[i], self.state_cost[i]
        return np.block([[t, s], [s.T, p]])

    def own_action_cost(self, i):
        """Diagonal block of T^i for player i's own action."""
        a = self.action_slice(i)
        return self.action_cost[i][a, a]

    def own_cross_cost(self, i):
        """Block of S^i coupling player i's own action with the same player's type."""
        return self.cross_cost[i][self.action_slice(i), self.state_slice(i)]

    def with_horizon(self, horizon):
        """Same game over a different horizon (time-homogeneous specs only)."""
        if not self.constant_dynamics:
            raise ValueError("horizon override requires time-homogeneous dynamics")
        return GameSpec.build(
            horizon, self.n, self.m,
            [self.A[i][0] for i in range(2)], [self.B[i][0] for i in range(2)],
            self.noise_cov, self.prior_cov, self.action_cost, self.cross_cost,
            self.state_cost, self.prior_mean,
        )


@dataclass
class Trajectory:
    """One realized play of the game.

    ``x`` holds joint types for t = 1..T+1 (shape ``(T+1, n_1+n_2)``), ``u``
    joint actions and ``w`` joint noises for t = 1..T, and ``cost`` the two
    players' accumulated costs.
    """

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    cost: np.ndarray = None
    xhat: np.ndarray = None

    def dynamics_residual(self, spec):
        """Largest violation of the type recursion over recorded stages."""
        worst = 0.0
        for t in range(1, self.u.shape[0] + 1):
            for i in range(2):
                s = spec.state_slice(i)
                pred = spec.A_at(i, t) @ self.x[t - 1, s] + spec.B_at(i, t) @ self.u[t - 1] + self.w[t - 1, s]
                worst = max(worst, float(np.max(np.abs(pred - self.x[t, s]), initial=0.0)))
        return worst


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""
    value: float = None


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self):
        """All required checks pass (the strict-PD check is informational)."""
        return all(c.passed for c in self.checks if not c.name.startswith("strict_pd"))

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": bool(c.passed), "detail": c.detail,
                 "value": None if c.value is None else float(c.value)}
                for c in self.checks
            ],
        }


def _shape_check(name, a, shape):
    a = np.asarray(a)
    ok = a.shape == tuple(shape)
    return Check(name, ok, "" if ok else f"shape {a.shape}, expected {tuple(shape)}")


def _sym_check(name, a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return Check(name, False, "not square")
    dev = float(np.max(np.abs(a - a.T), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return Check(name, dev <= SYM_TOL * scale, f"max |a - a'| = {dev:.3e}", dev)


def _psd_check(name, a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return Check(name, False, "not square")
    lo = min_eig(a) if a.size else 0.0
    return Check(name, lo >= -PSD_TOL, f"min eigenvalue {lo:.6g}", lo)


def validate_spec(spec):
    """Run every structural check on ``spec`` and return a report.

    Nothing is raised: the caller decides what a failed check means. The
    ``strict_pd[i]`` checks (``R^i`` positive definite) are informational
    and do not affect :attr:`ValidationReport.ok`.
    """
    checks = [Check("horizon", isinstance(spec.horizon, int) and spec.horizon >= 1,
                    f"horizon = {spec.horizon}")]
    n, m = spec.n, spec.m
    M, N = spec.m_total, spec.n_total
    for i in range(2):
        checks.append(Check(f"stages[{i}]",
                            len(spec.A[i]) == spec.horizon and len(spec.B[i]) == spec.horizon,
                            f"{len(spec.A[i])} A / {len(spec.B[i])} B stages for horizon {spec.horizon}"))
        a_ok = all(np.shape(a) == (n[i], n[i]) for a in spec.A[i])
        b_ok = all(np.shape(b) == (n[i], M) for b in spec.B[i])
        checks.append(Check(f"dims.A[{i}]", a_ok, "" if a_ok else f"expected {(n[i], n[i])}"))
        checks.append(Check(f"dims.B[{i}]", b_ok,
                            "" if b_ok else f"expected {(n[i], M)} = [B_1 ({n[i]}x{m[0]}) B_2 ({n[i]}x{m[1]})]"))
        checks.append(_shape_check(f"dims.Q[{i}]", spec.noise_cov[i], (n[i], n[i])))
        checks.append(_shape_check(f"dims.Sigma1[{i}]", spec.prior_cov[i], (n[i], n[i])))
        checks.append(_shape_check(f"dims.T[{i}]", spec.action_cost[i], (M, M)))
        checks.append(_shape_check(f"dims.S[{i}]", spec.cross_cost[i], (M, N)))
        checks.append(_shape_check(f"dims.P[{i}]", spec.state_cost[i], (N, N)))
        checks.append(_sym_check(f"symmetric.T[{i}]", spec.action_cost[i]))
        checks.append(_sym_check(f"symmetric.P[{i}]", spec.state_cost[i]))
        checks.append(_sym_check(f"symmetric.Q[{i}]", spec.noise_cov[i]))
        checks.append(_sym_check(f"symmetric.Sigma1[{i}]", spec.prior_cov[i]))
        checks.append(_psd_check(f"psd.Q[{i}]", spec.noise_cov[i]))
        checks.append(_psd_check(f"psd.Sigma1[{i}]", spec.prior_cov[i]))
        mu = np.asarray(spec.prior_mean[i]) if spec.prior_mean is not None else np.zeros(n[i])
        checks.append(Check(f"prior_mean[{i}]", mu.shape == (n[i],) and not np.any(mu),
                            "prior mean must be zero"))
    dims_ok = all(c.passed for c in checks if c.name.startswith(("dims", "stages")))
    for i in range(2):
        if dims_ok:
            lo = min_eig(spec.composite_cost(i))
            checks.append(Check(f"strict_pd.R[{i}]", lo > 0, f"min eigenvalue {lo:.6g}", lo))
        else:
            checks.append(Check(f"strict_pd.R[{i}]", False, "skipped: dimension errors"))
    return ValidationReport(checks)


def stage_cost(spec, i, x, u):
    """Instantaneous cost u'T u + x'P x + 2 u'S x of player ``i``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (spec.n_total,) or u.shape != (spec.m_total,):
        raise ValueError(f"expected x of length {spec.n_total} and u of length {spec.m_total}, "
                         f"got {x.shape} and {u.shape}")
    t, s, p = spec.action_cost[i], spec.cross_cost[i], spec.state_cost[i]
    return float(u @ t @ u + x @ p @ x + 2.0 * u @ s @ x)


def path_cost(spec, i, traj):
    """Sum of player ``i``'s stage costs along a complete trajectory."""
    T = spec.horizon
    if traj.u.shape[0] < T or traj.x.shape[0] < T:
        raise ValueError(f"trajectory covers {min(traj.u.shape[0], traj.x.shape[0])} "
                         f"of {T} stages")
    return float(sum(stage_cost(spec, i, traj.x[t], traj.u[t]) for t in range(T)))


# --- JSON game-spec documents ----------------------------------------------

def _matrix(obj, name):
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecFormatError(f"{name}: not a numeric matrix") from exc
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 0)
    if a.ndim != 2:
        raise SpecFormatError(f"{name}: expected a row-major nested array (2-D), got {a.ndim}-D")
    return a


def spec_from_dict(doc):
    """Parse a game-spec document (see README for the schema)."""
    try:
        horizon = doc["horizon"]
        players = doc["players"]
        dynamics = doc["dynamics"]
        noise = doc["noise"]
        prior = doc["prior"]
        costs = doc["costs"]
    except (KeyError, TypeError) as exc:
        raise SpecFormatError(f"missing field {exc}") from exc
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        raise SpecFormatError("horizon must be a positive integer")
    if not (len(players) == len(dynamics) == len(noise) == len(prior) == len(costs) == 2):
        raise SpecFormatError("players, dynamics, noise, prior and costs need two entries each")
    try:
        n = [int(p["n"]) for p in players]
        m = [int(p["m"]) for p in players]
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecFormatError("players entries need integer n and m") from exc
    A, B = [], []
    for i, d in enumerate(dynamics):
        if not isinstance(d, dict):
            raise SpecFormatError(f"dynamics[{i}] must be an object")
        if d.get("constant", "stages" not in d):
            A.append(_matrix(d["A"], f"dynamics[{i}].A"))
            B.append(_matrix(d["B"], f"dynamics[{i}].B"))
        else:
            stages = d["stages"]
            if len(stages) != horizon:
                raise SpecFormatError(f"dynamics[{i}].stages has {len(stages)} entries, horizon is {horizon}")
            A.append([_matrix(s["A"], f"dynamics[{i}].stages[{k}].A") for k, s in enumerate(stages)])
            B.append([_matrix(s["B"], f"dynamics[{i}].stages[{k}].B") for k, s in enumerate(stages)])
    prior_mean = doc.get("prior_mean")
    if prior_mean is not None:
        prior_mean = [np.asarray(mu, dtype=float) for mu in prior_mean]
    try:
        return GameSpec.build(
            horizon, n, m, A, B,
            [_matrix(q, f"noise[{i}]") for i, q in enumerate(noise)],
            [_matrix(s, f"prior[{i}]") for i, s in enumerate(prior)],
            [_matrix(c["T"], f"costs[{i}].T") for i, c in enumerate(costs)],
            [_matrix(c["S"], f"costs[{i}].S") for i, c in enumerate(costs)],
            [_matrix(c["P"], f"costs[{i}].P") for i, c in enumerate(costs)],
            prior_mean=prior_mean,
        )
    except KeyError as exc:
        raise SpecFormatError(f"missing field {exc}") from exc


def spec_to_dict(spec):
    def mat(a):
        return np.asarray(a).tolist()

    dynamics = []
    for i in range(2):
        if spec.constant_dynamics:
            dynamics.append({"constant": True, "A": mat(spec.A[i][0]), "B": mat(spec.B[i][0])})
        else:
            dynamics.append({"stages": [{"A": mat(a), "B": mat(b)} for a, b in zip(spec.A[i], spec.B[i])]})
    doc = {
        "horizon": spec.horizon,
        "players": [{"n": spec.n[i], "m": spec.m[i]} for i in range(2)],
        "dynamics": dynamics,
        "noise": [mat(q) for q in spec.noise_cov],
        "prior": [mat(s) for s in spec.prior_cov],
        "costs": [{"T": mat(spec.action_cost[i]), "S": mat(spec.cross_cost[i]),
                   "P": mat(spec.state_cost[i])} for i in range(2)],
    }
    if spec.prior_mean is not None and any(np.any(mu) for mu in spec.prior_mean):
        doc["prior_mean"] = [mat(mu) for mu in spec.prior_mean]
    return doc


def load_spec(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"{path}: invalid JSON ({exc})") from exc
    return spec_from_dict(doc)


def dump_spec(spec, path):
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


def spec_hash(spec):
    """SHA-256 of the canonical JSON encoding of ``spec``."""
    blob = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
