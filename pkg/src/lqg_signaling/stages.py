"""Stacked vectors and the per-stage matrices of the backward recursion.

For player ``i`` the recursion works with three stacked vectors

    e^i = [x^i; xhat^1; xhat^2]
    z^i = [u^i; x^i; xhat^1; xhat^2]
    y^i = [u^1; u^2; x^1; x^2; x_{t+1}^i; xhat_{t+1}^1; xhat_{t+1}^2]

and writes everything player ``i`` cares about at stage ``t`` as

    y^i = D^i z^i + C^i [m^1; m^2] + J^i (x^{-i} - xhat^{-i})      (+ noise)

given the opponent's strategy ``u^{-i} = L^{-i} x^{-i} + m^{-i}`` and the
belief-update gains. The cost-to-go is then ``quad(Vbar^i; y^i)``.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._linalg import block_slices, sym

__all__ = ["StackedLayout", "StageMatrices", "assemble_vbar", "assemble_dcj"]


@dataclass(frozen=True)
class StackedLayout:
    """Index maps of the stacked vectors for one player."""

    n: tuple
    m: tuple
    player: int

    @classmethod
    def of(cls, spec, i):
        return cls(spec.n, spec.m, i)

    @property
    def e_sizes(self):
        n, i = self.n, self.player
        return (n[i], n[0], n[1])

    @property
    def z_sizes(self):
        return (self.m[self.player],) + self.e_sizes

    @property
    def y_sizes(self):
        n, m, i = self.n, self.m, self.player
        return (m[0], m[1], n[0], n[1], n[i], n[0], n[1])

    @property
    def e_len(self):
        return sum(self.e_sizes)

    @property
    def z_len(self):
        return sum(self.z_sizes)

    @property
    def y_len(self):
        return sum(self.y_sizes)

    # e blocks: own type, xhat^1, xhat^2
    @property
    def e(self):
        return block_slices(self.e_sizes)

    # z blocks: own action, own type, xhat^1, xhat^2
    @property
    def z(self):
        return block_slices(self.z_sizes)

    @property
    def y(self):
        """Named slices of the y-stack."""
        s = block_slices(self.y_sizes)
        return {"u": (s[0], s[1]), "x": (s[2], s[3]), "x_next": s[4], "xhat_next": (s[5], s[6])}

    def e_own_mean(self):
        """Index (0..2) of the e-block holding the player's own belief mean."""
        return 1 + self.player


@dataclass(frozen=True)
class StageMatrices:
    """D, C, J of one player at one stage, plus the gains used to build them."""

    player: int
    layout: StackedLayout
    D: np.ndarray
    C: np.ndarray
    J: np.ndarray
    L: tuple
    G: tuple
    vbar: np.ndarray = None

    @property
    def Du(self):
        return self.D[:, self.layout.z[0]]

    @property
    def De(self):
        return self.D[:, self.layout.z[0].stop:]

    @property
    def De1(self):
        """Columns of D acting on the player's own type."""
        return self.D[:, self.layout.z[1]]

    @property
    def De23(self):
        """Columns of D acting on the two belief means."""
        z = self.layout.z
        return self.D[:, z[2].start:z[3].stop]

    def with_vbar(self, vbar):
        return replace(self, vbar=vbar)


def assemble_vbar(spec, i, V_next):
    """Block matrix ``[[T, S, 0], [S', P, 0], [0, 0, V_next]]`` over the y-stack."""
    lay = StackedLayout.of(spec, i)
    V_next = np.asarray(V_next, dtype=float)
    if V_next.shape != (lay.e_len, lay.e_len):
        raise ValueError(f"continuation value must be {lay.e_len}x{lay.e_len}, got {V_next.shape}")
    R = spec.composite_cost(i)
    k = R.shape[0]
    out = np.zeros((lay.y_len, lay.y_len))
    out[:k, :k] = R
    out[k:, k:] = V_next
    return sym(out)


def _player_dcj(spec, t, i, L, G):
    j = 1 - i
    lay = StackedLayout.of(spec, i)
    n, m = spec.n, spec.m
    yu, yx = lay.y["u"], lay.y["x"]
    yxn, yh = lay.y["x_next"], lay.y["xhat_next"]
    zu, zx, zh = lay.z[0], lay.z[1], (lay.z[2], lay.z[3])
    cm = block_slices(m)
    A = (spec.A_at(0, t), spec.A_at(1, t))
    # Bs[k][p]: columns of B^k acting on u^p
    Bs = (spec.B_split(0, t), spec.B_split(1, t))
    Ii, Ij = np.eye(n[i]), np.eye(n[j])

    D = np.zeros((lay.y_len, lay.z_len))
    C = np.zeros((lay.y_len, spec.m_total))
    J = np.zeros((lay.y_len, n[j]))

    # current actions
    D[yu[i], zu] = np.eye(m[i])
    D[yu[j], zh[j]] = L[j]
    C[yu[j], cm[j]] = np.eye(m[j])
    J[yu[j]] = L[j]
    # current types; the opponent's enters through its mean plus the J term
    D[yx[i], zx] = Ii
    D[yx[j], zh[j]] = Ij
    J[yx[j]] = Ij
    # own next type
    D[yxn, zu] = Bs[i][i]
    D[yxn, zx] = A[i]
    D[yxn, zh[j]] = Bs[i][j] @ L[j]
    C[yxn, cm[j]] = Bs[i][j]
    J[yxn] = Bs[i][j] @ L[j]
    # own next belief mean
    D[yh[i], zu] = A[i] @ G[i] + Bs[i][i]
    D[yh[i], zh[i]] = A[i] @ (Ii - G[i] @ L[i])
    D[yh[i], zh[j]] = Bs[i][j] @ L[j]
    C[yh[i], cm[i]] = -A[i] @ G[i]
    C[yh[i], cm[j]] = Bs[i][j]
    J[yh[i]] = Bs[i][j] @ L[j]
    # opponent's next belief mean
    D[yh[j], zu] = Bs[j][i]
    D[yh[j], zh[j]] = A[j] + Bs[j][j] @ L[j]
    C[yh[j], cm[j]] = Bs[j][j]
    J[yh[j]] = (Bs[j][j] + A[j] @ G[j]) @ L[j]
    return StageMatrices(i, lay, D, C, J, tuple(L), tuple(G))


def assemble_dcj(spec, t, L, G):
    """Stage matrices of both players for strategy gains ``L`` and belief gains ``G``."""
    L = tuple(np.atleast_2d(np.asarray(l, dtype=float)) for l in L)
    G = tuple(np.atleast_2d(np.asarray(g, dtype=float)) for g in G)
    for k in range(2):
        if L[k].shape != (spec.m[k], spec.n[k]) or G[k].shape != (spec.n[k], spec.m[k]):
            raise ValueError(f"player {k}: gain {L[k].shape} / belief gain {G[k].shape} "
                             f"do not match m={spec.m[k]}, n={spec.n[k]}")
    return tuple(_player_dcj(spec, t, i, L, G) for i in range(2))
