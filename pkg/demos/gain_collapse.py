"""A random game whose stage gain equation has no signaling solution.

The damped iteration drives player gains towards zero while the belief
gain G = Sigma L'(L Sigma L')^+ blows up; the solver stops and reports
the stage and the last iterate instead of returning a meaningless gain.
"""

import numpy as np

from lqg_signaling import GameSpec, NonConvergence, build_equilibrium_path

rng = np.random.default_rng(21)
n, m = (1, 1), (1, 1)
A = [0.8 * rng.standard_normal((1, 1)) for _ in n]
B = [0.5 * rng.standard_normal((1, 2)) for _ in n]
Q, S1 = [], []
for _ in n:
    a, b = rng.standard_normal((1, 1)), rng.standard_normal((1, 1))
    Q.append(a @ a.T + 0.2 * np.eye(1))
    S1.append(b @ b.T + 0.2 * np.eye(1))
T, S, P = [], [], []
for _ in range(2):
    r = rng.standard_normal((4, 4))
    R = r @ r.T / 4 + 0.3 * np.eye(4)
    T.append(R[:2, :2])
    S.append(R[:2, 2:])
    P.append(R[2:, 2:])
spec = GameSpec.build(3, n, m, A, B, Q, S1, T, S, P)

try:
    build_equilibrium_path(spec)
except NonConvergence as exc:
    print("solver:", exc)
    print("last iterate:", [np.asarray(l).ravel() for l in exc.best])
