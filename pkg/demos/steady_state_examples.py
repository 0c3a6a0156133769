"""Stationary equilibria of the two shipped example games.

Example 1 is symmetric and reached from the default seed. Example 2 has a
full-revelation player 1 and a rank-one player 2; that fixed point needs a
full-rank seed, because the default seed has identical rows and the
iteration keeps them identical.
"""

import time
from importlib import resources
from pathlib import Path

import numpy as np

from lqg_signaling import build_equilibrium_path, existence_check, load_spec, solve_steady_state
from lqg_signaling.existence import normalized_gain
from lqg_signaling.steady_state import default_init

FIXTURES = Path(str(resources.files("lqg_signaling") / "fixtures"))
np.set_printoptions(precision=4, suppress=True)


def show(title, spec, sol):
    print(f"== {title}: {sol.iterations} sweeps, residuals "
          + ", ".join(f"{k} {v:.1e}" for k, v in sol.residuals.items()))
    for i, rev in enumerate(sol.revelation(spec)):
        print(f"player {i + 1}: rank {rev['rank']}, singular values {np.round(rev['singular_values'], 4)}")
        print("  L =", sol.L[i].tolist())
        print("  Sigma =", sol.sigma[i].tolist())


ex1 = load_spec(FIXTURES / "example1.json")
start = time.perf_counter()
ss1 = solve_steady_state(ex1)
show(f"example 1 ({time.perf_counter() - start:.2f} s)", ex1, ss1)
norm = [normalized_gain(ss1.L[i], ss1.sigma[i]) for i in range(2)]
rep = existence_check(ex1, ss1.sigma, ss1.V, tuple(d for _, d in norm))
print("existence at the converged direction: l'Delta l =", [round(q, 4) for q in rep.quad_form],
      "roots", [np.round(r, 5).tolist() for r in rep.roots], "vs |L Sigma^1/2|", [round(l, 5) for l, _ in norm])

path = build_equilibrium_path(ex1)
print("finite horizon T = 30, player 1 gain by stage:")
for t in (1, 10, 20, 25, 28, 29, 30):
    print(f"  t = {t:2d}: {path.stage(t).L[0].ravel()}")

ex2 = load_spec(FIXTURES / "example2.json")
_, S0, V0 = default_init(ex2)
show("example 2, seed -I", ex2, solve_steady_state(ex2, init=((-np.eye(2), -np.eye(2)), S0, V0)))
show("example 2, default seed", ex2, solve_steady_state(ex2))
