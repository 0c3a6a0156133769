"""Monte-Carlo verification of the shipped T = 3 scalar game.

Runs the linear-affine deviation suite against the solved path and against
a corrupted copy (player 1's gain zeroed), then the value-consistency check.
"""

import json
from importlib import resources
from pathlib import Path

from lqg_signaling import (
    EquilibriumPath, SimulationConfig, build_equilibrium_path, deviation_suite, load_spec,
    value_consistency_test,
)

FIXTURES = Path(str(resources.files("lqg_signaling") / "fixtures"))
spec = load_spec(FIXTURES / "scalar_t3.json")
path = build_equilibrium_path(spec)
bad = EquilibriumPath.from_dict(json.loads((FIXTURES / "scalar_t3_corrupted_path.json").read_text())["path"])
cfg = SimulationConfig(n_traj=100_000, seed=0)

for name, p in (("solved path", path), ("corrupted path", bad)):
    rep = deviation_suite(spec, p, cfg, count=20, epsilon=0.1)
    worst = min(rep["results"], key=lambda r: r["delta_cost"] / max(r["se"], 1e-300))
    print(f"{name}: {len(rep['results']) - rep['n_failed']}/{len(rep['results'])} deviations pass; "
          f"worst delta {worst['delta_cost']:+.4f} (SE {worst['se']:.4f}, player {worst['deviation']['player']})")
    vc = value_consistency_test(spec, p, cfg)
    for pl in vc["players"]:
        est = pl["estimate"]
        print(f"  player {pl['player']}: simulated cost {est['mean']:.4f} +- {est['se']:.4f}, "
              f"value prediction {pl['target']:.4f}, consistent {pl['passed']}")
