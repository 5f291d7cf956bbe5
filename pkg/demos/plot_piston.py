"""
A discontinuous steady state: the piston
========================================

Two unit disks, {x1 = -1} and {x1 = 1}, are joined by the segment between
their centres. A single point has zero capacity for a surface, so the
segment does not force the disks to agree at their centres. Heating the
first disk with q(r) = 4 - 6r and cooling the second with -q gives
temperatures +7/30 and -7/30 at the two ends of a segment that stays at 0.
"""

import numpy as np

from multijunction import fem
from multijunction.oracles import radial_profile
from multijunction.scenarios import ScenarioConfig, exact_solution, solve_level

cfg = ScenarioConfig(geometry="piston")
print("exact centre value b =", radial_profile((4.0, -6.0)).b)

exact = exact_solution(cfg, cfg.source_term())
for level in range(1, 6):
    r = solve_level(cfg, level, with_poincare=False)
    ends = {p: v for jv in r.junction_values.values() for p, v in jv.items()}
    seg = np.abs(r.u[r.kd.dofs.patch_dofs(2)]).max()
    err = fem.l2_error(r.complex, r.kd.dofs, r.u, exact, patches={0})
    print(f"level {level}: u(S1 centre)={ends[0]:+.5f}  u(S2 centre)={ends[1]:+.5f}  "
          f"max|u| on segment={seg:.1e}  L2(S1) error={err:.2e}")

# Three kernel components: each disk and the segment float independently.
print("kernel dimension:", r.kernel_dim)
