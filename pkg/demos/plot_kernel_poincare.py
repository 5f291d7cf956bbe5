"""
Components, kernels and Poincare constants
==========================================

Which pieces of a structure are forced to share a temperature depends on
the dimension of the junctions. A point glues segments but not surfaces,
and a curve glues surfaces. Each component found this way contributes
one constant to the kernel and has its own Poincare constant C_l.
"""

from multijunction.kernel import kernel_decomposition, poincare_constant
from multijunction.mesh import builtin_geometry, with_coupling

for name in ("y_graph", "antenna", "two_disks_point", "piston", "two_disks"):
    kd = kernel_decomposition(builtin_geometry(name, 2))
    print(f"{name:16s} d={kd.d}  components={kd.components}")

# On the unit segment the constant approaches 1/pi^2.
seg = poincare_constant(builtin_geometry("segment", 1), None, 0, 6)
print(seg.to_csv())

# Forcing the point contact between two disks to transmit continuity gives
# a single component, but its Poincare constant keeps growing under refinement.
forced = with_coupling(builtin_geometry("two_disks_point", 1), 0, "coupled")
print(poincare_constant(forced, None, 0, 5).to_csv())
