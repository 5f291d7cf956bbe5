"""
Relaxing a conductivity tensor onto a surface
=============================================

Only tangential gradients exist on a lower-dimensional patch, so the
ambient tensor A must be reduced to the tangent space. Two reductions are
available. The projected one, P A P, keeps the tangential block. The Schur
one minimises over normal components and subtracts the coupling through
the normal block. They agree when A does not mix tangent and normal
directions.
"""

import numpy as np

from multijunction.mesh import TangentFrame
from multijunction.oracles import tilted_conductivity
from multijunction.tensors import relax_projected, relax_schur

# x1-axis in the plane, with A = [[2, 1], [1, 2]]
frame = TangentFrame(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
A = np.array([[2.0, 1.0], [1.0, 2.0]])
print("projected:", relax_projected(A, frame)[0, 0], " schur:", relax_schur(A, frame)[0, 0])

# The tilted tensor A = e2 e2 + 1/2 (e1 + e3)(e1 + e3) on the plane {x3 = const}
e1, e2, e3 = np.eye(3)
plane = TangentFrame(np.column_stack([e1, e2]), e3[:, None])
A = tilted_conductivity()
np.set_printoptions(precision=3, suppress=True)
print("projected\n", relax_projected(A, plane))
print("schur\n", relax_schur(A, plane))
