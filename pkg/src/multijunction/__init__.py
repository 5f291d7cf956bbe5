"""Finite elements for the Neumann heat conduction problem on multijunction structures."""
from .fem import (DiscreteField, SolveReport, SourceTerm, assemble_load, assemble_mass,
                  assemble_stiffness, check_compatibility, energy, solve, tangential_gradient)
from .kernel import (KernelDecomposition, coupling_graph, kernel_decomposition,
                     poincare_constant, project_kernel)
from .mesh import (MultijunctionComplex, builtin_geometry, load_complex, refine,
                   tangent_frame)
from .tensors import (ConductivitySpec, RelaxedTensorField, relax_field, relax_projected,
                      relax_schur, tangential_projector)

__version__ = "0.1.0"
