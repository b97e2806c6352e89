"""Explicit high-order generalized-alpha time stepping for isogeometric wave problems."""

from .assembly import SemiDiscreteSystem, SeparableField
from .geometry import Domain, MultiPatchSpace, get_domain
from .integrator import (CFLError, InstabilityError, MassSolver, MatrixSystem, cfl_timestep, init_state,
                         integrate, max_generalized_eigenvalue, step)
from .manufactured import get_problem
from .params import GenAlphaParams, compute_params
from .precond import mass_preconditioner
from .spectral import build_G, find_bifurcation, find_stability, spectrum

__all__ = [
    "SemiDiscreteSystem", "SeparableField", "Domain", "MultiPatchSpace", "get_domain", "CFLError",
    "InstabilityError", "MassSolver", "MatrixSystem", "cfl_timestep", "init_state", "integrate",
    "max_generalized_eigenvalue", "step", "get_problem", "GenAlphaParams", "compute_params",
    "mass_preconditioner", "build_G", "find_bifurcation", "find_stability", "spectrum",
]
