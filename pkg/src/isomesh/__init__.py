"""Isometric unit meshes for Riemannian metric fields."""
from .metrics import make_field
from .mesh import build_uniform_grid, subdivide
from .objective import Objective, TargetSpec
from .optimizer import TerminationCriteria, continuation_run

__version__ = "0.1.0"
