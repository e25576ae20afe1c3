"""Real solutions of point distance constraint systems.

The solver tracks a parameter homotopy in the reduced space of a
reparameterized construction plan, rewriting the plan on the fly whenever
the figure approaches a tangency.  A full-coordinate tracker is provided as
a baseline.
"""

from .cplan import Instruction, Rcp, derive_rcp_greedy, evaluate, identify_branch, phi_prime
from .homotopy import FullHomotopy, Interpolation, ReducedHomotopy, make_interpolation
from .model import Constraint, Pdsp, fix_reference, measure_params
from .tracker import SolveResult, TrackerConfig, solve, track_full_space

__all__ = [
    "Constraint", "FullHomotopy", "Instruction", "Interpolation", "Pdsp", "Rcp", "ReducedHomotopy",
    "SolveResult", "TrackerConfig", "derive_rcp_greedy", "evaluate", "fix_reference", "identify_branch",
    "make_interpolation", "measure_params", "phi_prime", "solve", "track_full_space",
]
