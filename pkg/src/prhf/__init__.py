"""Pseudo-relativistic Hartree and Hartree-Fock dynamics on a periodic grid.

The subpackages follow the data flow of a run: :mod:`prhf.grid` (FFTs and
Fourier multipliers), :mod:`prhf.operators` (kinetic operator, Coulomb
convolution, energies), :mod:`prhf.initdata`, :mod:`prhf.dynamics`,
:mod:`prhf.diagnostics`, :mod:`prhf.variational` and :mod:`prhf.cli`.
"""

__version__ = "0.1.0"

from .grid import Grid, make_grid  # noqa: E402
from .operators import OrbitalSet  # noqa: E402
from .dynamics import SimState, evolve, step_rk4, step_strang  # noqa: E402

__all__ = ["Grid", "make_grid", "OrbitalSet", "SimState", "evolve", "step_strang", "step_rk4", "__version__"]
