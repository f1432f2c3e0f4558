"""Prestrained von Karman plates and shallow shells on uniform grids.

Field containers and stencil calculus (fields), growth tensors and their
scalar sources (growth), the limiting plate functionals with exact
discrete gradients (energy), minimization and the von Karman solvers
(solver), the 3d shell energy with recovery sequences and the thickness
scaling study (shell3d), and a reproducible experiment driver (cli).
"""

__version__ = "0.1.0"
