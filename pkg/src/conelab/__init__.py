"""Desk-scale laboratory for conic Kahler geometry.

Subpackage map
--------------
problem_data  cone-angle bookkeeping, properness margins, admissibility
cxpoly        polynomial jets in (z, zbar) used by local-model builders
geometry      periodic/radial model backgrounds and quadrature
conic_tensors conic reference metrics and their derivative jets
curvature     curvature tensor assembly, inverse expansions, scans
ma_solver     regularized continuity-path Newton solver
functionals   energy functionals and their identities
diagnostics   convergence tables, sweep summaries, report writers
cli           command-line entry points
"""

__version__ = "0.1.0"
