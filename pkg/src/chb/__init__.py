"""Cahn-Hilliard system with dynamic boundary condition of
Cahn-Hilliard type on the unit disk: Yosida-regularized potentials,
conservative polar finite volumes, dual norms, a coupled implicit
solver, and an experiment harness for the vanishing-surface-diffusion
limit."""

from . import chd_solver, disk_grid, dual_norms, harness, monotone_graphs
from .errors import ChbError

__version__ = '0.1.0'

__all__ = ('chd_solver', 'disk_grid', 'dual_norms', 'harness',
           'monotone_graphs', 'ChbError', '__version__')
