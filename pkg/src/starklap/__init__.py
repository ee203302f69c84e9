"""Resolvent, radiation-condition and commutator checks for perturbed Stark Hamiltonians
H = p^2/2 - x + q on truncated grids.

Modules: ``geometry`` (escape function f and cutoffs), ``potential``,
``operators`` (grids and sparse stencils), ``solver``, ``besov`` (shell norms),
``phase``, ``verify`` (operator identities), ``experiments`` (sweeps) and
``cli``/``io``.
"""

__version__ = "0.1.0"
