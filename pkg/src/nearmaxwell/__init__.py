"""Boltzmann dynamics near finite-mass global Maxwellians.

Library layout:

- ``maxwellian``  -- the global-Maxwellian family, hydro fields, moments, H
- ``kernels``     -- cutoff collision kernels, post-collision map, a_beta
- ``grids``       -- phase-space grids, relative-density fields, transport
- ``collision``   -- gain/loss quadrature, weak form, entropy production
- ``bounds``      -- dispersion constants mu, nu and contraction certificates
- ``solver``      -- Picard fixed point for the mild Cauchy problem
- ``scattering``  -- asymptotic states, wave operators, scattering operator
- ``cli``         -- config-driven experiment runner
"""

__version__ = "0.1.0"

from . import bounds, cli, collision, grids, kernels, maxwellian, scattering, solver

__all__ = [
    "maxwellian", "kernels", "grids", "collision", "bounds",
    "solver", "scattering", "cli", "__version__",
]
