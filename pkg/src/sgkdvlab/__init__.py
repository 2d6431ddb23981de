"""Desk-scale numerical laboratory for the stochastic generalized KdV equation.

Subpackages:
    spectral    periodic grids, the dispersive linear group, Sobolev/mixed norms
    oscillatory certified dispersive oscillatory integrals and decay-law fits
    noise       Brownian paths, stochastic convolution and its tail
    solver      pseudospectral gKdV time stepping, mass/energy diagnostics
    estimates   admissibility arithmetic, norm-inequality probes, ensembles
    scattering  pullback diagnostics and the forced-difference equation
    cli         manifest-driven command line front end
"""

__version__ = "0.1.0"
