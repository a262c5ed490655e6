"""Numerical laboratory for holomorphic families of endomorphisms of P^k.

Modules: proj_geom (projective points, charts, chordal metric), family
(parametrized maps and their Jacobians), cycles (periodic points),
measures (equilibrium-measure approximants), stability (Lyapunov sum and
its harmonicity), motion (cycle continuation and finite webs), branches
(backward orbits and inverse-branch contraction), cli.
"""
__version__ = "0.1.0"
