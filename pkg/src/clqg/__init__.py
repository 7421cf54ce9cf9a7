"""Numerical companion for the critical lattice chaos measure of the planar DGFF.

Modules: ``gauge`` (gauge functions), ``lattice`` (domains and annulus
frames), ``gff`` (Green functions and field samplers), ``chaos`` (the lattice
measure), ``concentric`` (spine walk and control variables), ``bessel``
(Bessel-3 and bridge checks), ``hausdorff`` (covers and density tests) and
``harness`` (seeded experiments and the ``clqg`` command).
"""

__version__ = "0.1.0"
