"""Numerical laboratory for dyadic Bekolle-Bonami weights on the unit disc.

Finite-depth dyadic trees over shifted grids carry piecewise-constant
weights; the subpackages measure weight constants, factor and extend
weights with bounded hyperbolic oscillation, average extensions over grid
offsets, and probe Bloch-type martingale traces.
"""

__version__ = "0.1.0"
