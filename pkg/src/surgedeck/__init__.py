"""Animated 3D flood surfaces from storm-surge simulations.

Reconstructs time-varying water surfaces from scattered simulation output
on an adaptive quadtree height-field, synthesizes Gerstner wave detail,
meshes the result for display walls, and plans camera viewpoints and
navigation paths around points of interest.
"""

__version__ = "0.1.0"
