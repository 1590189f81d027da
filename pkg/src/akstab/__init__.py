"""Extremal almost-Kaehler metrics on the flat 4-torus.

Modules: ``grid`` (spectral grid), ``forms`` (exterior calculus),
``structures`` (almost-Kaehler structures and paths), ``curvature``
(hermitian Ricci form and scalar curvature), ``elliptic`` (the operator P,
its kernel and Green operator), ``deformation`` (the state generated by a
potential) and ``solver`` (Newton-Krylov continuation).
"""
__version__ = "0.1.0"
