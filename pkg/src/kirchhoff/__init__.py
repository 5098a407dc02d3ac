"""Radial ground states of Kirchhoff-type equations via the Nehari-Pohozaev manifold."""

__version__ = "0.1.0"
