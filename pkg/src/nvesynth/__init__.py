"""Simulation and pulse-sequence synthesis for a qubit driving two collective spin-ensemble modes."""

__version__ = "0.1.0"
