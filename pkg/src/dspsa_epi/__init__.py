"""Discrete SPSA optimisation of epidemic intervention plans."""
