"""Worst-case quadrature errors and Schur-technique lower bounds on periodic RKHS."""
__version__ = "0.1.0"
