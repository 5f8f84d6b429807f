"""Sparse precision estimation for brain networks with anatomical priors."""

__version__ = "0.1.0"
