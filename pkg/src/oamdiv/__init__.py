"""Laguerre-Gaussian beam divergence: closed forms and FFT propagation checks."""
