"""Finite-difference laboratory for the linear Fokker-Planck SPDE
du = (f(t) div(x u) + g(t)^2/2 lap u) dt + B(t) dW on the weighted space
L^2(R^d; exp(|x|^2 / 2c))."""

__version__ = "0.1.0"
