"""Numerical toolkit for logarithmic solutions of singularly perturbed
q-difference-differential equations: theta kernels, q-Laplace / inverse
Fourier transforms, Borel-plane fixed points, sector geometry and q-Gevrey
asymptotics."""

__version__ = "0.1.0"
