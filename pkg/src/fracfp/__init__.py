"""Numerics for nonlinear fractional Fokker-Planck equations and their particle systems.

Modules
-------
spectral      periodic grids, transforms and Fourier multipliers
coefficients  coefficient catalog, hypothesis checks and regularizations
resolvent     preconditioned solver for the implicit Euler resolvent
evolution     implicit Euler paths, exact linear flow and weak residuals
kernel        stable subordinator densities and resolvent kernels
gauge         gauge functional between two solution paths
particles     stable-driven particle system and density estimation
config/runner/cli/acceptance   run harness
"""

__version__ = "0.1.0"
