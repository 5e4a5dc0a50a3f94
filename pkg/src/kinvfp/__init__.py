"""Weighted kinetic Fokker-Planck equations with incompressibility constraints.

Exact weight ladders, truncated analytic norms, explicit existence
certificates, a Picard driver around a linear phase-space solver, a
Feynman-Kac oracle and a particle simulator.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"
