"""Numerical toolkit for desk-scale verification of the explicit formulas
in the passage from ALE to ALF hyperkahler geometry on C^2: the Taub-NUT
family in LeBrun coordinates, the SO(3) normalization of the deformation
parameter, the radial corrector diffeomorphism, the first-order ALE
asymptotic tensors, and the ALF gluing potential, together with the
finite-difference engine that turns each identity and decay rate into an
executable check."""

__version__ = "0.1.0"

from . import (ale_asymptotics, beth_correction, cli, errors, euclidean_base,
               gluing, so3_normalization, taub_nut, tensor_calculus)

__all__ = [
    "__version__", "ale_asymptotics", "beth_correction", "cli", "errors",
    "euclidean_base", "gluing", "so3_normalization", "taub_nut",
    "tensor_calculus",
]
