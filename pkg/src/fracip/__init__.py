"""fracip: phase-field brittle/ductile fracture with interior-point constraint handling.

A 2D plane-strain finite-element solver for variational phase-field
fracture (AT-1/AT-2, optional gradient plasticity) in which the
irreversibility constraints are enforced exactly by primal-dual
interior-point methods, in both monolithic and staggered schemes.
History-field and augmented-Lagrangian damage updates are provided as
baselines for comparison.
"""

from fracip._kernels import kernel_backend

__all__ = ["kernel_backend", "__version__"]

__version__ = "0.1.0"
