"""Laplace-Beltrami eigenvalues by Rayleigh-Ritz in polyharmonic spline spaces.

Model manifolds (circle, flat tori, round 2-sphere) carry exact spectra, so
every computed quantity can be compared against the truth.
"""
from .diagnostics import (ScalingFit, approximation_rate, exponentiation_check, fit_scaling,
                          poincare_ratio, poincare_scaling)
from .errors import (ConditioningError, DegenerateSpectrumError, DomainError, MassMatrixError,
                     NotPositiveDefiniteError, NumericalError, ParameterError, PolyritzError,
                     PreconditionError)
from .linalg import cholesky, generalized_sym_eigen, sym_eigen
from .manifolds import (circle, enumerate_spectrum, eval_eigenfunction, flat_torus,
                        geodesic_distance, get_manifold, sphere2, weyl_count)
from .pointsets import AdmissibleSet, cardinality_estimate, generate, lattice_set, validate
from .ritz import (ConvergenceReport, RitzResult, assemble, convergence_study,
                   eigenfunction_reconstruction, ritz_eigenvalues)
from .splines import (SpectralVector, Spline, SplineSpace, build_space, green_kernel,
                      interpolate, interpolate_function, order_schedule, spline_to_spectral,
                      variational_residual)
from .zeta import ZetaEval, zeta_convergence_sweep, zeta_discrete, zeta_exact

__version__ = "0.1.0"
