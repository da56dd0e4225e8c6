"""Constrained Gaussian unitary ensembles: sampling, spectral statistics,
the constraining function and the large-N level density."""

from ._version import __version__
from .basis import (BasisSet, ConstraintSet, DegeneracyProfile, TracelessReduction,
                    band_complement_constraints, band_indices, combination, conjugate_constraints,
                    critical_count, degeneracy_profile, diagonal_p_constraints,
                    explicit_constraints, projectors, random_traceless_constraints,
                    standard_basis, traceless_reduce)
from .constraining import (AngularMomentTable, FPValue, angular_moments, expansion_discrepancy,
                           fp_determinant, fp_haar_mc, fp_ratio, haar_integral_exact,
                           haar_integral_mc, log_haar_integral_expansion, reference_spectrum,
                           tilde_regularize)
from .density import (DensityModel, EffectiveField, effective_field, empirical_l1,
                      iterate_density, residual, semicircle, solve_density)
from .ensembles import (EnsembleSpec, SpectrumSample, egue_counts, generate, haar_unitary,
                        sample_matrix, sample_spectrum)
from .errors import (AmbiguityError, CapacityError, CGUEError, DivergenceError,
                     InfeasibleError, InvalidArgumentError, NumericFailure, SingularityError)
from .hermitian import (EigenDecomposition, HermitianMatrix, center, eigendecompose,
                        eigenvalues, expand, from_coefficients, read_matrix, reconstruct,
                        to_coefficients, trace_inner_product, write_matrix)
from .stats import (POISSON_RATIO_MEAN, FluctuationReport, classify, compare, delta3, fluctuation_report,
                    gue_reference, nnsd, number_variance, spacing_ratios, unfold)
