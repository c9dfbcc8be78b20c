"""Weak-valued momentum-transfer toolkit for which-way twin-slit measurements.

Modules
-------
numerics       grids, quadrature, oscillatory tail integrals, Fourier
               transforms with exact handling of non-decaying parts
physics        twin-slit states, measurement-function sets, momentum
               distributions, visibility, disturbance bound
transfer       the transfer distribution by product-formula and
               characteristic-function routes, closed catalog forms
analysis       apodized moments (sample and characteristic routes) and
               width measures (support, n-norm, confidence interval)
formalisms     first three transfer moments under five formalisms
weaksim        Monte-Carlo weak measurements with post-selection and the
               end-to-end protocol reconstruction
cli            reproducible scenario runner (see ``wvtransfer --help``)
"""

__version__ = "0.1.0"

from .distributions import DiracAtom, MixedDistribution, atoms_only
from .numerics import GridSpec, SampledComplexFunction, TailModel
from .physics import (MeasurementBranch, MeasurementSet, SlitSpec,
                      Wavefunction, build_state, heaviside_set, identity_set,
                      kick_set, min_disturbance_bound, momentum_distribution,
                      final_momentum_distribution, visibility)
from .transfer import (CharFunction, char_function, closed_form_pwv,
                       compute_pwv, narrow_pipeline_pwv, pwv_from_char,
                       weak_joint_probability)
from .analysis import (ApodizationSpec, MomentResult, WidthReport,
                       apodized_moment, char_apodized_moment,
                       confidence_halfwidth, n_norm, support_halfwidth,
                       verify_support_bound, width_report)
from .formalisms import (DeltaSlitEnsemble, MomentTable, compare_report,
                         moments_bohm_local, moments_deltaP,
                         moments_heisenberg, moments_wigner_local, moments_wv)
from .weaksim import (FiniteSystem, MeterSpec, ReconstructionResult,
                      reconstruct_pwv, simulate_postselected_mean,
                      strong_value, weak_value)

__all__ = [name for name in dir() if not name.startswith("_")]
