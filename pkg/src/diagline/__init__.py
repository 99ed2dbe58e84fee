"""Integral lines on diagonal hypersurfaces: exact counts and local densities."""

from .core import (
    BasePoint,
    BudgetError,
    DiagonalForm,
    InstanceError,
    LineSystem,
    T0_TABLE,
    build_line_system,
    flagship,
    line_identity_check,
    load_instance,
    parse_instance,
    relaxed_line_system,
    t0_bound,
    vanishing_subsum_scan,
    verify_base_point,
)
from .enumeration import (
    CountResult,
    count_lines,
    count_lines_mitm,
    count_lines_naive,
    count_translation_system,
    count_vinogradov,
    enumerate_solutions,
    fit_growth_exponent,
    verify_averaging_inequality,
)
from .localdensity import (
    ConsistencyError,
    DensityEstimate,
    HenselWitness,
    a_of_q,
    count_mod,
    hensel_witness,
    sigma_p_estimate,
    sigma_p_via_series,
    truncated_singular_series,
)
from .realdensity import (
    FitRejected,
    RealDensityConfig,
    cross_check_real_density,
    sigma_infinity_slab,
    slab_volume,
    truncated_singular_integral,
)
from .singularity import (
    InternalConsistencyError,
    classify_solution,
    is_nonsingular,
    jacobian,
)

__version__ = "0.1.0"
