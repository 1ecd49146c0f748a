"""Multi-peak solutions of the planar gauged Schrodinger system.

The package constructs approximate multi-peak solutions of the static
Chern-Simons-Schrodinger system: it solves the radial ground-state profile,
computes the gauge fields slaved to the matter field by singular-kernel
convolutions, evaluates the reduced energy functional with its first and
second variations, performs the constraint-space correction, and maximizes
the reduced energy over peak configurations to exhibit concentration at
the potential's maximum point.
"""

from .energy import (
    EnergyBreakdown,
    Potential,
    ProblemSpec,
    decomposition_residual,
    evaluate_I,
    expansion_prediction,
    first_variation,
    fit_interaction_constant,
    inner_product_eps,
    norm_eps,
    physical_l2,
    second_variation_apply,
)
from .errors import InfeasibleError, SolverError
from .gauge import GaugeFields, chern_simons_identity, compute_gauge, gauge_residuals
from .grid import (
    Field2D,
    Grid2D,
    KernelId,
    TruncationWarning,
    convolve_free_space,
    field_from_function,
    gradient,
    integrate,
    load_field,
    save_field,
)
from .ground_state import (
    AsymptoticsReport,
    RadialProfile,
    SpectrumReport,
    check_decay_asymptotics,
    load_profile,
    nondegeneracy_spectrum,
    ode_residual,
    save_profile,
    solve_ground_state,
)
from .landscape import (
    LandscapeRun,
    SearchConfig,
    SweepReport,
    concentration_sweep,
    maximize_F,
    positivity_check,
    reduced_energy,
)
from .potentials import (
    anisotropic_bump_potential,
    constant_potential,
    radial_bump_potential,
)
from .reduction import (
    PeakConfiguration,
    ReductionResult,
    build_ansatz,
    project_E,
    solve_L_on_E,
    solve_correction,
    tangent_basis,
)

__version__ = "0.1.0"
