"""Numerical laboratory for elliptic Green's functions with rough drift.

Subpackages: lorentz (rearrangement and Lorentz seminorms), radial (the
logarithmic-drift counterexample family), mesh (masked uniform grids),
elliptic (drift-diffusion assembly and solves), green (approximate Green
columns and bound constants), principles (ladder experiments for maximum
principles and boundedness), service/cli (HTTP API and its client).
"""

from .lorentz import (
    DivergentNorm,
    LorentzIndex,
    StepFunction,
    WeightedSamples,
    decreasing_rearrangement,
    distribution_function,
    hardy_pairing,
    lorentz_norm,
    lorentz_norm_radial,
    pseudo_rearrangement,
    unit_ball_volume,
)
from .radial import (
    BALL_RADIUS,
    BlowupFit,
    RadialProfile,
    RadialSolution,
    blowup_rate,
    counterexample_drift,
    counterexample_divergence,
    drift_membership,
    G_delta_eps,
    radial_residual,
    tabulate_solution,
    u_delta_eps,
)
from .mesh import Domain, GridField, GridVectorField, integrate, mollify, sample_scalar, sample_vector
from .elliptic import (
    LinearSystem,
    OperatorData,
    SolveReport,
    adjoint,
    assemble,
    check_divergence_condition,
    solve_dirichlet,
    solve_system,
)
from .green import (
    BoundReport,
    GreenColumn,
    annulus_energy,
    approximate_green,
    pointwise_constant,
    represent_solution,
    scaled_problem,
    symmetry_defect,
    talenti_check,
    weak_norm_report,
)
from .principles import (
    ConstantTrace,
    ExperimentSpec,
    global_bound_constant,
    inhomogeneous_max_principle,
    moser_constant,
    sup_by_integral,
)

__version__ = "0.1.0"
