"""Spectral solver and experiment harness for coupled nonlinear Hartree systems.

Computes mass-constrained ground states of m-coupled systems with the
attractive kernel |x|^(-alpha) on a periodic box, propagates the associated
time-dependent system, and verifies the variational structure numerically:
negativity of the constrained infimum, strict subadditivity in the masses,
positivity of the Lagrange multipliers, phase factorisation of complex
minimisers, and orbital stability of the minimiser set.
"""

__version__ = "0.1.0"

from .params import (
    DerivedExponents,
    InvalidParameterError,
    SystemParams,
    ValidationClause,
    ValidationReport,
    derive_exponents,
    validate_assumptions,
)
from .grid import (
    Field,
    Grid,
    MultiField,
    SizeMismatchError,
    dilate,
    grad_norm_sq,
    grid_for,
    h1_norm_sq,
    inner,
    inverse_transform,
    lp_norm,
    mass,
    multifield_masses,
    read_snapshot,
    transform,
    write_snapshot,
)
from .hartree import (
    EnergyBreakdown,
    Kernel,
    SingularKernelError,
    build_kernel,
    convolve_density,
    el_residual,
    energy_gradient,
    pair_interaction,
    single_energy,
    total_energy,
)
from .minimize import (
    GroundState,
    PhaseFactorization,
    ZeroMassError,
    extract_multipliers,
    gaussian_init,
    ground_state,
    phase_factorize,
    project_masses,
    save_ground_state,
    single_component_ground,
)
from .evolve import (
    EvolutionTrace,
    NanAbortError,
    evolve,
    orbit_distance,
    step,
    write_trace_csv,
)
from .analysis import (
    BoxOverflowError,
    ConcentrationProfile,
    NoNegativeEnergyError,
    ScanResult,
    StabilityReport,
    SubadditivityRecord,
    concentration_profile,
    cross_term_check,
    default_cases_m3,
    default_mass_pairs_m2,
    infimum_value,
    omega_constant,
    scaling_negativity_test,
    stability_experiment,
    strict_scaling_check,
    subadditivity_scan,
)
from .cli import ConfigError, RunConfig, load_config, run
