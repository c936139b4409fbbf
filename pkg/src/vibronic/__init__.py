"""Detuned nonlinear Jaynes-Cummings dynamics of a trapped ion.

Analytic motional-state evolution under a quantized pump, nonclassicality
certification via squeezing, sub-Poisson, and anomalous-correlation criteria,
regularized phase-space maps, and a simulation of the displaced probe-cycle
measurement protocol that recovers those quantities from observable data.
"""

__version__ = "0.1.0"

from .criteria import (
    CriteriaResult,
    anomalous_cross,
    c_ac,
    c_sq,
    criteria_from_moments,
    criteria_scan,
    mandel_q,
    squeezing_functional,
)
from .dynamics import (
    CavityWindow,
    EigenBranch,
    ModelParams,
    MotionalEvolution,
    cavity_window,
    eigen_branch,
    f_k_diag,
    rabi,
    reduced_rho,
)
from .errors import (
    ConfigError,
    ConvergenceWarning,
    DomainError,
    IllConditionedDesign,
    StencilOutOfDomain,
    TruncationError,
    UndefinedForVacuum,
)
from .fock import (
    FockAmplitudeVector,
    MomentSet,
    MotionalDensityMatrix,
    Truncation,
    coherent_rho,
    coherent_vector,
    displacement_matrix,
    displacement_unitary,
    laguerre_gen,
    log_factorial_ratio,
    moments_from_rho,
    number_rho,
    thermal_rho,
    trace_distance,
)
from .measurement import (
    CharacteristicFunctionMatrix,
    ProbeSchedule,
    ReconstructionResult,
    VibronicState,
    WignerGrid,
    WignerMatrixSample,
    cf_matrix_from_wigner,
    cf_moment_set,
    displace_vibronic,
    extract_rho_nn,
    moments_from_cf,
    no_fluorescence_probability,
    p_matrix_integral,
    p_matrix_series,
    probe_cycle,
    probe_unitary_blocks,
    schedule_family,
    wigner_grid,
    wigner_matrix,
)
from .oracle import OracleReport, TripartiteOracle, oracle_check, oracle_evolve
from .phasespace import (
    FilterSpec,
    PhaseGrid,
    QuasiProbMap,
    disc_filter,
    normal_cf,
    normal_cf_grid,
    p_omega_integral,
    p_omega_map,
    p_omega_series,
)
