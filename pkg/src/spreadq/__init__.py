"""Spread complexity and survival probability of quenched quantum states."""

from .errors import (
    DomainError,
    EnsembleMemberError,
    FitError,
    InsufficientMomentsError,
    NormalizationError,
    NotPowerLawError,
    NumericalError,
    PositivityError,
    PrecisionError,
    VariantError,
    WindowError,
)
from .models import (
    FrmSurvival,
    GaussianAutocorr,
    InterpolationAutocorr,
    LdosSummary,
    SemicircleAutocorr,
    SpinSurvival,
    TruncatedQuadraticAutocorr,
    eval_autocorr,
    eval_b2,
    eval_frm_sp,
    eval_spin_sp,
    model_from_dict,
    model_from_json,
    model_to_dict,
    model_to_json,
    moments_of_model,
)
from .moment_lanczos import (
    LanczosCoefficients,
    MomentSequence,
    hankel_matrix,
    lanczos_to_moments,
    moments_to_lanczos,
)
from .hamiltonians import (
    SectorHamiltonian,
    SpinChainSpec,
    StateVector,
    build_spin_sector,
    domain_wall_state,
    ldos_summary,
    read_matrix_binary,
    sample_goe,
    sector_basis,
    write_matrix_binary,
    write_matrix_csv,
)
from .matrix_lanczos import (
    householder_hessenberg,
    lanczos_tridiagonalize,
    read_basis_binary,
    spectral_norm_estimate,
    write_basis_binary,
)
from .evolution import (
    KrylovAmplitudes,
    LongTimeAverages,
    SpreadComplexitySeries,
    default_time_grid,
    evolve_amplitudes,
    long_time_average,
    spread_complexity,
    write_sidecar,
)
from .analysis import (
    EnsembleSeries,
    FitResult,
    Histogram,
    RegimeStats,
    coefficient_stats,
    detect_peak_plateau,
    ensemble_average,
    fit_bn_linear,
    fit_bn_power,
    fit_decay_exponent,
    fit_goe_profile,
)

__version__ = "0.1.0"
