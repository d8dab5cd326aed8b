"""rslab: a numerical laboratory for random operators A + lam*V on finite graphs."""

__version__ = "0.1.0"

from .asymptotics import (
    LyapunovEstimate,
    PhaseVerdict,
    lyapunov_estimate,
    phase_scan,
    phase_verdict,
    phi_s,
)
from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import (
    DivergenceVerdict,
    DosEstimate,
    EnergyClassification,
    classify_energy,
    divergence_verdict,
    dos,
    energy_grid,
    gamma_trace,
    kappa_trace,
    sum_rule_check,
)
from .randop import (
    NoDensityError,
    OperatorModel,
    PotentialSample,
    SiteDistribution,
    check_density_condition,
    conditional_resample,
    dense_hamiltonian,
    sample_potential,
    wegner_density_bound,
)
from .resolvent import (
    ComplexEnergy,
    EtaLadder,
    SolverIntegrityError,
    green_column,
    green_matrix,
    green_ratio,
    self_energy,
    two_site_schur,
)
from .resonance import (
    CutoffFunction,
    ResonanceReport,
    calibrate_cutoff,
    check_conditions,
    detect_events,
    resonance_report,
    sphere_events,
)
from .runner import run
from .theorems import (
    MobiusScan,
    QuadratureError,
    cross_ratio,
    delta_principle,
    mobius_dichotomy,
    predict_exceptional,
    spectral_null_average,
    spectrum_simplicity,
    two_site_area_bound,
    verify_rank_one_eigen,
)
from .topology import (
    GraphTopology,
    build_box,
    build_complete,
    build_custom,
    build_graph,
    build_tree,
    log_sphere_count,
)

__all__ = [
    "ComplexEnergy",
    "ConfigError",
    "CutoffFunction",
    "DivergenceVerdict",
    "DosEstimate",
    "EnergyClassification",
    "EtaLadder",
    "GraphTopology",
    "LyapunovEstimate",
    "MobiusScan",
    "NoDensityError",
    "OperatorModel",
    "PhaseVerdict",
    "PotentialSample",
    "QuadratureError",
    "ResonanceReport",
    "RunConfig",
    "SiteDistribution",
    "SolverIntegrityError",
    "build_box",
    "build_complete",
    "build_custom",
    "build_graph",
    "build_tree",
    "calibrate_cutoff",
    "check_conditions",
    "check_density_condition",
    "classify_energy",
    "conditional_resample",
    "cross_ratio",
    "delta_principle",
    "dense_hamiltonian",
    "detect_events",
    "divergence_verdict",
    "dos",
    "energy_grid",
    "gamma_trace",
    "green_column",
    "green_matrix",
    "green_ratio",
    "kappa_trace",
    "load_config",
    "log_sphere_count",
    "lyapunov_estimate",
    "mobius_dichotomy",
    "parse_config",
    "phase_scan",
    "phase_verdict",
    "phi_s",
    "predict_exceptional",
    "resonance_report",
    "run",
    "sample_potential",
    "self_energy",
    "spectral_null_average",
    "spectrum_simplicity",
    "sphere_events",
    "sum_rule_check",
    "two_site_area_bound",
    "two_site_schur",
    "verify_rank_one_eigen",
    "wegner_density_bound",
    "__version__",
]
