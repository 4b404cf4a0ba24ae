"""Phase estimation with coherently amplified single-photon probes.

Photon statistics of the amplifier output, the lossy detection channel,
counting and threshold (orthogonality-filter) measurements, metrology
figures of merit, a deterministic Monte Carlo engine and gain calibration.
"""
__version__ = "0.1.0"

from .calibration import CalibrationDataset, CalibrationError, CalibrationFit, fit_gain, gain_power_map, model_counts
from .channel import (
    ChannelParams,
    SourceLaw,
    ThinningSizeError,
    binomial_thinning_exact,
    build_source_law,
    detected_joint_law,
    sample_detected_counts,
    thinned_moments,
    thinned_squeezed_distribution,
)
from .config import ConfigError, ScenarioConfig
from .detection import (
    DegenerateStatisticsError,
    FitError,
    FringeScan,
    OFConfig,
    OFStatistics,
    counting_difference_stats,
    estimate_visibility,
    of_classify,
    of_statistics,
    of_statistics_exact,
    of_sweep,
    scan_fringe,
)
from .fock import (
    DEFAULT_POLICY,
    FockDistribution,
    GainParams,
    JointModeDistribution,
    TruncationError,
    TruncationPolicy,
    amplified_probe_joint,
    fringe_visibility,
    mode_means,
    squeezed_single_photon_distribution,
    squeezed_vacuum_distribution,
)
from .mc import Estimate, EstimateSet, RunPlan, binomial_sample, execute_with_manifest, run_plan_execute
from .metrics import (
    DomainError,
    FisherReport,
    RegimeError,
    SensitivityReport,
    classical_fisher_information,
    critical_injection,
    enhancement,
    enhancement_limit,
    fisher_report,
    of_sensitivity,
    of_sensitivity_optimal,
    quantum_fisher_highloss,
    sensitivity_amplified_closed_form,
    sensitivity_report,
    sensitivity_single_photon,
)
from .oracle import OracleResolutionError, small_g_oracle
