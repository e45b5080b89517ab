"""Link-level simulator for hybrid beamforming over wideband mmWave MIMO channels.

The top level re-exports the main workflow: build a :class:`SystemConfig`,
sample cluster channels, train coupling coefficients through a codebook,
select beams and digital stages from the couplings, and score everything
against the fully digital and OMP baselines — or just call
:func:`run_sweep` and let the Monte Carlo harness drive the whole chain.
"""

from .channel import ChannelConfig, ChannelRealization, sample_channel
from .codebooks import (
    Codebook,
    max_coherence,
    orthogonal_codebook,
    steering_vector,
    strong_coherent_codebook,
    weak_coherent_codebook,
)
from .config import (
    ConfigurationError,
    SystemConfig,
    build_codebooks,
    config_from_sources,
    snr_db_to_gamma,
    snr_db_to_sigma2,
)
from .metrics import (
    RateReport,
    approximation_error,
    audit_power_constraints,
    evaluate_rate,
    fully_digital_rate,
    u_statistics,
    ze_covariance,
)
from .montecarlo import MonteCarloError, SweepResult, SweepRow, emit_csv, run_sweep, run_trial
from .reference import OmpResult, omp_hybrid, reference_beamformers, reference_from_svd
from .selection import (
    BeamformerSet,
    CandidateSets,
    EffectiveChannelEstimate,
    NoViableCandidatesError,
    digital_beamforming,
    initial_beam_selection,
    select_beams,
)
from .training import CouplingTensor, noiseless_couplings, simulate_training

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BeamformerSet",
    "CandidateSets",
    "ChannelConfig",
    "ChannelRealization",
    "Codebook",
    "ConfigurationError",
    "CouplingTensor",
    "EffectiveChannelEstimate",
    "MonteCarloError",
    "NoViableCandidatesError",
    "OmpResult",
    "RateReport",
    "SweepResult",
    "SweepRow",
    "SystemConfig",
    "approximation_error",
    "audit_power_constraints",
    "build_codebooks",
    "config_from_sources",
    "digital_beamforming",
    "emit_csv",
    "evaluate_rate",
    "fully_digital_rate",
    "initial_beam_selection",
    "max_coherence",
    "noiseless_couplings",
    "omp_hybrid",
    "orthogonal_codebook",
    "reference_beamformers",
    "reference_from_svd",
    "run_sweep",
    "run_trial",
    "sample_channel",
    "select_beams",
    "simulate_training",
    "snr_db_to_gamma",
    "snr_db_to_sigma2",
    "steering_vector",
    "strong_coherent_codebook",
    "u_statistics",
    "weak_coherent_codebook",
    "ze_covariance",
]
