"""Kicked long-range spin chains: Floquet level statistics and dynamics."""

__version__ = "0.1.0"

from .basis import SectorBasis, enumerate_sector, rank, unrank
from .hamiltonian import ChainConfig, HermitianSpectrum, build_hamiltonian, diagonalize_hermitian
from .floquet import (
    FloquetDecomposition,
    KickAngles,
    build_floquet,
    diagonalize_floquet,
    floquet_decomposition,
    sample_kick_angles,
)
from .spectral_stats import GapRatioSet, gap_ratios, mean_r_over_ensemble
from .dynamics import (
    SectorState,
    entanglement_entropy,
    evolve_stroboscopic,
    imbalance,
    log_time_grid,
    neel_state,
)
from .analysis import (
    CollapseResult,
    GrowthFit,
    ScalingDataset,
    TimeSeries,
    collapse_quality,
    compare_growth_models,
    fit_collapse,
    fit_log_power,
)
from .ensemble import AggregateRecord, SweepPlan, plan_sweep, run_sweep
