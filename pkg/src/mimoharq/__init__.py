"""Numerical laboratory for hybrid ARQ over quasi-static MIMO channels.

Average-rate limits of IR / Chase-combining / dispersion-coded protocols,
space-time code optimality certification, multi-round pairwise error
probabilities, and packet-level link simulation. All rates are in bits per
channel use.
"""

from .channel import (
    CapacitySampleSet,
    ChannelMatrix,
    SnrPoint,
    channel_stream,
    chi2_cdf,
    mimo_mutual_info,
    miso_capacity_cdf,
    sample_channel,
    sample_channels,
)
from .harq import (
    AvgRateResult,
    RoundRates,
    avg_rate_from_probs,
    cc_equiv_capacity,
    ergodic_capacity,
    ir_equiv_capacity,
    optimize_cc_rate,
    optimize_ir_rates,
)
from .ldc import (
    LdcCode,
    UnknownCodeError,
    avg_rate_ldc,
    check_corollary2,
    check_criterion1,
    check_power,
    check_theorem1,
    ldc_mutual_info,
    load_code,
    optimal_ldc_avg_rate,
    prefix,
    save_code,
    zoo,
)
from .errprob import (
    DiversityFit,
    PairwiseCovariance,
    SymbolSet,
    WorkBudgetError,
    build_covariance,
    diversity_estimate,
    optimal_diversity,
    pairwise_distance,
    q_n,
    union_bound,
)
from .linksim import LinkConfig, SimStats, ml_detect, qpsk_demap, qpsk_map, run_coded, run_uncoded

__version__ = "0.1.0"
