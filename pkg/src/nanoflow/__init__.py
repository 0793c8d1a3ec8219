"""Performance model of flow-guided nano-networks in the bloodstream.

Nano-nodes drift with the blood flow, harvest energy from heartbeats and
deliver sensed frames to a router fixed in one vein. The package computes
the sphere-vessel intersection volumes behind the link probabilities, the
Markov-chain metrics built on them (throughput, delivery probability,
average delay), an energy-harvesting trajectory model, an independent
Monte-Carlo simulator, and application-driven dimensioning (smallest
fleet and best storage duration).
"""

from .dimensioning import (InfeasibleError, KSearch, KTableRow, dimension,
                           m_target, n_min_for_qod, optimal_k)
from .energy import (EnergyTrajectory, cycle_energy, harvesting_rate,
                     max_sustainable_frequency, simulate_energy)
from .geometry import (QuadratureError, RegionSpec, VolumeEstimate,
                       collision_volume, coverage_volume, mc_volume_oracle,
                       region_volume, support_area, transmission_volume,
                       volume_set)
from .markov import (DelayDistribution, OracleResult, QodState, StorageChain,
                     analyze, average_delay, chain_oracle,
                     delay_stationary, delay_transition_matrix,
                     effective_throughput, link_probabilities, qod,
                     qod_recursion, qod_transition_matrix, raw_throughput,
                     stationary_storage, storage_transition_matrix,
                     two_round_throughput)
from .params import (AnalyticMetrics, ApplicationSpec, DimensioningResult,
                     EnergyParams, EnergyState, LinkProbabilities,
                     NetworkParams, Scenario, ValidationError, VolumeSet,
                     frame_time_from_bitrate, load_scenario, si_convert,
                     validate)
from .simulator import (Branch, CircuitConfig, Estimate, SimConfig, SimResult,
                        compare, default_circuit, empirical_qod, run,
                        wilson_interval)

__version__ = "0.1.0"

__all__ = [
    "AnalyticMetrics", "ApplicationSpec", "Branch", "CircuitConfig",
    "DelayDistribution", "DimensioningResult", "EnergyParams", "EnergyState",
    "EnergyTrajectory", "Estimate", "InfeasibleError", "KSearch", "KTableRow",
    "LinkProbabilities", "NetworkParams", "OracleResult", "QodState",
    "QuadratureError", "RegionSpec", "Scenario", "SimConfig", "SimResult",
    "StorageChain", "ValidationError", "VolumeEstimate", "VolumeSet",
    "analyze", "average_delay", "chain_oracle", "collision_volume", "compare",
    "coverage_volume", "cycle_energy", "default_circuit", "delay_stationary",
    "delay_transition_matrix", "dimension", "effective_throughput",
    "empirical_qod", "frame_time_from_bitrate", "harvesting_rate",
    "link_probabilities", "load_scenario", "m_target",
    "max_sustainable_frequency", "mc_volume_oracle", "n_min_for_qod",
    "optimal_k", "qod", "qod_recursion", "qod_transition_matrix",
    "raw_throughput", "region_volume", "run", "si_convert",
    "stationary_storage", "storage_transition_matrix", "support_area",
    "transmission_volume", "two_round_throughput", "validate", "volume_set",
    "wilson_interval",
]
