"""Downlink CRAN/FogRAN resource-allocation simulator.

Two schemes over the same two-tier network under configurable CSI error:

* ``CranRef`` — the cloud jointly optimizes all beamformers for weighted
  sum-rate under per-AP power and fronthaul constraints, on global but
  imperfect CSI.
* ``FogranProp`` — the cloud only pre-schedules (partitions users across
  fog APs) on imperfect CSI every T frames; each AP then runs closed-form
  SLNR beamforming for its own users on perfect local CSI.
"""

__version__ = "0.1.0"

from .channel import (
    ChannelMatrix,
    ChannelParams,
    NoisyChannelMatrix,
    channel_from_matrix,
    corrupt_csi,
    draw_channel,
    dump_channel_csv,
    large_scale_gains,
    noise_power,
)
from .harness import (
    CRAN_REF,
    FOGRAN_PROP,
    ResultTable,
    Scenario,
    desk_scenario,
    paper_scenario,
    run_scenario,
)
from .metrics import MetricsReport, build_report, packet_delay, realized_rates
from .prescheduler import Clustering, PreSchedule, extract_clustering, preschedule
from .slnr import LocalCsi, ZeroChannelWarning, beamform_cluster, compute_slnr, local_csi, slnr_beamformer
from .topology import (
    AccessPoint,
    ApKind,
    NetworkTopology,
    TopologyConfig,
    User,
    build_topology,
    wrap_distance,
)
from .wsr import (
    BeamformingSolution,
    RateVector,
    SolverParams,
    SolverReport,
    compute_sinr,
    evaluate_true_rates,
    solve_wsr,
)

__all__ = [
    "AccessPoint",
    "ApKind",
    "BeamformingSolution",
    "CRAN_REF",
    "ChannelMatrix",
    "ChannelParams",
    "Clustering",
    "FOGRAN_PROP",
    "LocalCsi",
    "MetricsReport",
    "NetworkTopology",
    "NoisyChannelMatrix",
    "PreSchedule",
    "RateVector",
    "ResultTable",
    "Scenario",
    "SolverParams",
    "SolverReport",
    "TopologyConfig",
    "User",
    "ZeroChannelWarning",
    "beamform_cluster",
    "build_report",
    "build_topology",
    "channel_from_matrix",
    "compute_sinr",
    "compute_slnr",
    "corrupt_csi",
    "desk_scenario",
    "draw_channel",
    "dump_channel_csv",
    "evaluate_true_rates",
    "extract_clustering",
    "large_scale_gains",
    "local_csi",
    "noise_power",
    "packet_delay",
    "paper_scenario",
    "preschedule",
    "realized_rates",
    "run_scenario",
    "slnr_beamformer",
    "solve_wsr",
    "wrap_distance",
]
