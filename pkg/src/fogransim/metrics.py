"""Realized rates across the whole network and the packet-delay metric.

Rates are always evaluated on the TRUE channels with the full cross-AP
interference sum, then capped so no AP's fronthaul carries more than its
capacity: if the served users of AP r sum past C_r, their rates are scaled
proportionally (single pass over APs in index order; for a partition the
caps are exact).  Delay is the time to receive a packet of P bits at the
realized rate; zero-rate users are excluded from the mean and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, NoisyChannelMatrix
from .prescheduler import Clustering
from .topology import NetworkTopology
from .wsr import BeamformingSolution, RateVector, _all_sinrs, _block_powers


@dataclass(frozen=True)
class MetricsReport:
    """Per-user and aggregate metrics for one evaluation."""

    scheme: str  # "CranRef" | "FogranProp"
    error_variance: float
    packet_bits: float
    per_user_rate: np.ndarray  # bits/second
    per_user_delay: np.ndarray  # seconds; inf where rate == 0
    sum_rate: float
    mean_delay: float
    zero_rate_users: int


def _served_mask(
    solution: BeamformingSolution,
    topology: NetworkTopology,
    clustering: Clustering | None,
    eps_scale: float = 1e-6,
) -> np.ndarray:
    if clustering is not None:
        mask = np.zeros((solution.num_aps, solution.num_users), dtype=bool)
        mask[clustering.assignment, np.arange(solution.num_users)] = True
        return mask
    powers = topology.ap_powers()
    eps_active = eps_scale * powers / solution.num_users
    return solution.block_powers() > eps_active[:, None]


def apply_fronthaul_throttle(
    rates: np.ndarray, served: np.ndarray, capacities: np.ndarray
) -> np.ndarray:
    """Proportional fronthaul throttling.

    APs are processed in index order; when the served sum exceeds the
    capacity, all served users' rates scale by C_r / sum.  Scaling one AP's
    users can only lower the sums seen by later APs, so a single pass leaves
    every constraint satisfied.
    """
    out = np.asarray(rates, dtype=float).copy()
    for r in range(len(capacities)):
        users = served[r]
        total = out[users].sum()
        if total > capacities[r]:
            out[users] *= capacities[r] / total
    return out


def realized_rates(
    true_channel: ChannelMatrix,
    solution: BeamformingSolution,
    topology: NetworkTopology,
    clustering: Clustering | None = None,
) -> RateVector:
    """Realized per-user rates of a solution on the true channels.

    When ``clustering`` is given the solution must be block-sparse: each
    user's stacked beamformer is zero outside its assigned AP block (checked
    before computing).  Fronthaul throttling uses the clustering when given,
    otherwise the solution's active blocks.
    """
    if isinstance(true_channel, NoisyChannelMatrix):
        raise TypeError("realized rates are evaluated on the true channel")
    if true_channel.matrix.shape != solution.matrix.shape:
        raise ValueError("channel and solution shapes do not match")
    if clustering is not None:
        block_powers = solution.block_powers()
        off_block = block_powers.copy()
        off_block[clustering.assignment, np.arange(solution.num_users)] = 0.0
        if np.any(off_block > 0.0):
            raise ValueError("solution has power outside the assigned AP blocks")
    noise = true_channel.noise_psd * true_channel.bandwidth
    sinrs = _all_sinrs(true_channel.matrix, solution.matrix, noise)
    rates = true_channel.bandwidth * np.log2(1.0 + sinrs)
    served = _served_mask(solution, topology, clustering)
    rates = apply_fronthaul_throttle(rates, served, topology.fronthaul_capacities())
    return RateVector(rates=rates, sinrs=sinrs)


def packet_delay(rates: RateVector, packet_bits: float) -> tuple[np.ndarray, float, int]:
    """Per-user packet delays, their mean, and the zero-rate user count.

    delay_k = packet_bits / rate_k; users with zero rate get infinite delay,
    are excluded from the mean and counted separately.  If no user has a
    positive rate the mean is infinite.
    """
    if packet_bits <= 0.0:
        raise ValueError("packet size must be positive")
    r = np.asarray(rates.rates, dtype=float)
    delays = np.full_like(r, math.inf)
    positive = r > 0.0
    delays[positive] = packet_bits / r[positive]
    mean = float(np.mean(delays[positive])) if positive.any() else math.inf
    return delays, mean, int(np.sum(~positive))


def build_report(
    scheme: str,
    error_variance: float,
    packet_bits: float,
    rates: RateVector,
    extra_latency_s: float = 0.0,
) -> MetricsReport:
    """Assemble a MetricsReport; ``extra_latency_s`` is an optional additive
    per-architecture transport latency (default 0)."""
    delays, mean, zero_count = packet_delay(rates, packet_bits)
    finite = np.isfinite(delays)
    delays = delays + extra_latency_s
    return MetricsReport(
        scheme=scheme,
        error_variance=error_variance,
        packet_bits=packet_bits,
        per_user_rate=rates.rates.copy(),
        per_user_delay=delays,
        sum_rate=float(rates.rates.sum()),
        mean_delay=mean + extra_latency_s if np.any(finite) else math.inf,
        zero_rate_users=zero_count,
    )
