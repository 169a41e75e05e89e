"""Centralized pre-scheduling: partition users across fog APs on outdated CSI.

The cloud solves the weighted sum-rate problem with the additional
requirement that each user's beamformer is non-zero at exactly one AP.  The
discrete constraint is relaxed by group-sparsity reweighting: every transmit
update adds per-(AP, user) quadratic penalties c / (||w_rk||^2 + tau) whose
common factor c ramps geometrically across passes until each user's transmit
power concentrates in one AP block, after which the partition is read off
the supports.  The result stays valid for a whole pre-scheduling period.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import NoisyChannelMatrix
from .topology import NetworkTopology
from .wsr import (
    BeamformingSolution,
    SolverParams,
    _block_powers,
    _clamp_inactive,
    _loads,
    _matched_init,
    _wmmse_inner,
)


@dataclass(frozen=True)
class Clustering:
    """An exact partition of users across APs (one AP per user)."""

    assignment: np.ndarray  # (K,) AP index per user
    num_aps: int

    def __post_init__(self):
        assignment = np.asarray(self.assignment, dtype=int)
        if assignment.ndim != 1:
            raise ValueError("assignment must be one index per user")
        if np.any(assignment < 0) or np.any(assignment >= self.num_aps):
            raise ValueError("assignment refers to an unknown AP")
        object.__setattr__(self, "assignment", assignment)

    @property
    def num_users(self) -> int:
        return len(self.assignment)

    def per_ap_sets(self) -> list[np.ndarray]:
        """User index lists K_r per AP; empty sets are allowed."""
        return [np.flatnonzero(self.assignment == r) for r in range(self.num_aps)]

    def users_of(self, r: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == r)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_id", "ap_id"])
            for k, r in enumerate(self.assignment):
                writer.writerow([k, int(r)])


@dataclass(frozen=True)
class PreSchedule:
    clustering: Clustering
    valid_for_frames: int
    based_on_error_variance: float
    converged: bool = True

    def __post_init__(self):
        if self.valid_for_frames < 1:
            raise ValueError("a pre-schedule must be valid for at least one frame")


def extract_clustering(solution: BeamformingSolution, channel=None) -> Clustering:
    """Read the user-to-AP partition off a (sparse) beamforming solution.

    Each user goes to the AP holding the largest share of its transmit
    power; exact ties break toward the lower AP index.  A user whose blocks
    are all zero falls back to its strongest channel block, which requires
    ``channel``.
    """
    powers = solution.block_powers()  # (R, K)
    assignment = np.argmax(powers, axis=0)
    dead = ~np.any(powers > 0.0, axis=0)
    if np.any(dead):
        if channel is None:
            raise ValueError("all-zero beamformer rows need a channel for the fallback assignment")
        strength = _block_powers(channel.matrix, channel.ap_offsets)
        assignment = np.where(dead, np.argmax(strength, axis=0), assignment)
    return Clustering(assignment=assignment, num_aps=solution.num_aps)


def _concentration(block_powers: np.ndarray) -> np.ndarray:
    """Fraction of each user's transmit power in its dominant AP block."""
    totals = block_powers.sum(axis=0)
    peak = block_powers.max(axis=0)
    return np.divide(peak, totals, out=np.ones_like(totals), where=totals > 0)


def _fog_sum_rate(matrix, offsets, powers, capacities, noise, bandwidth, assignment):
    """Predicted FogRAN sum-rate of a partition, from the cloud's CSI view.

    Applies the downstream local beamforming model per AP (leakage-aware
    beams under an equal power split), computes network-wide SINRs and caps
    each AP's member rates at its fronthaul capacity.
    """
    num_users = matrix.shape[1]
    num_aps = len(powers)
    W = np.zeros_like(matrix)
    for r in range(num_aps):
        users = np.flatnonzero(assignment == r)
        if users.size == 0:
            continue
        block = matrix[offsets[r] : offsets[r + 1], :]
        share = powers[r] / users.size
        gram = block @ block.conj().T
        for k in users:
            h = block[:, k]
            if not np.any(h):
                continue
            lead = gram - np.outer(h, h.conj()) + (noise / share) * np.eye(block.shape[0])
            w = np.linalg.solve(lead, h)
            norm = np.linalg.norm(w)
            if norm > 0.0:
                W[offsets[r] : offsets[r + 1], k] = np.sqrt(share) * w / norm
    G = matrix.conj().T @ W
    power = np.abs(G) ** 2
    sig = np.diagonal(power).copy()
    np.fill_diagonal(power, 0.0)
    rates = bandwidth * np.log2(1.0 + sig / (power.sum(axis=1) + noise))
    for r in range(num_aps):
        users = np.flatnonzero(assignment == r)
        total = rates[users].sum()
        if total > capacities[r]:
            rates[users] *= capacities[r] / total
    return float(rates.sum())


def _refine_assignment(matrix, offsets, powers, capacities, noise, bandwidth, assignment):
    """Greedy single-user reassignment under the predicted FogRAN sum-rate.

    Deterministic: users in index order, APs in index order, strict
    improvement required; at most a few sweeps.
    """
    assignment = np.asarray(assignment, dtype=int).copy()
    num_users = matrix.shape[1]
    num_aps = len(powers)
    best = _fog_sum_rate(matrix, offsets, powers, capacities, noise, bandwidth, assignment)
    for _sweep in range(4):
        improved = False
        for k in range(num_users):
            current = assignment[k]
            for r in range(num_aps):
                if r == current:
                    continue
                assignment[k] = r
                value = _fog_sum_rate(
                    matrix, offsets, powers, capacities, noise, bandwidth, assignment
                )
                if value > best * (1.0 + 1e-12):
                    best = value
                    current = r
                    improved = True
                else:
                    assignment[k] = current
            assignment[k] = current
        if not improved:
            break
    return assignment


def preschedule(
    noisy_channel: NoisyChannelMatrix,
    topology: NetworkTopology,
    params: SolverParams | None = None,
    period: int = 10,
) -> PreSchedule:
    """Compute a user partition from imperfect CSI, valid for ``period`` frames.

    Runs the reweighted sparse relaxation described in the module docstring;
    fronthaul multipliers are ascended on the evolving sparse support.  The
    returned clustering is always a valid partition: users the relaxation
    leaves unserved fall back to their strongest noisy channel.
    """
    if not isinstance(noisy_channel, NoisyChannelMatrix):
        raise TypeError("pre-scheduling runs on the noisy (outdated) channel")
    params = params or SolverParams()
    H = np.asarray(noisy_channel.matrix)
    offsets = np.asarray(noisy_channel.ap_offsets, dtype=int)
    if not np.array_equal(offsets, topology.antenna_offsets()):
        raise ValueError("channel antenna layout does not match topology")
    powers = topology.ap_powers()
    capacities = topology.fronthaul_capacities()
    bandwidth = noisy_channel.bandwidth
    noise = noisy_channel.noise_psd * bandwidth
    alpha = topology.user_weights()
    num_users = H.shape[1]
    num_aps = len(powers)
    eps_active = params.epsilon_active_scale * powers / num_users

    fallback = Clustering(
        assignment=np.argmax(_block_powers(H, offsets), axis=0), num_aps=num_aps
    )
    if alpha.sum() <= 0.0:
        return PreSchedule(fallback, period, noisy_channel.error_variance, converged=True)
    alpha_hat = alpha / alpha.mean()

    try:
        W_init = _matched_init(H, offsets, powers)
        W = W_init
        lam = np.zeros(num_aps)
        weight = params.sparsity_weight
        converged = False
        for _pass in range(params.sparsity_passes):
            block_powers = _block_powers(W, offsets)
            penalties = weight / (block_powers + params.tau)
            served = block_powers > eps_active[:, None]
            effective = np.maximum(alpha_hat - served.T.astype(float) @ lam, 0.0)
            dead = (np.abs(W).sum(axis=0) == 0.0) & (effective > 0.0)
            if dead.any():
                W = W.copy()
                W[:, dead] = W_init[:, dead]
            W, _trace, _conv = _wmmse_inner(
                H,
                effective,
                powers,
                offsets,
                noise,
                bandwidth,
                params,
                W,
                penalties=penalties,
                max_iter=params.presched_inner_iterations,
            )
            _rates, _served, loads = _loads(H, W, offsets, noise, bandwidth, eps_active)
            if np.any(loads > capacities * (1.0 + 1e-8)):
                lam = np.maximum(0.0, lam + params.dual_step * (loads / capacities - 1.0))
            if np.all(_concentration(_block_powers(W, offsets)) >= params.concentration_threshold):
                converged = True
                break
            weight *= params.sparsity_growth
        W = _clamp_inactive(W, offsets, eps_active)
        clustering = extract_clustering(
            BeamformingSolution(W, offsets), channel=noisy_channel
        )
        # The relaxation optimizes the joint-transmission objective; polish
        # the hard assignment for the actual downstream phase (equal-split
        # leakage-aware beams) by greedy reassignment on the same CSI.
        refined = _refine_assignment(
            H,
            offsets,
            powers,
            capacities,
            noise,
            bandwidth,
            clustering.assignment,
        )
        clustering = Clustering(assignment=refined, num_aps=num_aps)
    except np.linalg.LinAlgError:
        return PreSchedule(fallback, period, noisy_channel.error_variance, converged=False)
    return PreSchedule(clustering, period, noisy_channel.error_variance, converged=converged)
