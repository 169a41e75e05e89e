"""Per-AP closed-form SLNR beamforming on perfect local CSI.

Each fog AP maximizes, independently per associated user, the ratio of
delivered signal power to the power it leaks toward every other user plus
noise, under an equal split of its power budget across its cluster.  The
maximizer of

    |h_rk^H w|^2 / (sum_{k' != k} |h_rk'^H w|^2 + sigma_n^2),   ||w||^2 = P_r/K_r

is the dominant eigenvector of (L + (K_r sigma_n^2 / P_r) I)^{-1} h_rk h_rk^H
with L the leakage covariance; by the rank-1 structure that eigenvector is
proportional to (L + (K_r sigma_n^2 / P_r) I)^{-1} h_rk, so the production
path is a single Hermitian solve followed by normalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, NoisyChannelMatrix
from .topology import NetworkTopology


class ZeroChannelWarning(UserWarning):
    """Raised (as a warning) when a user's local channel is identically zero."""


@dataclass(frozen=True)
class LocalCsi:
    """What one fog AP knows: its own channels toward a set of users.

    ``channels`` holds the AP's channel vector toward every user in
    ``user_ids`` (column-aligned); leakage for one user is computed over all
    other columns.  ``own_users`` is the AP's scheduled cluster.
    """

    ap_id: int
    channels: np.ndarray  # (M_r, n_targets) complex
    user_ids: np.ndarray  # (n_targets,)
    own_users: np.ndarray  # subset of user_ids
    noise_power: float  # watts
    max_power: float  # watts, AP budget

    def column(self, user_id: int) -> int:
        hits = np.flatnonzero(self.user_ids == user_id)
        if len(hits) != 1:
            raise KeyError(f"user {user_id} not among this AP's CSI targets")
        return int(hits[0])


def local_csi(
    channel: ChannelMatrix,
    topology: NetworkTopology,
    ap_id: int,
    cluster,
    leakage_scope: str = "all",
) -> LocalCsi:
    """Extract AP ``ap_id``'s local view from a true channel matrix.

    ``leakage_scope="all"`` includes the AP's channels toward every user in
    the network (local in the AP dimension, global in the user dimension);
    ``"cluster"`` restricts leakage targets to the AP's own cluster for
    sensitivity studies.
    """
    if isinstance(channel, NoisyChannelMatrix):
        raise TypeError("local beamforming uses perfect local CSI, not a noisy channel")
    cluster = np.asarray(list(cluster), dtype=int)
    block = channel.matrix[channel.ap_slice(ap_id), :]
    if leakage_scope == "all":
        user_ids = np.asarray(channel.user_ids, dtype=int)
        channels = block
    elif leakage_scope == "cluster":
        cols = [int(np.flatnonzero(channel.user_ids == uid)[0]) for uid in cluster]
        user_ids = cluster
        channels = block[:, cols]
    else:
        raise ValueError(f"unknown leakage scope {leakage_scope!r}")
    return LocalCsi(
        ap_id=ap_id,
        channels=np.asarray(channels, dtype=complex),
        user_ids=user_ids,
        own_users=cluster,
        noise_power=channel.noise_psd * channel.bandwidth,
        max_power=topology.aps[ap_id].max_power,
    )


def slnr_beamformer(csi: LocalCsi, k: int, power_share: float) -> np.ndarray:
    """Closed-form SLNR-optimal beam for user ``k`` with ||w||^2 = power_share.

    The phase is fixed so the first non-negligible entry is real-positive,
    making outputs comparable across implementations.  A zero channel yields
    a zero vector and a :class:`ZeroChannelWarning`.
    """
    if power_share <= 0.0:
        raise ValueError("power_share must be positive")
    col = csi.column(k)
    h = csi.channels[:, col]
    m_r = len(h)
    if not np.any(h):
        warnings.warn(f"AP {csi.ap_id}: zero channel toward user {k}", ZeroChannelWarning)
        return np.zeros(m_r, dtype=complex)
    others = np.delete(csi.channels, col, axis=1)
    leakage = others @ others.conj().T
    regularized = leakage + (csi.noise_power / power_share) * np.eye(m_r)
    w = np.linalg.solve(regularized, h)
    w *= np.sqrt(power_share) / np.linalg.norm(w)
    anchor = np.flatnonzero(np.abs(w) > 1e-12 * np.linalg.norm(w))[0]
    w *= np.conj(w[anchor]) / np.abs(w[anchor])
    return w


def compute_slnr(csi: LocalCsi, k: int, w: np.ndarray) -> float:
    """Signal-to-leakage-plus-noise ratio of beam ``w`` for user ``k``."""
    col = csi.column(k)
    h = csi.channels[:, col]
    signal = np.abs(h.conj() @ w) ** 2
    others = np.delete(csi.channels, col, axis=1)
    leaked = np.sum(np.abs(others.conj().T @ w) ** 2)
    return float(signal / (leaked + csi.noise_power))


def beamform_cluster(csi: LocalCsi, cluster=None) -> dict[int, np.ndarray]:
    """SLNR beams for every user of a cluster with equal power split.

    Each of the K_r users gets ||w||^2 = P_r / K_r, so the AP transmits at
    exactly its budget.  An empty cluster returns no beams (AP silent).
    """
    users = csi.own_users if cluster is None else np.asarray(list(cluster), dtype=int)
    if len(users) == 0:
        return {}
    share = csi.max_power / len(users)
    return {int(k): slnr_beamformer(csi, int(k), share) for k in users}
