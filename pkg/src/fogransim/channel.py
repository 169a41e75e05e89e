"""Channel generation (path loss + shadowing + Rayleigh fading) and the
imperfect-CSI copies used by the centralized solvers.

The true channel from AP r to user k is h_rk = sqrt(g_rk) * f_rk with g_rk
the linear large-scale gain and f_rk i.i.d. unit-variance circularly
symmetric complex Gaussian fading.  The imperfect copy adds an independent
complex Gaussian error of per-entry variance ``error_variance`` to the
*normalized* fading before the large-scale scaling is re-applied:

    h~_rk = sqrt(g_rk) * (f_rk + e_rk),   e_rk ~ CN(0, error_variance * I).

An error variance of 1 therefore corrupts every link as strongly as its own
fading, regardless of path loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .topology import ApKind, NetworkTopology, wrap_distance_matrix
from .units import dbm_to_watts

DEFAULT_NOISE_PSD_W_PER_HZ = dbm_to_watts(-169.0)  # -169 dBm/Hz


@dataclass(frozen=True)
class ChannelParams:
    """Radio parameters for channel generation.

    Path-loss curves are the usual two-tier constants (dB as a function of
    distance in km); shadowing is log-normal with the given dB standard
    deviation.  ``fading="ones"`` replaces Rayleigh fading with an all-ones
    vector for debugging, so that ||h_rk||^2 == M_r * g_rk exactly.
    """

    bandwidth_hz: float = 10e6
    noise_psd_w_per_hz: float = DEFAULT_NOISE_PSD_W_PER_HZ
    macro_pathloss_offset_db: float = 128.1
    macro_pathloss_slope_db: float = 37.6  # per decade of km
    pico_pathloss_offset_db: float = 140.7
    pico_pathloss_slope_db: float = 36.7
    shadowing_std_db: float = 8.0
    fading: str = "rayleigh"  # "rayleigh" | "ones"


@dataclass(frozen=True)
class ChannelMatrix:
    """True channels for all (AP, user) pairs, stacked over AP antennas.

    ``matrix`` has shape (M, K) with M the total antenna count; the rows
    ``ap_offsets[r]:ap_offsets[r+1]`` of column k hold h_rk.  ``fading`` and
    ``gains`` keep the normalized small-scale part and the (R, K) large-scale
    gains so CSI corruption can operate in the normalized domain.
    """

    matrix: np.ndarray  # (M, K) complex
    fading: np.ndarray  # (M, K) complex, unit-variance entries
    gains: np.ndarray  # (R, K) linear large-scale gain
    ap_offsets: np.ndarray  # (R+1,) int
    user_ids: np.ndarray  # (K,) int
    bandwidth: float  # Hz
    noise_psd: float  # W/Hz

    @property
    def num_aps(self) -> int:
        return len(self.ap_offsets) - 1

    @property
    def num_users(self) -> int:
        return self.matrix.shape[1]

    def ap_slice(self, r: int) -> slice:
        return slice(int(self.ap_offsets[r]), int(self.ap_offsets[r + 1]))

    def block(self, r: int, k: int) -> np.ndarray:
        return self.matrix[self.ap_slice(r), k]


@dataclass(frozen=True)
class NoisyChannelMatrix:
    """Imperfect-CSI copy of a :class:`ChannelMatrix` (same block layout)."""

    matrix: np.ndarray  # (M, K) complex
    error_variance: float
    ap_offsets: np.ndarray
    user_ids: np.ndarray
    bandwidth: float
    noise_psd: float

    def __post_init__(self):
        if self.error_variance < 0.0:
            raise ValueError("error_variance must be >= 0")

    @property
    def num_aps(self) -> int:
        return len(self.ap_offsets) - 1

    @property
    def num_users(self) -> int:
        return self.matrix.shape[1]

    def ap_slice(self, r: int) -> slice:
        return slice(int(self.ap_offsets[r]), int(self.ap_offsets[r + 1]))

    def block(self, r: int, k: int) -> np.ndarray:
        return self.matrix[self.ap_slice(r), k]


def channel_from_matrix(
    matrix: np.ndarray,
    ap_offsets,
    bandwidth: float = 10e6,
    noise_psd: float = DEFAULT_NOISE_PSD_W_PER_HZ,
) -> ChannelMatrix:
    """Wrap a hand-built (M, K) matrix as a unit-gain ChannelMatrix.

    Intended for tests and demos that construct channels directly.
    """
    matrix = np.asarray(matrix, dtype=complex)
    offsets = np.asarray(ap_offsets, dtype=int)
    num_aps = len(offsets) - 1
    num_users = matrix.shape[1]
    return ChannelMatrix(
        matrix=matrix,
        fading=matrix.copy(),
        gains=np.ones((num_aps, num_users)),
        ap_offsets=offsets,
        user_ids=np.arange(num_users),
        bandwidth=bandwidth,
        noise_psd=noise_psd,
    )


def _user_rng(seed: int, salt: int, user_id: int) -> np.random.Generator:
    # One stream per (purpose, user id) so outputs follow user identity:
    # permuting the user list permutes channel columns identically.
    return np.random.default_rng(np.random.SeedSequence((int(seed), salt, int(user_id))))


def large_scale_gains(
    topology: NetworkTopology,
    rng_seed: int,
    params: ChannelParams | None = None,
) -> np.ndarray:
    """Linear large-scale gains g_rk from path loss and shadowing, (R, K)."""
    params = params or ChannelParams()
    ap_pos = topology.ap_positions()
    user_pos = topology.user_positions()
    dist_km = wrap_distance_matrix(ap_pos, user_pos, topology.plane_extent) / 1000.0
    dist_km = np.maximum(dist_km, 1e-6)

    is_macro = np.array([ap.kind is ApKind.MACRO for ap in topology.aps])
    offset = np.where(is_macro, params.macro_pathloss_offset_db, params.pico_pathloss_offset_db)
    slope = np.where(is_macro, params.macro_pathloss_slope_db, params.pico_pathloss_slope_db)
    pathloss_db = offset[:, None] + slope[:, None] * np.log10(dist_km)

    shadow_db = np.zeros_like(pathloss_db)
    if params.shadowing_std_db > 0.0:
        for col, user in enumerate(topology.users):
            rng = _user_rng(rng_seed, 0x5A, user.id)
            shadow_db[:, col] = rng.normal(0.0, params.shadowing_std_db, size=topology.num_aps)

    return 10.0 ** (-(pathloss_db + shadow_db) / 10.0)


def draw_channel(
    topology: NetworkTopology,
    rng_seed: int,
    params: ChannelParams | None = None,
    gains: np.ndarray | None = None,
) -> ChannelMatrix:
    """Draw one realization of the true channels; deterministic per seed.

    ``gains`` may be passed to reuse large-scale gains across frames (the
    harness fixes them per drop and redraws only the small-scale fading).
    """
    params = params or ChannelParams()
    if gains is None:
        gains = large_scale_gains(topology, rng_seed, params)
    gains = np.asarray(gains, dtype=float)
    offsets = topology.antenna_offsets()
    total = topology.total_antennas
    num_users = topology.num_users

    fading = np.empty((total, num_users), dtype=complex)
    if params.fading == "ones":
        fading[:] = 1.0
    elif params.fading == "rayleigh":
        for col, user in enumerate(topology.users):
            rng = _user_rng(rng_seed, 0xFA, user.id)
            draws = rng.standard_normal((total, 2))
            fading[:, col] = (draws[:, 0] + 1j * draws[:, 1]) / np.sqrt(2.0)
    else:
        raise ValueError(f"unknown fading mode {params.fading!r}")

    amp = np.sqrt(np.repeat(gains, np.diff(offsets), axis=0))
    matrix = amp * fading
    return ChannelMatrix(
        matrix=matrix,
        fading=fading,
        gains=gains,
        ap_offsets=offsets,
        user_ids=np.array([u.id for u in topology.users]),
        bandwidth=params.bandwidth_hz,
        noise_psd=params.noise_psd_w_per_hz,
    )


def corrupt_csi(channel: ChannelMatrix, error_variance: float, rng_seed: int) -> NoisyChannelMatrix:
    """Imperfect-CSI copy h~ = sqrt(g) * (f + e), e ~ CN(0, error_variance I).

    Errors are i.i.d. across all (AP, user) blocks and antenna entries.  With
    ``error_variance == 0`` the blocks are copied bit-exactly.
    """
    if error_variance < 0.0:
        raise ValueError("error_variance must be >= 0")
    if error_variance == 0.0:
        noisy = channel.matrix.copy()
    else:
        total, num_users = channel.matrix.shape
        std = np.sqrt(error_variance / 2.0)
        error = np.empty((total, num_users), dtype=complex)
        for col, uid in enumerate(channel.user_ids):
            rng = _user_rng(rng_seed, 0xE7, int(uid))
            draws = rng.standard_normal((total, 2))
            error[:, col] = std * (draws[:, 0] + 1j * draws[:, 1])
        amp = np.sqrt(np.repeat(channel.gains, np.diff(channel.ap_offsets), axis=0))
        noisy = channel.matrix + amp * error
    return NoisyChannelMatrix(
        matrix=noisy,
        error_variance=error_variance,
        ap_offsets=channel.ap_offsets,
        user_ids=channel.user_ids,
        bandwidth=channel.bandwidth,
        noise_psd=channel.noise_psd,
    )


def noise_power(channel) -> float:
    """Receiver noise power in watts: noise PSD times bandwidth."""
    return channel.noise_psd * channel.bandwidth


def dump_channel_csv(channel, path) -> None:
    """Debug dump: one row per (AP, user) block, interleaved re/im entries."""
    offsets = channel.ap_offsets
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ap", "user", "entries_re_im_interleaved"])
        for r in range(len(offsets) - 1):
            for k in range(channel.matrix.shape[1]):
                block = channel.block(r, k)
                row = [r, k]
                for value in block:
                    row.extend([repr(float(value.real)), repr(float(value.imag))])
                writer.writerow(row)
