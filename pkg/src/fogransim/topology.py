"""Two-tier network geometry and user drops on a wrap-around (toroidal) plane.

A topology holds macro and pico access points plus single-antenna users on a
square plane whose opposite edges are identified, so distances are torus
distances and there are no network-edge interference artifacts.  Macro sites
are deterministic; pico sites and users are placed uniformly at random per
drop.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .units import dbm_to_watts


class ApKind(enum.Enum):
    MACRO = "macro"
    PICO = "pico"


DEFAULT_MACRO_POWER_W = dbm_to_watts(43.0)
DEFAULT_PICO_POWER_W = dbm_to_watts(30.0)
DEFAULT_MACRO_FRONTHAUL_BPS = 690e6
DEFAULT_PICO_FRONTHAUL_BPS = 107e6


@dataclass(frozen=True)
class AccessPoint:
    """One macro or pico access point (radio head / fog access point)."""

    id: int
    kind: ApKind
    position: np.ndarray  # (2,) meters
    antennas: int
    max_power: float  # watts
    fronthaul_capacity: float  # bits/second

    def __post_init__(self):
        if self.antennas < 1:
            raise ValueError(f"AP {self.id}: antennas must be >= 1")
        if self.max_power <= 0.0:
            raise ValueError(f"AP {self.id}: max_power must be positive")
        if self.fronthaul_capacity <= 0.0:
            raise ValueError(f"AP {self.id}: fronthaul_capacity must be positive")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class User:
    """A single-antenna user terminal with a sum-rate weight."""

    id: int
    position: np.ndarray  # (2,) meters
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0.0:
            raise ValueError(f"user {self.id}: weight must be >= 0")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class TopologyConfig:
    """Generation parameters for :func:`build_topology`.

    Defaults reproduce the full-scale two-tier layout: 3 macro sites at
    43 dBm with 690 Mbps fronthaul and 9 uniformly dropped picos at 30 dBm
    with 107 Mbps fronthaul, 60 users.  Antenna counts default to 4 (macro)
    and 2 (pico) and are freely configurable.
    """

    macro_count: int = 3
    pico_count: int = 9
    user_count: int = 60
    macro_antennas: int = 4
    pico_antennas: int = 2
    macro_power_w: float = DEFAULT_MACRO_POWER_W
    pico_power_w: float = DEFAULT_PICO_POWER_W
    macro_fronthaul_bps: float = DEFAULT_MACRO_FRONTHAUL_BPS
    pico_fronthaul_bps: float = DEFAULT_PICO_FRONTHAUL_BPS
    plane_extent_m: float = 1000.0
    min_ap_user_distance_m: float = 10.0
    user_weight: float = 1.0
    seed: int = 0

    def with_seed(self, seed: int) -> "TopologyConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class NetworkTopology:
    aps: tuple[AccessPoint, ...]
    users: tuple[User, ...]
    plane_extent: float

    def __post_init__(self):
        if not self.aps:
            raise ValueError("topology needs at least one AP")
        if not self.users:
            raise ValueError("topology needs at least one user")
        if self.plane_extent <= 0.0:
            raise ValueError("plane_extent must be positive")
        for node in (*self.aps, *self.users):
            if np.any(node.position < 0.0) or np.any(node.position >= self.plane_extent):
                raise ValueError(f"position {node.position} outside plane extent")

    @property
    def num_aps(self) -> int:
        return len(self.aps)

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def total_antennas(self) -> int:
        return sum(ap.antennas for ap in self.aps)

    def antenna_offsets(self) -> np.ndarray:
        """Cumulative antenna offsets, shape (R+1,); AP r owns rows
        offsets[r]:offsets[r+1] of any stacked antenna-dimension array."""
        counts = [ap.antennas for ap in self.aps]
        return np.concatenate(([0], np.cumsum(counts)))

    def ap_powers(self) -> np.ndarray:
        return np.array([ap.max_power for ap in self.aps])

    def fronthaul_capacities(self) -> np.ndarray:
        return np.array([ap.fronthaul_capacity for ap in self.aps])

    def user_weights(self) -> np.ndarray:
        return np.array([u.weight for u in self.users])

    def ap_positions(self) -> np.ndarray:
        return np.stack([ap.position for ap in self.aps])

    def user_positions(self) -> np.ndarray:
        return np.stack([u.position for u in self.users])


def wrap_distance(a, b, extent: float) -> float:
    """Torus distance between two points on the wrap-around plane.

    Per-axis deltas are reduced modulo ``extent`` to magnitude <= extent/2,
    then combined with the Euclidean norm.  Symmetric, non-negative, and
    bounded by (extent/2)*sqrt(2) in 2-D.
    """
    if extent <= 0.0:
        raise ValueError("extent must be positive")
    delta = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % extent
    delta = np.minimum(delta, extent - delta)
    return float(np.sqrt(np.sum(delta**2, axis=-1)))


def wrap_distance_matrix(points_a: np.ndarray, points_b: np.ndarray, extent: float) -> np.ndarray:
    """Pairwise torus distances, shape (len(a), len(b))."""
    if extent <= 0.0:
        raise ValueError("extent must be positive")
    delta = np.abs(points_a[:, None, :] - points_b[None, :, :]) % extent
    delta = np.minimum(delta, extent - delta)
    return np.sqrt(np.sum(delta**2, axis=-1))


def _macro_sites(count: int, extent: float) -> np.ndarray:
    """Deterministic macro positions: center / pair / equilateral triangle,
    and a ring for larger counts."""
    c = extent / 2.0
    if count == 1:
        return np.array([[c, c]])
    if count == 2:
        return np.array([[extent / 4.0, c], [3.0 * extent / 4.0, c]])
    if count == 3:
        # Equilateral triangle of side extent/2 centered on the plane.
        radius = extent / (2.0 * math.sqrt(3.0))
        angles = np.deg2rad([90.0, 210.0, 330.0])
    else:
        radius = extent / 4.0
        angles = 2.0 * np.pi * np.arange(count) / count
    sites = np.stack([c + radius * np.cos(angles), c + radius * np.sin(angles)], axis=-1)
    return sites % extent


def build_topology(config: TopologyConfig) -> NetworkTopology:
    """Generate a topology from ``config``; deterministic for a fixed seed.

    Macro APs sit on fixed sites, pico APs are uniform on the plane, and
    users are uniform subject to a minimum torus distance from every AP
    (resampled on violation) to avoid path-loss singularities.
    """
    if config.macro_count + config.pico_count < 1:
        raise ValueError("need at least one AP")
    if config.user_count < 1:
        raise ValueError("need at least one user")
    if config.plane_extent_m <= 0.0:
        raise ValueError("plane extent must be positive")

    extent = config.plane_extent_m
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x701)))

    aps: list[AccessPoint] = []
    if config.macro_count:
        for pos in _macro_sites(config.macro_count, extent):
            aps.append(
                AccessPoint(
                    id=len(aps),
                    kind=ApKind.MACRO,
                    position=pos,
                    antennas=config.macro_antennas,
                    max_power=config.macro_power_w,
                    fronthaul_capacity=config.macro_fronthaul_bps,
                )
            )
    for _ in range(config.pico_count):
        aps.append(
            AccessPoint(
                id=len(aps),
                kind=ApKind.PICO,
                position=rng.uniform(0.0, extent, size=2),
                antennas=config.pico_antennas,
                max_power=config.pico_power_w,
                fronthaul_capacity=config.pico_fronthaul_bps,
            )
        )

    ap_positions = np.stack([ap.position for ap in aps])
    users: list[User] = []
    for k in range(config.user_count):
        for _attempt in range(1000):
            pos = rng.uniform(0.0, extent, size=2)
            dists = wrap_distance_matrix(pos[None, :], ap_positions, extent)[0]
            if np.all(dists >= config.min_ap_user_distance_m):
                break
        else:
            raise RuntimeError("could not place user away from all APs; extent too small?")
        users.append(User(id=k, position=pos, weight=config.user_weight))

    return NetworkTopology(aps=tuple(aps), users=tuple(users), plane_extent=extent)
