"""Monte-Carlo experiment orchestration: drops, frames, pre-scheduling
periods, CSI-error sweeps and scheme comparison.

One *drop* realizes the topology and large-scale gains; frames within a drop
redraw only the small-scale fading.  For each (CSI error variance, drop)
cell both schemes run on the same channel realizations (common random
numbers), which pairs the comparison across schemes and sweep points:

* ``CranRef``   - per frame, corrupt the CSI, solve the centralized weighted
  sum-rate problem on the noisy channel, evaluate on the true channel.
* ``FogranProp`` - every T frames pre-schedule on the noisy channel; per
  frame run local SLNR beamforming on perfect per-frame CSI.

Pre-scheduling never sees the true channel, and local beamforming never
sees the noisy one; both directions are asserted in the frame loop.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    ChannelMatrix,
    ChannelParams,
    NoisyChannelMatrix,
    corrupt_csi,
    draw_channel,
    large_scale_gains,
)
from .metrics import packet_delay, realized_rates
from .prescheduler import preschedule
from .slnr import beamform_cluster, local_csi
from .topology import NetworkTopology, TopologyConfig, build_topology
from .wsr import BeamformingSolution, RateVector, SolverParams, solve_wsr

CRAN_REF = "CranRef"
FOGRAN_PROP = "FogranProp"
SCHEMES = (CRAN_REF, FOGRAN_PROP)

DESK_TOPOLOGY = TopologyConfig(
    macro_count=1,
    pico_count=3,
    user_count=8,
    macro_antennas=2,
    pico_antennas=2,
)

RAW_SCHEMA = "fogransim-raw-v1"
AGG_SCHEMA = "fogransim-agg-v1"

RAW_COLUMNS = (
    "scheme",
    "error_variance",
    "drop",
    "packet_bits",
    "sum_rate_bps",
    "mean_delay_s",
    "zero_rate_user_frames",
    "frames",
    "solver_ok",
    "status",
)

AGG_COLUMNS = (
    "scheme",
    "error_variance",
    "packet_bits",
    "n_rows",
    "sum_rate_mean_bps",
    "sum_rate_ci95_bps",
    "mean_delay_mean_s",
    "mean_delay_ci95_s",
    "n_delay_rows",
)


@dataclass(frozen=True)
class Scenario:
    """A full experiment definition; defaults are the desk-scale setup
    (1 macro + 3 picos, 8 users, 2 antennas each)."""

    topology: TopologyConfig = DESK_TOPOLOGY
    channel: ChannelParams = field(default_factory=ChannelParams)
    solver: SolverParams = field(default_factory=SolverParams)
    sweep: tuple[float, ...] = (0.0, 0.01, 0.1, 0.5, 1.0)
    drops: int = 20
    frames_per_drop: int = 3
    preschedule_period: int = 3
    packet_sizes_bits: tuple[float, ...] = (1000.0, 12000.0)
    schemes: tuple[str, ...] = SCHEMES
    master_seed: int = 0
    leakage_scope: str = "all"  # "all" | "cluster"
    cran_latency_s: float = 0.0
    fogran_latency_s: float = 0.0

    def __post_init__(self):
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if self.preschedule_period < 1:
            raise ValueError("preschedule_period must be >= 1")
        if self.frames_per_drop < self.preschedule_period:
            raise ValueError("frames_per_drop must be >= preschedule_period")
        if any(s < 0 for s in self.sweep) or not self.sweep:
            raise ValueError("sweep must be non-empty with values >= 0")
        if any(p <= 0 for p in self.packet_sizes_bits) or not self.packet_sizes_bits:
            raise ValueError("packet sizes must be positive")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ValueError(f"schemes must be a non-empty subset of {SCHEMES}, got {self.schemes}")
        if self.leakage_scope not in ("all", "cluster"):
            raise ValueError("leakage_scope must be 'all' or 'cluster'")

    def extra_latency(self, scheme: str) -> float:
        return self.cran_latency_s if scheme == CRAN_REF else self.fogran_latency_s


def _derive_seed(master: int, *parts: int) -> int:
    """Deterministic per-task seed: hash of (master_seed, task coordinates)."""
    state = np.random.SeedSequence((int(master), *[int(p) for p in parts]))
    return int(state.generate_state(1, np.uint64)[0])


# Salt values namespacing the per-task seed streams.  Channel randomness is
# keyed by (drop, frame) only so all schemes and sweep points see the same
# fading (paired comparison); the CSI error is keyed by (sweep, drop, frame).
_SALT_TOPOLOGY = 0x10
_SALT_GAINS = 0x20
_SALT_FADING = 0x30
_SALT_CSI = 0x40


def _fog_solution(
    channel: ChannelMatrix,
    topology: NetworkTopology,
    clustering,
    leakage_scope: str,
) -> BeamformingSolution:
    offsets = topology.antenna_offsets()
    W = np.zeros((topology.total_antennas, topology.num_users), dtype=complex)
    for r, users in enumerate(clustering.per_ap_sets()):
        if users.size == 0:
            continue  # AP silent this period
        csi = local_csi(channel, topology, r, users, leakage_scope)
        beams = beamform_cluster(csi, users)
        sl = slice(int(offsets[r]), int(offsets[r + 1]))
        for k, w in beams.items():
            W[sl, k] = w
    return BeamformingSolution(W, offsets)


def _run_cell(scenario: Scenario, sweep_idx: int, drop: int) -> dict:
    """All frames of one (error variance, drop) cell; returns one row per
    (scheme, packet size) keyed by that pair."""
    sigma2 = scenario.sweep[sweep_idx]
    frames = scenario.frames_per_drop
    period = scenario.preschedule_period
    topology = build_topology(
        scenario.topology.with_seed(_derive_seed(scenario.master_seed, _SALT_TOPOLOGY, drop))
    )
    gains = large_scale_gains(
        topology, _derive_seed(scenario.master_seed, _SALT_GAINS, drop), scenario.channel
    )

    per_scheme_rates: dict[str, list[np.ndarray]] = {s: [] for s in scenario.schemes}
    solver_ok = {s: True for s in scenario.schemes}
    pre = None
    for frame in range(frames):
        chan = draw_channel(
            topology,
            _derive_seed(scenario.master_seed, _SALT_FADING, drop, frame),
            scenario.channel,
            gains=gains,
        )
        csi_seed = _derive_seed(scenario.master_seed, _SALT_CSI, sweep_idx, drop, frame)
        noisy = None

        if CRAN_REF in scenario.schemes:
            noisy = corrupt_csi(chan, sigma2, csi_seed)
            solution, _internal, report = solve_wsr(noisy, topology, scenario.solver)
            realized = realized_rates(chan, solution, topology)
            per_scheme_rates[CRAN_REF].append(realized.rates)
            solver_ok[CRAN_REF] = solver_ok[CRAN_REF] and report.converged

        if FOGRAN_PROP in scenario.schemes:
            if frame % period == 0:
                if noisy is None:
                    noisy = corrupt_csi(chan, sigma2, csi_seed)
                # Information flow: the cloud pre-scheduler sees only the
                # noisy channel.
                assert isinstance(noisy, NoisyChannelMatrix)
                pre = preschedule(noisy, topology, scenario.solver, period=period)
                solver_ok[FOGRAN_PROP] = solver_ok[FOGRAN_PROP] and pre.converged
            # Information flow: local beamforming sees only the true
            # per-frame channel.
            assert isinstance(chan, ChannelMatrix) and not isinstance(chan, NoisyChannelMatrix)
            solution = _fog_solution(chan, topology, pre.clustering, scenario.leakage_scope)
            realized = realized_rates(chan, solution, topology, clustering=pre.clustering)
            per_scheme_rates[FOGRAN_PROP].append(realized.rates)

    rows = {}
    for scheme in scenario.schemes:
        rate_frames = per_scheme_rates[scheme]
        sum_rate = float(np.mean([r.sum() for r in rate_frames]))
        zero_frames = int(sum(np.count_nonzero(r == 0.0) for r in rate_frames))
        # Delay is evaluated at each user's average realized throughput over
        # the drop's frames; only users served in no frame at all count as
        # zero-rate.
        mean_rates = RateVector(np.mean(rate_frames, axis=0), np.zeros(topology.num_users))
        for packet_bits in scenario.packet_sizes_bits:
            _delays, mean_delay, _zero_users = packet_delay(mean_rates, packet_bits)
            rows[(scheme, packet_bits)] = {
                "scheme": scheme,
                "error_variance": sigma2,
                "drop": drop,
                "packet_bits": packet_bits,
                "sum_rate_bps": sum_rate,
                "mean_delay_s": mean_delay + scenario.extra_latency(scheme),
                "zero_rate_user_frames": zero_frames,
                "frames": frames,
                "solver_ok": solver_ok[scheme],
                "status": "ok",
            }
    return rows


def _error_rows(scenario: Scenario, sweep_idx: int, drop: int, message: str) -> dict:
    rows = {}
    for scheme in scenario.schemes:
        for packet_bits in scenario.packet_sizes_bits:
            rows[(scheme, packet_bits)] = {
                "scheme": scheme,
                "error_variance": scenario.sweep[sweep_idx],
                "drop": drop,
                "packet_bits": packet_bits,
                "sum_rate_bps": math.nan,
                "mean_delay_s": math.nan,
                "zero_rate_user_frames": 0,
                "frames": scenario.frames_per_drop,
                "solver_ok": False,
                "status": f"error: {message}",
            }
    return rows


def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class ResultTable:
    """Raw per-cell results plus aggregation and CSV serialization."""

    rows: list[dict]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {RAW_SCHEMA}\n")
            writer = csv.writer(fh)
            writer.writerow(RAW_COLUMNS)
            for row in self.rows:
                writer.writerow([_format_value(row[c]) for c in RAW_COLUMNS])

    def aggregate(self) -> list[dict]:
        """Group rows by (scheme, error variance, packet size); means and
        normal-approximation 95% confidence half-widths across drops."""
        groups: dict[tuple, list[dict]] = {}
        order: list[tuple] = []
        for row in self.rows:
            key = (row["scheme"], row["error_variance"], row["packet_bits"])
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(row)

        out = []
        for key in order:
            ok = [r for r in groups[key] if r["status"] == "ok"]
            sum_rates = np.array([r["sum_rate_bps"] for r in ok])
            delays = np.array([r["mean_delay_s"] for r in ok])
            finite = np.isfinite(delays)
            out.append(
                {
                    "scheme": key[0],
                    "error_variance": key[1],
                    "packet_bits": key[2],
                    "n_rows": len(ok),
                    "sum_rate_mean_bps": float(sum_rates.mean()) if len(ok) else math.nan,
                    "sum_rate_ci95_bps": _ci95(sum_rates),
                    "mean_delay_mean_s": float(delays[finite].mean()) if finite.any() else math.nan,
                    "mean_delay_ci95_s": _ci95(delays[finite]),
                    "n_delay_rows": int(finite.sum()),
                }
            )
        return out

    def aggregate_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {AGG_SCHEMA}\n")
            writer = csv.writer(fh)
            writer.writerow(AGG_COLUMNS)
            for row in self.aggregate():
                writer.writerow([_format_value(row[c]) for c in AGG_COLUMNS])

    def select(self, **filters) -> list[dict]:
        out = []
        for row in self.rows:
            if all(row[k] == v for k, v in filters.items()):
                out.append(row)
        return out


def _ci95(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / math.sqrt(len(values)))


def run_scenario(scenario: Scenario, threads: int = 1) -> ResultTable:
    """Run every (scheme, error variance, drop, packet size) cell.

    Cells are independent work units; the row order and all results are
    deterministic functions of the scenario regardless of ``threads``.
    Solver failures are recorded per cell and the scenario continues.
    """
    cells = [(si, d) for si in range(len(scenario.sweep)) for d in range(scenario.drops)]

    def worker(cell):
        si, d = cell
        try:
            return cell, _run_cell(scenario, si, d)
        except Exception as exc:  # recorded per-cell, scenario continues
            return cell, _error_rows(scenario, si, d, str(exc))

    results: dict[tuple, dict] = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for cell, rows in pool.map(worker, cells):
                results[cell] = rows
    else:
        for cell in cells:
            results[cell] = worker(cell)[1]

    ordered = []
    for scheme in scenario.schemes:
        for si in range(len(scenario.sweep)):
            for d in range(scenario.drops):
                for packet_bits in scenario.packet_sizes_bits:
                    ordered.append(results[(si, d)][(scheme, packet_bits)])
    return ResultTable(rows=ordered)


def desk_scenario(**overrides) -> Scenario:
    """The default desk-scale scenario with optional field overrides."""
    return replace(Scenario(), **overrides)


def paper_scenario(**overrides) -> Scenario:
    """Full-scale scenario: 3 macro + 9 pico APs, 60 users, period 10."""
    base = Scenario(
        topology=TopologyConfig(),
        drops=5,
        frames_per_drop=10,
        preschedule_period=10,
    )
    return replace(base, **overrides)
