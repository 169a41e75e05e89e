"""Command-line entry point: scenario files, presets, runs and plots.

Scenario files are TOML with radio-engineering units (dBm, Mbps, MHz); see
the README for the full grammar.  An empty file yields the all-defaults
desk-scale scenario.  ``run`` writes a manifest (the resolved scenario
snapshot plus seed), a raw per-cell CSV and an aggregated CSV; re-running a
manifest reproduces the CSVs byte-for-byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .channel import ChannelParams
from .harness import (
    AGG_COLUMNS,
    RAW_COLUMNS,
    SCHEMES,
    ResultTable,
    Scenario,
    desk_scenario,
    paper_scenario,
    run_scenario,
)
from .topology import TopologyConfig
from .units import dbm_to_watts, kbit_to_bits, mbps_to_bps, mhz_to_hz
from .wsr import SolverParams

MANIFEST_SCHEMA = "fogransim-manifest-v1"

PRESETS = {
    "desk-scale": desk_scenario,
    "paper-scale": paper_scenario,
}


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate."""


_TOPOLOGY_KEYS = {
    "macro_count": ("macro_count", int, None),
    "pico_count": ("pico_count", int, None),
    "users": ("user_count", int, None),
    "macro_antennas": ("macro_antennas", int, None),
    "pico_antennas": ("pico_antennas", int, None),
    "macro_power_dbm": ("macro_power_w", float, dbm_to_watts),
    "pico_power_dbm": ("pico_power_w", float, dbm_to_watts),
    "macro_fronthaul_mbps": ("macro_fronthaul_bps", float, mbps_to_bps),
    "pico_fronthaul_mbps": ("pico_fronthaul_bps", float, mbps_to_bps),
    "plane_extent_m": ("plane_extent_m", float, None),
    "min_ap_user_distance_m": ("min_ap_user_distance_m", float, None),
    "user_weight": ("user_weight", float, None),
}

_RADIO_KEYS = {
    "bandwidth_mhz": ("bandwidth_hz", float, mhz_to_hz),
    "noise_psd_dbm_hz": ("noise_psd_w_per_hz", float, dbm_to_watts),
    "macro_pathloss_offset_db": ("macro_pathloss_offset_db", float, None),
    "macro_pathloss_slope_db": ("macro_pathloss_slope_db", float, None),
    "pico_pathloss_offset_db": ("pico_pathloss_offset_db", float, None),
    "pico_pathloss_slope_db": ("pico_pathloss_slope_db", float, None),
    "shadowing_std_db": ("shadowing_std_db", float, None),
    "fading": ("fading", str, None),
}

_SOLVER_KEYS = {
    "max_iterations": ("max_iterations", int, None),
    "tolerance": ("tolerance", float, None),
    "tau": ("tau", float, None),
    "dual_step": ("dual_step", float, None),
    "max_dual_updates": ("max_dual_updates", int, None),
    "sparsity_passes": ("sparsity_passes", int, None),
    "sparsity_weight": ("sparsity_weight", float, None),
    "concentration_threshold": ("concentration_threshold", float, None),
    "presched_inner_iterations": ("presched_inner_iterations", int, None),
}

_SCHEME_ALIASES = {
    "cranref": "CranRef",
    "cran-ref": "CranRef",
    "cran": "CranRef",
    "fogranprop": "FogranProp",
    "fogran-prop": "FogranProp",
    "fogran": "FogranProp",
}


def _convert_section(section: dict, keymap: dict, where: str) -> dict:
    out = {}
    for key, value in section.items():
        if key not in keymap:
            raise ScenarioError(f"unknown key '{where}.{key}'")
        field, typ, conv = keymap[key]
        try:
            value = typ(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"key '{where}.{key}' expects a {typ.__name__}") from None
        out[field] = conv(value) if conv else value
    return out


def scenario_from_mapping(data: dict, source: str = "<scenario>") -> Scenario:
    """Build a Scenario from parsed TOML data, rejecting unknown keys."""
    data = dict(data)
    kwargs = {}

    topo = _convert_section(data.pop("topology", {}), _TOPOLOGY_KEYS, "topology")
    if topo:
        kwargs["topology"] = dataclasses.replace(Scenario().topology, **topo)
    radio = _convert_section(data.pop("radio", {}), _RADIO_KEYS, "radio")
    if radio:
        kwargs["channel"] = dataclasses.replace(ChannelParams(), **radio)
    solver = _convert_section(data.pop("solver", {}), _SOLVER_KEYS, "solver")
    if solver:
        kwargs["solver"] = dataclasses.replace(SolverParams(), **solver)

    scalar_keys = {
        "master_seed": int,
        "drops": int,
        "frames_per_drop": int,
        "preschedule_period": int,
        "leakage_scope": str,
        "cran_latency_ms": float,
        "fogran_latency_ms": float,
    }
    for key, typ in scalar_keys.items():
        if key in data:
            value = typ(data.pop(key))
            if key.endswith("_latency_ms"):
                kwargs[key.replace("_ms", "_s")] = value / 1e3
            else:
                kwargs[key] = value

    if "sweep" in data:
        sweep = data.pop("sweep")
        if not isinstance(sweep, list) or not sweep:
            raise ScenarioError("key 'sweep' expects a non-empty list of error variances")
        values = []
        for entry in sweep:
            entry = float(entry)
            if entry < 0:
                raise ScenarioError(f"key 'sweep' entries must be >= 0 (got {entry})")
            values.append(entry)
        kwargs["sweep"] = tuple(values)

    if "packet_sizes_kbit" in data:
        sizes = data.pop("packet_sizes_kbit")
        if not isinstance(sizes, list) or not sizes:
            raise ScenarioError("key 'packet_sizes_kbit' expects a non-empty list")
        kwargs["packet_sizes_bits"] = tuple(kbit_to_bits(float(p)) for p in sizes)

    if "schemes" in data:
        names = data.pop("schemes")
        if not isinstance(names, list) or not names:
            raise ScenarioError("key 'schemes' expects a non-empty list")
        resolved = []
        for name in names:
            canonical = _SCHEME_ALIASES.get(str(name).lower())
            if canonical is None:
                raise ScenarioError(f"key 'schemes': unknown scheme '{name}' (use {SCHEMES})")
            resolved.append(canonical)
        kwargs["schemes"] = tuple(dict.fromkeys(resolved))

    if data:
        raise ScenarioError(f"unknown key '{next(iter(data))}' in {source}")

    try:
        return Scenario(**kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def _scenario_to_mapping(scenario: Scenario) -> dict:
    """Resolved SI-units snapshot for the manifest (round-trippable)."""
    return {
        "topology": dataclasses.asdict(scenario.topology),
        "channel": dataclasses.asdict(scenario.channel),
        "solver": dataclasses.asdict(scenario.solver),
        "sweep": list(scenario.sweep),
        "drops": scenario.drops,
        "frames_per_drop": scenario.frames_per_drop,
        "preschedule_period": scenario.preschedule_period,
        "packet_sizes_bits": list(scenario.packet_sizes_bits),
        "schemes": list(scenario.schemes),
        "master_seed": scenario.master_seed,
        "leakage_scope": scenario.leakage_scope,
        "cran_latency_s": scenario.cran_latency_s,
        "fogran_latency_s": scenario.fogran_latency_s,
    }


def _scenario_from_snapshot(snapshot: dict) -> Scenario:
    return Scenario(
        topology=TopologyConfig(**snapshot["topology"]),
        channel=ChannelParams(**snapshot["channel"]),
        solver=SolverParams(**snapshot["solver"]),
        sweep=tuple(snapshot["sweep"]),
        drops=snapshot["drops"],
        frames_per_drop=snapshot["frames_per_drop"],
        preschedule_period=snapshot["preschedule_period"],
        packet_sizes_bits=tuple(snapshot["packet_sizes_bits"]),
        schemes=tuple(snapshot["schemes"]),
        master_seed=snapshot["master_seed"],
        leakage_scope=snapshot["leakage_scope"],
        cran_latency_s=snapshot["cran_latency_s"],
        fogran_latency_s=snapshot["fogran_latency_s"],
    )


def parse_scenario(path) -> Scenario:
    """Load a scenario from a preset name, TOML file, or manifest JSON."""
    name = str(path)
    if name in PRESETS:
        return PRESETS[name]()
    file = Path(path)
    if not file.exists():
        raise ScenarioError(f"scenario '{name}' is neither a preset ({', '.join(PRESETS)}) nor a file")
    if file.suffix == ".json":
        manifest = json.loads(file.read_text())
        if manifest.get("schema") != MANIFEST_SCHEMA:
            raise ScenarioError(f"{name}: not a {MANIFEST_SCHEMA} manifest")
        return _scenario_from_snapshot(manifest["resolved_scenario"])
    try:
        data = tomllib.loads(file.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{name}: {exc}") from None
    return scenario_from_mapping(data, source=name)


def _write_manifest(path: Path, scenario: Scenario, source: str, out_dir: Path, started, finished):
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "scenario_source": source,
        "master_seed": scenario.master_seed,
        "output_directory": str(out_dir),
        "started_utc": started.isoformat(),
        "finished_utc": finished.isoformat(),
        "resolved_scenario": _scenario_to_mapping(scenario),
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")


def _read_results_csv(path: Path) -> list[dict]:
    import csv as _csv

    rows = []
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = _csv.DictReader(lines)
    for record in reader:
        row = dict(record)
        for key in ("error_variance", "packet_bits", "sum_rate_bps", "mean_delay_s"):
            row[key] = float(row[key])
        row["drop"] = int(row["drop"])
        rows.append(row)
    return rows


def _plot_results(rows: list[dict], out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = ResultTable(rows=[dict(r, status=r.get("status", "ok")) for r in rows])
    agg = table.aggregate()
    schemes = sorted({a["scheme"] for a in agg})
    outputs = []

    fig, ax = plt.subplots(figsize=(6, 4))
    packet0 = agg[0]["packet_bits"]
    for scheme in schemes:
        points = [a for a in agg if a["scheme"] == scheme and a["packet_bits"] == packet0]
        xs = [a["error_variance"] for a in points]
        ys = [a["sum_rate_mean_bps"] / 1e6 for a in points]
        err = [a["sum_rate_ci95_bps"] / 1e6 for a in points]
        ax.errorbar(xs, ys, yerr=err, marker="o", capsize=3, label=scheme)
    ax.set_xlabel("CSI error variance")
    ax.set_ylabel("sum-rate [Mbps]")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    rate_path = out_dir / "rate_sweep.svg"
    fig.savefig(rate_path)
    plt.close(fig)
    outputs.append(rate_path)

    packets = sorted({a["packet_bits"] for a in agg})
    fig, axes = plt.subplots(1, len(packets), figsize=(6 * len(packets), 4), squeeze=False)
    for ax, packet in zip(axes[0], packets):
        for scheme in schemes:
            points = [a for a in agg if a["scheme"] == scheme and a["packet_bits"] == packet]
            xs = [a["error_variance"] for a in points]
            ys = [a["mean_delay_mean_s"] * 1e3 for a in points]
            err = [a["mean_delay_ci95_s"] * 1e3 for a in points]
            ax.errorbar(xs, ys, yerr=err, marker="o", capsize=3, label=scheme)
        ax.set_xlabel("CSI error variance")
        ax.set_ylabel("mean packet delay [ms]")
        ax.set_title(f"packet {packet / 1e3:g} kbit")
        ax.set_yscale("log")
        ax.legend()
        ax.grid(True, alpha=0.4)
    fig.tight_layout()
    delay_path = out_dir / "delay_sweep.svg"
    fig.savefig(delay_path)
    plt.close(fig)
    outputs.append(delay_path)
    return outputs


def _cmd_run(args) -> int:
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, master_seed=args.seed)

    out_dir = Path(args.out) if args.out else Path(f"{Path(str(args.scenario)).stem}-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc)
    table = run_scenario(scenario, threads=args.threads)
    finished = datetime.datetime.now(datetime.timezone.utc)

    table.to_csv(out_dir / "raw.csv")
    table.aggregate_to_csv(out_dir / "agg.csv")
    _write_manifest(out_dir / "manifest.json", scenario, str(args.scenario), out_dir, started, finished)
    if args.plot:
        _plot_results(table.rows, out_dir)
    failures = [r for r in table.rows if r["status"] != "ok"]
    print(f"wrote {out_dir}/raw.csv ({len(table.rows)} rows, {len(failures)} failed cells)")
    return 0 if not failures else 1


def _cmd_presets(_args) -> int:
    for name, factory in PRESETS.items():
        scenario = factory()
        topo = scenario.topology
        print(
            f"{name}: {topo.macro_count} macro + {topo.pico_count} pico APs, "
            f"{topo.user_count} users, {scenario.drops} drops, "
            f"T={scenario.preschedule_period}, sweep={list(scenario.sweep)}"
        )
    return 0


def _cmd_validate(args) -> int:
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    rows = len(scenario.schemes) * len(scenario.sweep) * scenario.drops * len(
        scenario.packet_sizes_bits
    )
    print(f"ok: {args.scenario} ({rows} result rows per run)")
    return 0


def _cmd_plot(args) -> int:
    raw = Path(args.raw_csv)
    if not raw.exists():
        print(f"no such results file: {raw}", file=sys.stderr)
        return 2
    try:
        rows = _read_results_csv(raw)
    except (KeyError, ValueError) as exc:
        print(f"could not read {raw}: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out) if args.out else raw.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in _plot_results(rows, out_dir):
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fogransim",
        description="Downlink CRAN/FogRAN simulator: centralized beamforming vs. "
        "pre-scheduling with local SLNR beamforming under imperfect CSI.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario (file, preset name, or manifest)")
    run.add_argument("scenario", help=f"scenario TOML, manifest JSON, or preset: {', '.join(PRESETS)}")
    run.add_argument("--out", help="output directory (default: <scenario>-out)")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads over cells")
    run.add_argument("--plot", action="store_true", help="also write SVG charts")
    run.set_defaults(func=_cmd_run)

    presets = sub.add_parser("presets", help="list built-in scenario presets")
    presets.set_defaults(func=_cmd_presets)

    validate = sub.add_parser("validate", help="parse and validate a scenario without running")
    validate.add_argument("scenario")
    validate.set_defaults(func=_cmd_validate)

    plot = sub.add_parser("plot", help="re-plot a previous run's raw.csv")
    plot.add_argument("raw_csv")
    plot.add_argument("--out", help="output directory (default: alongside the CSV)")
    plot.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
