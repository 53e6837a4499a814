"""Episode metrics, trace I/O, and the rho-sweep harness.

All trace-derivable metrics (altitude histogram, per-zone noise series) are
pure functions of the decision-tick trace, so recomputing them from a saved
trace file reproduces the live values exactly. LOS counts come from the
simulator's event log.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import nnet, rl
from .errors import ValidationError
from .mdp import RewardConfig, agent_reward
from .network import AltitudeLayerSet, Network, Scenario
from .noise import NO_CONTRIBUTION, Condition, NpdModel, cumulative_increase, single_event_level
from .rl import TraceRow, TrainConfig, collect_rollout
from .sim import Action, SimConfig

TRACE_COLUMNS = ("t", "id", "x", "y", "z_ft", "action", "b_changing")


@dataclass
class EpisodeMetrics:
    los_count: int
    zone_series: dict[str, list[tuple[float, float]]]  # zone -> [(t, increase)]
    zone_summary: dict[str, tuple[float | None, float | None]]  # zone -> (max, mean)
    noise_increase_median_db: float | None  # median over zones of time-mean increase
    noise_increase_max_db: float | None
    histogram: dict[float, float]  # layer -> fraction of aircraft-ticks
    mean_return: float
    wall_time_s: float
    seed: int = 0
    rho: float | None = None


# ---------------------------------------------------------------------------
# Trace I/O


def write_trace(trace: list[TraceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow([repr(row.t), row.id, repr(row.x_m), repr(row.y_m),
                             repr(row.z_ft), int(row.action), int(row.b_changing)])


def read_trace(path) -> list[TraceRow]:
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append(TraceRow(float(rec["t"]), rec["id"], float(rec["x"]),
                                     float(rec["y"]), float(rec["z_ft"]),
                                     Action(int(rec["action"])),
                                     bool(int(rec["b_changing"]))))
    except (OSError, KeyError, ValueError) as exc:
        raise ValidationError(f"cannot read trace {path}: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# Altitude occupancy


def attribute_layers(trace: list[TraceRow], layers: AltitudeLayerSet) -> list[float]:
    """Layer attributed to each trace row; mid-transition rows go to the layer
    the aircraft departed (its last level layer)."""
    levels = set(layers.levels_ft)
    last_level: dict[str, float] = {}
    out = []
    for row in sorted(trace, key=lambda r: (r.t, r.id)):
        if row.z_ft in levels:
            last_level[row.id] = row.z_ft
            out.append(row.z_ft)
        else:
            out.append(last_level.get(row.id, layers.z_min))
    return out


def altitude_histogram(trace: list[TraceRow], layers: AltitudeLayerSet) -> dict[float, float]:
    """Fraction of enroute aircraft-ticks per layer; fractions sum to 1."""
    if not trace:
        raise ValidationError("cannot build a histogram from an empty trace")
    attributed = attribute_layers(trace, layers)
    hist = {z: 0.0 for z in layers.levels_ft}
    for z in attributed:
        hist[z] += 1.0
    return {z: c / len(attributed) for z, c in hist.items()}


def histogram_entropy(hist: dict[float, float]) -> float:
    return -sum(p * math.log(p) for p in hist.values() if p > 0.0)


# ---------------------------------------------------------------------------
# Zone noise from a trace


def nearest_link(network: Network, x: float, y: float) -> str:
    """Link whose segment is closest to (x, y); id tie-break."""
    best = (math.inf, "")
    for lid in sorted(network.links):
        (ax, ay), (bx, by) = network.link_segment(lid)
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        s = 0.0 if L2 == 0.0 else max(0.0, min(1.0, ((x - ax) * dx + (y - ay) * dy) / L2))
        d = math.hypot(x - (ax + s * dx), y - (ay + s * dy))
        if d < best[0]:
            best = (d, lid)
    return best[1]


def zone_noise_series(
    trace: list[TraceRow], network: Network,
    model: NpdModel | None = None,
    condition: Condition = Condition.L_CENTERLINE,
) -> dict[str, list[tuple[float, float]]]:
    """Per-zone cumulative increase at each decision tick. Slant distance is
    the aircraft's altitude (receiver directly beneath); each aircraft is
    attributed to the zone of its current (nearest) link."""
    model = model or NpdModel()
    if not network.zones:
        return {}
    ticks: dict[float, dict[str, list[float]]] = {}
    for row in trace:
        zone = network.zone_of(nearest_link(network, row.x_m, row.y_m))
        level = single_event_level(model, condition, row.z_ft)
        ticks.setdefault(row.t, {}).setdefault(zone, []).append(level)
    series: dict[str, list[tuple[float, float]]] = {z: [] for z in network.zones}
    for t in sorted(ticks):
        for zid, zone in network.zones.items():
            levels = ticks[t].get(zid, [])
            series[zid].append((t, cumulative_increase(levels, zone.ambient_db)))
    return series


def summarize_zones(series) -> dict[str, tuple[float | None, float | None]]:
    """Per-zone (max, mean) of the increase over ticks with any contribution;
    (None, None) for zones never overflown."""
    out = {}
    for zid, points in series.items():
        vals = [v for _, v in points if v != NO_CONTRIBUTION]
        out[zid] = (max(vals), sum(vals) / len(vals)) if vals else (None, None)
    return out


def _median(vals: list[float]) -> float | None:
    if not vals:
        return None
    s = sorted(vals)
    n = len(s)
    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def metrics_from_trace(trace, network, los_count, mean_return, wall_time_s=0.0,
                       seed=0, rho=None) -> EpisodeMetrics:
    series = zone_noise_series(trace, network)
    summary = summarize_zones(series)
    means = [m for _, m in summary.values() if m is not None]
    maxes = [mx for mx, _ in summary.values() if mx is not None]
    return EpisodeMetrics(
        los_count=los_count,
        zone_series=series,
        zone_summary=summary,
        noise_increase_median_db=_median(means),
        noise_increase_max_db=max(maxes) if maxes else None,
        histogram=altitude_histogram(trace, network.layers),
        mean_return=mean_return,
        wall_time_s=wall_time_s,
        seed=seed,
        rho=rho,
    )


# ---------------------------------------------------------------------------
# Episode evaluation


def run_episode(
    params: dict | None,
    scenario: Scenario,
    sim_config: SimConfig,
    reward_config: RewardConfig,
    seed: int = 0,
    greedy: bool = True,
    trace_path=None,
) -> tuple[EpisodeMetrics, list[TraceRow]]:
    """Full episode under the policy (params=None is the hold-only baseline)."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    batch = collect_rollout(scenario, params, sim_config, reward_config,
                            rng=rng, greedy=greedy)
    mean_return = (sum(batch.episode_returns.values()) / len(batch.episode_returns)
                   if batch.episode_returns else 0.0)
    metrics = metrics_from_trace(batch.trace, scenario.network, batch.los_count,
                                 mean_return, time.perf_counter() - start, seed,
                                 reward_config.rho)
    if trace_path is not None:
        write_trace(batch.trace, trace_path)
    return metrics, batch.trace


def check_compatible(layers_ft, scenario: Scenario) -> None:
    if tuple(layers_ft) != tuple(scenario.network.layers.levels_ft):
        raise ValidationError(
            f"checkpoint layers {layers_ft} do not match scenario layers "
            f"{scenario.network.layers.levels_ft}")


# ---------------------------------------------------------------------------
# rho sweep


@dataclass
class SweepRow:
    rho: float
    seed: int
    metrics: EpisodeMetrics


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def aggregates(self) -> list[dict]:
        """One dict per rho: median noise increase, mean LOS, mean top-layer
        fraction, mean histogram."""
        by_rho: dict[float, list[SweepRow]] = {}
        for row in self.rows:
            by_rho.setdefault(row.rho, []).append(row)
        out = []
        for rho in sorted(by_rho):
            group = by_rho[rho]
            layer_keys = list(group[0].metrics.histogram)
            medians = [r.metrics.noise_increase_median_db for r in group
                       if r.metrics.noise_increase_median_db is not None]
            out.append({
                "rho": rho,
                "median_noise_increase_db": _median(medians),
                "mean_los": sum(r.metrics.los_count for r in group) / len(group),
                "top_layer_fraction": sum(
                    r.metrics.histogram[layer_keys[-1]] for r in group) / len(group),
                "histogram": {
                    z: sum(r.metrics.histogram[z] for r in group) / len(group)
                    for z in layer_keys
                },
            })
        return out


def sweep_rho(
    rho_values: list[float],
    scenario: Scenario,
    train_config: TrainConfig,
    sim_config: SimConfig,
    seeds: list[int],
    trained: dict[float, dict] | None = None,
    progress=None,
) -> SweepResult:
    """Train (or reuse) one policy per rho and evaluate it over the seeds."""
    rows: list[SweepRow] = []
    trained = dict(trained or {})
    for rho in rho_values:
        if not 0.0 <= rho <= 1.0:
            raise ValidationError(f"rho must be in [0, 1], got {rho}")
        reward_config = RewardConfig.for_layers(
            scenario.network.layers, rho,
            d_los_m=sim_config.d_los_m, d_comm_m=sim_config.d_comm_m)
        if rho not in trained:
            params, _ = rl.train(scenario, train_config, sim_config, reward_config,
                                 progress=progress)
            trained[rho] = params
        for seed in seeds:
            metrics, _ = run_episode(trained[rho], scenario, sim_config,
                                     reward_config, seed=seed, greedy=True)
            rows.append(SweepRow(rho, seed, metrics))
    return SweepResult(rows)


# ---------------------------------------------------------------------------
# Export


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value == NO_CONTRIBUTION:
            return ""
        return f"{value:.6g}"
    return str(value)


def metrics_record(m: EpisodeMetrics) -> dict:
    rec = {
        "rho": m.rho,
        "seed": m.seed,
        "los_count": m.los_count,
        "median_noise_increase_db": m.noise_increase_median_db,
        "max_noise_increase_db": m.noise_increase_max_db,
        "mean_return": m.mean_return,
    }
    for z, frac in m.histogram.items():
        rec[f"hist_{z:g}"] = frac
    return rec


def export_metrics(metrics_list: list[EpisodeMetrics], path, fmt: str) -> None:
    """Stable column order; floats at 6 significant digits; the no-contribution
    sentinel serializes as empty cell / null."""
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown export format '{fmt}'")
    records = [metrics_record(m) for m in metrics_list]
    columns: list[str] = []
    for rec in records:
        for key in rec:
            if key not in columns:
                columns.append(key)
    if not columns:
        columns = ["rho", "seed", "los_count", "median_noise_increase_db",
                   "max_noise_increase_db", "mean_return"]
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                for rec in records:
                    writer.writerow([_fmt(rec.get(c)) for c in columns])
        else:
            doc = []
            for rec in records:
                clean = {}
                for c in columns:
                    v = rec.get(c)
                    if isinstance(v, float) and v == NO_CONTRIBUTION:
                        v = None
                    clean[c] = float(f"{v:.6g}") if isinstance(v, float) else v
                doc.append(clean)
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
                fh.write("\n")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc}") from exc


def export_sweep_csv(result: SweepResult, path) -> None:
    """Per-(rho, seed) rows followed by nothing else; aggregates go to a second
    file written by the CLI."""
    export_metrics([row.metrics for row in result.rows], path, "csv")
