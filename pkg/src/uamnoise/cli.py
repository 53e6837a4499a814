"""Command-line surface: simulate, train, eval, sweep, fit-npd, noise-report.

All randomness flows from --seed flags. Exit codes: 0 success, 1 validation
error, 2 runtime error.
"""
from __future__ import annotations

import csv
import functools
import json
import os
import sys

import click
import numpy as np

from . import metrics as metrics_mod
from . import rl
from .errors import ValidationError
from .mdp import RewardConfig
from .network import load_scenario
from .noise import NoiseSample, NpdModel, fit_npd
from .rl import TrainConfig, load_checkpoint, save_checkpoint
from .sim import SimConfig


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(2)
    return wrapper


@click.group()
def main():
    """Noise-aware UAM airspace simulator and trainer."""


def _sim_options(fn):
    for name, default in (("dt_s", 1.0), ("decision_interval_s", 10.0),
                          ("cruise_speed_mps", 67.0), ("climb_rate_fpm", 500.0),
                          ("d_comm_m", 2500.0), ("d_los_m", 150.0),
                          ("max_episode_time_s", 7200.0)):
        fn = click.option(f"--{name}", type=float, default=default, show_default=True)(fn)
    return fn


def _train_options(fn):
    for name, typ, default in (("gamma", float, 0.99), ("gae_lambda", float, 0.95),
                               ("clip_eps", float, 0.2), ("learning_rate", float, 3e-4),
                               ("epochs", int, 4), ("minibatch_size", int, 256),
                               ("entropy_coef", float, 0.01), ("value_coef", float, 0.5),
                               ("hidden", int, 64), ("checkpoint_interval", int, 0)):
        fn = click.option(f"--{name}", type=typ, default=default, show_default=True)(fn)
    return fn


def _reward_options(fn):
    fn = click.option("--lam", type=float, default=0.1, show_default=True)(fn)
    return fn


def _build_configs(scenario, kw, rho, seed, iterations=0):
    sim_cfg = SimConfig(
        dt_s=kw["dt_s"], decision_interval_s=kw["decision_interval_s"],
        cruise_speed_mps=kw["cruise_speed_mps"], climb_rate_fpm=kw["climb_rate_fpm"],
        d_comm_m=kw["d_comm_m"], d_los_m=kw["d_los_m"],
        max_episode_time_s=kw["max_episode_time_s"])
    reward_cfg = RewardConfig.for_layers(
        scenario.network.layers, rho, lam=kw.get("lam", 0.1),
        d_los_m=kw["d_los_m"], d_comm_m=kw["d_comm_m"])
    train_cfg = TrainConfig(
        gamma=kw.get("gamma", 0.99), gae_lambda=kw.get("gae_lambda", 0.95),
        clip_eps=kw.get("clip_eps", 0.2), learning_rate=kw.get("learning_rate", 3e-4),
        epochs=kw.get("epochs", 4), minibatch_size=kw.get("minibatch_size", 256),
        iterations=iterations, entropy_coef=kw.get("entropy_coef", 0.01),
        value_coef=kw.get("value_coef", 0.5), hidden=kw.get("hidden", 64),
        seed=seed, checkpoint_interval=kw.get("checkpoint_interval", 0))
    return sim_cfg, reward_cfg, train_cfg


def _load_policy(spec_str, scenario):
    """A checkpoint path or 'baseline:hold'. Returns (params, rho)."""
    if spec_str == "baseline:hold":
        return None, 0.0
    params, _tc, rc, layers_ft = load_checkpoint(spec_str)
    metrics_mod.check_compatible(layers_ft, scenario)
    return params, rc.rho


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--policy", required=True, help="checkpoint path or baseline:hold")
@click.option("--seed", type=int, required=True)
@click.option("--trace", "trace_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_sim_options
@_handle_errors
def simulate(scenario_path, policy, seed, trace_path, out_path, **kw):
    """Run one evaluation episode and report its metrics."""
    scenario = load_scenario(scenario_path)
    params, rho = _load_policy(policy, scenario)
    sim_cfg, reward_cfg, _ = _build_configs(scenario, kw, rho, seed)
    episode, _trace = metrics_mod.run_episode(
        params, scenario, sim_cfg, reward_cfg, seed=seed, greedy=True,
        trace_path=trace_path)
    if out_path:
        metrics_mod.export_metrics([episode], out_path, "json")
    rec = metrics_mod.metrics_record(episode)
    click.echo(json.dumps({k: rec[k] for k in rec}, default=str))


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--rho", type=float, required=True)
@click.option("--iterations", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--metrics-log", type=click.Path(), default=None,
              help="CSV of per-iteration training metrics")
@_sim_options
@_train_options
@_reward_options
@_handle_errors
def train(scenario_path, rho, iterations, seed, out_path, metrics_log, **kw):
    """Train a policy for one rho value and write a checkpoint."""
    scenario = load_scenario(scenario_path)
    sim_cfg, reward_cfg, train_cfg = _build_configs(scenario, kw, rho, seed, iterations)
    params, rows = rl.train(scenario, train_cfg, sim_cfg, reward_cfg)
    save_checkpoint(out_path, params, train_cfg, reward_cfg, scenario.network.layers)
    if metrics_log:
        _write_metrics_log(metrics_log, rows)
    click.echo(f"checkpoint written to {out_path} ({len(rows)} iterations)")


def _write_metrics_log(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_return", "los_count", "top_layer_occupancy"])
        for it, ret, los, top in rows:
            writer.writerow([it, repr(ret), los, repr(top)])


@main.command(name="eval")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--seeds", required=True, help="comma-separated seed list")
@click.option("--out", "out_path", required=True, type=click.Path())
@_sim_options
@_handle_errors
def eval_cmd(scenario_path, checkpoint, seeds, out_path, **kw):
    """Evaluate a checkpoint over several seeds; write a metrics CSV."""
    scenario = load_scenario(scenario_path)
    params, rho = _load_policy(checkpoint, scenario)
    sim_cfg, reward_cfg, _ = _build_configs(scenario, kw, rho, 0)
    episodes = []
    for seed in _parse_int_list(seeds):
        episode, _ = metrics_mod.run_episode(
            params, scenario, sim_cfg, reward_cfg, seed=seed, greedy=True)
        episodes.append(episode)
    metrics_mod.export_metrics(episodes, out_path, "csv")
    click.echo(f"wrote {len(episodes)} rows to {out_path}")


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--rhos", required=True, help="comma-separated rho list")
@click.option("--iterations", type=int, required=True)
@click.option("--seeds", required=True, help="comma-separated seed list")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True,
              help="training seed")
@_sim_options
@_train_options
@_reward_options
@_handle_errors
def sweep(scenario_path, rhos, iterations, seeds, out_dir, seed, **kw):
    """Train one policy per rho, evaluate over the seeds, emit tradeoff tables."""
    scenario = load_scenario(scenario_path)
    rho_values = [float(tok) for tok in rhos.split(",") if tok != ""]
    seed_values = _parse_int_list(seeds)
    sim_cfg, _, train_cfg = _build_configs(scenario, kw, 0.0, seed, iterations)
    os.makedirs(out_dir, exist_ok=True)
    result = metrics_mod.sweep_rho(rho_values, scenario, train_cfg, sim_cfg, seed_values)
    metrics_mod.export_sweep_csv(result, os.path.join(out_dir, "sweep_episodes.csv"))
    agg_path = os.path.join(out_dir, "sweep_tradeoff.csv")
    aggregates = result.aggregates()
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        layer_cols = [f"hist_{z:g}" for z in aggregates[0]["histogram"]] if aggregates else []
        writer.writerow(["rho", "median_noise_increase_db", "mean_los",
                         "top_layer_fraction", *layer_cols])
        for agg in aggregates:
            writer.writerow(
                [f"{agg['rho']:.6g}",
                 "" if agg["median_noise_increase_db"] is None
                 else f"{agg['median_noise_increase_db']:.6g}",
                 f"{agg['mean_los']:.6g}", f"{agg['top_layer_fraction']:.6g}",
                 *[f"{v:.6g}" for v in agg["histogram"].values()]])
    click.echo(f"sweep results in {out_dir}")


@main.command(name="fit-npd")
@click.option("--samples", "samples_path", required=True, type=click.Path(),
              help="CSV with columns distance_ft,level_db")
@click.option("--out", "out_path", required=True, type=click.Path())
@_handle_errors
def fit_npd_cmd(samples_path, out_path):
    """Fit quadratic-in-log regression coefficients to noise samples."""
    samples = []
    try:
        with open(samples_path, newline="") as fh:
            for rec in csv.DictReader(fh):
                samples.append(NoiseSample(float(rec["distance_ft"]), float(rec["level_db"])))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"cannot read samples {samples_path}: {exc}") from exc
    c0, c1, c2, rms = fit_npd(samples)
    with open(out_path, "w") as fh:
        json.dump({"c0": c0, "c1": c1, "c2": c2, "rms_residual": rms}, fh, indent=2)
        fh.write("\n")
    click.echo(f"c0={c0:.6g} c1={c1:.6g} c2={c2:.6g} rms={rms:.3g}")


@main.command(name="noise-report")
@click.option("--trace", "trace_path", required=True, type=click.Path())
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@_handle_errors
def noise_report(trace_path, scenario_path, out_path):
    """Per-zone noise-increase time series recomputed from a saved trace."""
    scenario = load_scenario(scenario_path)
    trace = metrics_mod.read_trace(trace_path)
    series = metrics_mod.zone_noise_series(trace, scenario.network)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "zone", "increase_db"])
        for zid in sorted(series):
            for t, inc in series[zid]:
                writer.writerow([f"{t:.6g}", zid,
                                 "" if inc == float("-inf") else f"{inc:.6g}"])
    click.echo(f"wrote zone report to {out_path}")


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError as exc:
        raise ValidationError(f"bad integer list '{text}'") from exc


if __name__ == "__main__":
    main()
