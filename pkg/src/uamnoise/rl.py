"""Rollout collection, generalized advantage estimation, PPO updates, and the
training loop.

One shared policy acts for every aircraft (centralized learning, decentralized
execution). One training iteration = one full-episode rollout followed by one
PPO update over the collected batch.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nnet
from .errors import ValidationError
from .mdp import (INTRUDER_DIM, N_MAX_INTRUDERS, OWN_DIM, RewardConfig,
                  action_mask, agent_reward, encode_observation, observe)
from .network import Scenario
from .sim import Action, Phase, SimConfig, World


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 256
    iterations: int = 1000
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    hidden: int = 64
    seed: int = 0
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValidationError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValidationError("clip_eps must be positive")


@dataclass
class TraceRow:
    t: float
    id: str
    x_m: float
    y_m: float
    z_ft: float
    action: Action
    b_changing: bool


@dataclass
class RolloutResult:
    """Per-agent transition arrays plus episode bookkeeping."""

    own: np.ndarray          # (B, OWN_DIM)
    intr: np.ndarray         # (B, K, INTRUDER_DIM)
    intr_mask: np.ndarray    # (B, K)
    act_mask: np.ndarray     # (B, 3)
    actions: np.ndarray      # (B,)
    old_logp: np.ndarray     # (B,)
    rewards: np.ndarray      # (B,)
    values: np.ndarray       # (B,)
    dones: np.ndarray        # (B,)
    agent_slices: dict[str, slice]
    trace: list[TraceRow]
    los_count: int
    episode_returns: dict[str, float]


def hold_policy(*_args, **_kw):
    """Marker for the no-training baseline; see collect_rollout(params=None)."""
    return None


def collect_rollout(
    scenario: Scenario,
    params: dict | None,
    sim_config: SimConfig,
    reward_config: RewardConfig,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
) -> RolloutResult:
    """Run one full episode with every enroute aircraft acting from the shared
    params. params=None means the hold-only baseline. greedy (or baseline)
    episodes take argmax actions; otherwise actions are sampled from rng."""
    world = World(scenario, sim_config)
    layers = scenario.network.layers
    interval_steps = round(sim_config.decision_interval_s / sim_config.dt_s)

    records: dict[str, list] = {fl.id: [] for fl in scenario.flights}
    pending_reward: dict[str, int] = {}  # agent -> index in records awaiting reward
    trace: list[TraceRow] = []

    def finalize(ac_id: str, done: bool) -> None:
        idx = pending_reward.pop(ac_id, None)
        if idx is None:
            return
        ac = world.aircraft[ac_id]
        records[ac_id][idx]["reward"] = agent_reward(world, ac, reward_config)
        records[ac_id][idx]["done"] = done

    while not world.terminal:
        world.spawn_due_aircraft()
        if world.is_decision_tick():
            enroute = world.enroute_ids()
            # close out transitions for agents that arrived since the last tick
            for ac_id, rec in records.items():
                if ac_id in pending_reward and ac_id not in enroute:
                    finalize(ac_id, done=True)
            joint: dict[str, Action] = {}
            if enroute:
                obs_list = [observe(world, i, reward_config) for i in enroute]
                masks = [action_mask(world.aircraft[i], layers) for i in enroute]
                for ac_id in enroute:
                    finalize(ac_id, done=False)
                for ac_id, obs, mask in zip(enroute, obs_list, masks):
                    own_vec, intr_mat = encode_observation(obs)
                    probs, value = nnet.policy_forward(params, own_vec, intr_mat, mask) \
                        if params is not None else (np.array([1.0, 0.0, 0.0]), 0.0)
                    action, logp = nnet.sample_action(
                        probs, None if (greedy or params is None) else rng)
                    joint[ac_id] = Action(action)
                    records[ac_id].append({
                        "own": own_vec, "intr": intr_mat, "act_mask": np.asarray(mask),
                        "action": action, "logp": logp, "value": value,
                        "reward": 0.0, "done": False,
                    })
                    pending_reward[ac_id] = len(records[ac_id]) - 1
                    ac = world.aircraft[ac_id]
                    trace.append(TraceRow(world.t, ac_id, ac.x_m, ac.y_m, ac.z_ft,
                                          Action(action), ac.b_changing))
            world.step(joint)
            for _ in range(interval_steps - 1):
                if world.terminal:
                    break
                world.step()
        else:
            world.step()
    for ac_id in list(pending_reward):
        finalize(ac_id, done=True)

    return _pack(records, trace, world)


def _pack(records, trace, world) -> RolloutResult:
    flat = []
    agent_slices = {}
    for ac_id, recs in records.items():
        if not recs:
            continue
        agent_slices[ac_id] = slice(len(flat), len(flat) + len(recs))
        flat.extend(recs)
    b = len(flat)
    kmax = max((r["intr"].shape[0] for r in flat), default=0)
    kmax = max(kmax, 1)
    own = np.zeros((b, OWN_DIM))
    intr = np.zeros((b, kmax, INTRUDER_DIM))
    intr_mask = np.zeros((b, kmax), dtype=bool)
    act_mask = np.zeros((b, 3), dtype=bool)
    actions = np.zeros(b, dtype=int)
    old_logp = np.zeros(b)
    rewards = np.zeros(b)
    values = np.zeros(b)
    dones = np.zeros(b, dtype=bool)
    for i, r in enumerate(flat):
        own[i] = r["own"]
        n = r["intr"].shape[0]
        if n:
            intr[i, :n] = r["intr"]
            intr_mask[i, :n] = True
        act_mask[i] = r["act_mask"]
        actions[i] = r["action"]
        old_logp[i] = r["logp"]
        rewards[i] = r["reward"]
        values[i] = r["value"]
        dones[i] = r["done"]
    returns = {aid: float(rewards[sl].sum()) for aid, sl in agent_slices.items()}
    return RolloutResult(own, intr, intr_mask, act_mask, actions, old_logp,
                         rewards, values, dones, agent_slices, trace,
                         len(world.los_events), returns)


def compute_advantages(batch: RolloutResult, gamma: float, gae_lambda: float):
    """Per-agent GAE over each agent's trajectory; terminal bootstrap is 0.
    Advantages are normalized to zero mean / unit variance over the batch."""
    adv = np.zeros_like(batch.rewards)
    for sl in batch.agent_slices.values():
        r = batch.rewards[sl]
        v = batch.values[sl]
        d = batch.dones[sl]
        acc = 0.0
        out = np.zeros_like(r)
        for i in range(len(r) - 1, -1, -1):
            nxt = 0.0 if (d[i] or i + 1 >= len(r)) else v[i + 1]
            delta = r[i] + gamma * nxt - v[i]
            acc = delta + gamma * gae_lambda * (0.0 if d[i] else acc)
            out[i] = acc
        adv[sl] = out
    returns = adv + batch.values
    std = adv.std()
    norm = (adv - adv.mean()) / (std + 1e-8)
    return norm, returns


def ppo_update(params, batch: RolloutResult, config: TrainConfig, adam: nnet.Adam,
               rng: np.random.Generator):
    """Minibatched clipped-surrogate update; returns aggregate stats."""
    advantages, returns = compute_advantages(batch, config.gamma, config.gae_lambda)
    b = len(batch.actions)
    stats = {}
    for _ in range(config.epochs):
        order = rng.permutation(b)
        for start in range(0, b, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            mb = {
                "own": batch.own[idx], "intr": batch.intr[idx],
                "intr_mask": batch.intr_mask[idx], "act_mask": batch.act_mask[idx],
                "actions": batch.actions[idx], "old_logp": batch.old_logp[idx],
                "advantages": advantages[idx], "returns": returns[idx],
            }
            loss, grads, stats = nnet.ppo_loss_and_grads(
                params, mb, config.clip_eps, config.value_coef, config.entropy_coef)
            params = adam.step(params, grads)
    return params, stats


def top_layer_occupancy(trace, layers) -> float:
    """Fraction of enroute aircraft-ticks attributed to the highest layer."""
    if not trace:
        return 0.0
    from .metrics import attribute_layers
    attributed = attribute_layers(trace, layers)
    top = layers.levels_ft[-1]
    return sum(1 for z in attributed if z == top) / len(attributed)


def train(
    scenario: Scenario,
    train_config: TrainConfig,
    sim_config: SimConfig,
    reward_config: RewardConfig,
    checkpoint_dir=None,
    progress=None,
):
    """collect -> advantages -> update loop.

    Returns (params, metrics rows); each row is (iteration, mean episode
    return, LOS event count, top-layer occupancy). Fully reproducible for a
    fixed seed.
    """
    params = nnet.init_params(train_config.hidden, train_config.seed)
    adam = nnet.Adam(params, lr=train_config.learning_rate)
    rng = np.random.default_rng(train_config.seed + 1)
    layers = scenario.network.layers
    metrics: list[tuple[int, float, int, float]] = []

    for it in range(train_config.iterations):
        batch = collect_rollout(scenario, params, sim_config, reward_config, rng=rng)
        if len(batch.actions):
            params, _ = ppo_update(params, batch, train_config, adam, rng)
        mean_return = (sum(batch.episode_returns.values()) / len(batch.episode_returns)
                       if batch.episode_returns else 0.0)
        row = (it, mean_return, batch.los_count, top_layer_occupancy(batch.trace, layers))
        metrics.append(row)
        if progress is not None:
            progress(row)
        if (checkpoint_dir is not None and train_config.checkpoint_interval
                and (it + 1) % train_config.checkpoint_interval == 0):
            save_checkpoint(f"{checkpoint_dir}/checkpoint_{it + 1:06d}.json",
                            params, train_config, reward_config, layers)
    return params, metrics


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, params, train_config: TrainConfig,
                    reward_config: RewardConfig, layers) -> None:
    doc = {
        "version": 1,
        "hidden": nnet.hidden_size(params),
        "layers_ft": list(layers.levels_ft),
        "train_config": asdict(train_config),
        "reward_config": {
            "rho": reward_config.rho, "lam": reward_config.lam,
            "d_los_m": reward_config.d_los_m, "d_comm_m": reward_config.d_comm_m,
            "z_min_ft": reward_config.z_min_ft, "z_max_ft": reward_config.z_max_ft,
            "condition": reward_config.condition.value,
        },
        "params": nnet.params_to_doc(params),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path):
    """Returns (params, train_config, reward_config, layers_ft)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("version") != 1:
        raise ValidationError(f"unsupported checkpoint version in {path}")
    params = nnet.params_from_doc(doc["params"])
    tc = TrainConfig(**doc["train_config"])
    rc_doc = dict(doc["reward_config"])
    from .noise import Condition
    rc_doc["condition"] = Condition(rc_doc["condition"])
    rc = RewardConfig(**rc_doc)
    return params, tc, rc, tuple(doc["layers_ft"])
