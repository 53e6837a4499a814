"""Attention-pooling policy/value network with hand-written reverse-mode
gradients over its fixed computation graph.

Architecture: two-layer tanh encoders for the own state and each intruder,
single-head scaled dot-product attention pooling the intruder set (query from
the own embedding), a tanh trunk over [own, pooled], and linear policy (3
logits) and value heads. All math is float64 numpy; no learning framework.

Batch layout: own (B, 6); intruders padded to (B, K, 5) with a validity mask
(B, K); action masks (B, 3). Rows with zero valid intruders pool to the zero
vector. Disallowed logits are forced to -inf so masked actions have exactly
zero probability.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SimulationError, ValidationError
from .mdp import INTRUDER_DIM, OWN_DIM

N_ACTIONS = 3

PARAM_KEYS = (
    "w1", "b1", "w2", "b2",        # own encoder
    "v1", "c1", "v2", "c2",        # intruder encoder
    "wq", "wk", "wv",              # attention
    "wt", "bt",                    # trunk
    "wp", "bp",                    # policy head
    "wu", "bu",                    # value head
)


def init_params(hidden: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)

    def dense(n_in, n_out, scale=None):
        s = scale if scale is not None else 1.0 / np.sqrt(n_in)
        return rng.normal(0.0, s, size=(n_in, n_out))

    h = hidden
    return {
        "w1": dense(OWN_DIM, h), "b1": np.zeros(h),
        "w2": dense(h, h), "b2": np.zeros(h),
        "v1": dense(INTRUDER_DIM, h), "c1": np.zeros(h),
        "v2": dense(h, h), "c2": np.zeros(h),
        "wq": dense(h, h), "wk": dense(h, h), "wv": dense(h, h),
        "wt": dense(2 * h, h), "bt": np.zeros(h),
        "wp": dense(h, N_ACTIONS, scale=0.01), "bp": np.zeros(N_ACTIONS),
        "wu": dense(h, 1, scale=0.01), "bu": np.zeros(1),
    }


def hidden_size(params: dict[str, np.ndarray]) -> int:
    return params["w1"].shape[1]


def forward(params, own, intr, intr_mask, act_mask):
    """Batched forward pass.

    Returns (masked logits (B,3), value (B,), cache for backward). Masked
    logit entries are -inf.
    """
    h = hidden_size(params)
    e1 = np.tanh(own @ params["w1"] + params["b1"])
    e2 = np.tanh(e1 @ params["w2"] + params["b2"])

    f1 = np.tanh(intr @ params["v1"] + params["c1"])
    f2 = np.tanh(f1 @ params["v2"] + params["c2"])

    q = e2 @ params["wq"]
    k = f2 @ params["wk"]
    v = f2 @ params["wv"]
    scores = np.einsum("bh,bkh->bk", q, k) / np.sqrt(h)
    att = _masked_softmax(scores, intr_mask)
    pooled = np.einsum("bk,bkh->bh", att, v)

    t0 = np.concatenate([e2, pooled], axis=1)
    t1 = np.tanh(t0 @ params["wt"] + params["bt"])
    logits = t1 @ params["wp"] + params["bp"]
    value = (t1 @ params["wu"] + params["bu"])[:, 0]
    masked_logits = np.where(act_mask, logits, -np.inf)

    cache = dict(own=own, intr=intr, intr_mask=intr_mask, act_mask=act_mask,
                 e1=e1, e2=e2, f1=f1, f2=f2, q=q, k=k, v=v, att=att,
                 pooled=pooled, t0=t0, t1=t1)
    return masked_logits, value, cache


def backward(params, cache, dlogits, dvalue):
    """Gradients of a scalar loss given dL/dlogits and dL/dvalue.

    dlogits must be zero at masked entries (the -inf offsets are constants).
    """
    h = hidden_size(params)
    t1 = cache["t1"]
    grads = {}

    grads["wp"] = t1.T @ dlogits
    grads["bp"] = dlogits.sum(axis=0)
    grads["wu"] = (t1 * dvalue[:, None]).sum(axis=0)[:, None]
    grads["bu"] = np.array([dvalue.sum()])

    dt1 = dlogits @ params["wp"].T + dvalue[:, None] * params["wu"][:, 0][None, :]
    dz_t = dt1 * (1.0 - t1 * t1)
    grads["wt"] = cache["t0"].T @ dz_t
    grads["bt"] = dz_t.sum(axis=0)
    dt0 = dz_t @ params["wt"].T
    de2 = dt0[:, :h].copy()
    dpooled = dt0[:, h:]

    att, v, k, q = cache["att"], cache["v"], cache["k"], cache["q"]
    datt = np.einsum("bh,bkh->bk", dpooled, v)
    dv = att[:, :, None] * dpooled[:, None, :]
    dscores = att * (datt - (att * datt).sum(axis=1, keepdims=True))
    dscores = np.where(cache["intr_mask"], dscores, 0.0) / np.sqrt(h)
    dq = np.einsum("bk,bkh->bh", dscores, k)
    dk = dscores[:, :, None] * q[:, None, :]

    e2, f2, f1 = cache["e2"], cache["f2"], cache["f1"]
    grads["wq"] = e2.T @ dq
    de2 += dq @ params["wq"].T
    b, kk, _ = f2.shape
    f2_flat = f2.reshape(b * kk, h)
    grads["wk"] = f2_flat.T @ dk.reshape(b * kk, h)
    grads["wv"] = f2_flat.T @ dv.reshape(b * kk, h)
    df2 = dk @ params["wk"].T + dv @ params["wv"].T

    dz_f2 = df2 * (1.0 - f2 * f2)
    grads["v2"] = f1.reshape(b * kk, h).T @ dz_f2.reshape(b * kk, h)
    grads["c2"] = dz_f2.sum(axis=(0, 1))
    df1 = dz_f2 @ params["v2"].T
    dz_f1 = df1 * (1.0 - f1 * f1)
    grads["v1"] = cache["intr"].reshape(b * kk, -1).T @ dz_f1.reshape(b * kk, h)
    grads["c1"] = dz_f1.sum(axis=(0, 1))

    e1 = cache["e1"]
    dz_e2 = de2 * (1.0 - e2 * e2)
    grads["w2"] = e1.T @ dz_e2
    grads["b2"] = dz_e2.sum(axis=0)
    de1 = dz_e2 @ params["w2"].T
    dz_e1 = de1 * (1.0 - e1 * e1)
    grads["w1"] = cache["own"].T @ dz_e1
    grads["b1"] = dz_e1.sum(axis=0)
    return grads


def _masked_softmax(scores, mask):
    """Softmax over valid entries per row; all-invalid rows return zeros."""
    neg = np.where(mask, scores, -np.inf)
    any_valid = mask.any(axis=1)
    shift = np.where(any_valid, np.max(np.where(mask, scores, -np.inf), axis=1), 0.0)
    expd = np.exp(np.where(mask, neg - shift[:, None], -np.inf))
    expd = np.where(mask, expd, 0.0)
    total = expd.sum(axis=1)
    total = np.where(any_valid, total, 1.0)
    return expd / total[:, None]


def masked_log_softmax(masked_logits):
    """Log-probabilities from logits already carrying -inf at masked entries."""
    shift = masked_logits.max(axis=1, keepdims=True)
    expd = np.exp(masked_logits - shift)
    return masked_logits - shift - np.log(expd.sum(axis=1, keepdims=True))


def policy_forward(params, own_vec, intr_mat, mask3):
    """Single-observation convenience: (probability triple, value)."""
    if not any(mask3):
        raise SimulationError("action mask allows no action")
    kk = max(1, intr_mat.shape[0])
    intr = np.zeros((1, kk, INTRUDER_DIM))
    valid = np.zeros((1, kk), dtype=bool)
    if intr_mat.shape[0]:
        intr[0, :intr_mat.shape[0]] = intr_mat
        valid[0, :intr_mat.shape[0]] = True
    logits, value, _ = forward(params, own_vec[None, :], intr, valid,
                               np.asarray(mask3, dtype=bool)[None, :])
    logp = masked_log_softmax(logits)[0]
    probs = np.where(np.isfinite(logp), np.exp(logp), 0.0)
    return probs, float(value[0])


def sample_action(probs, rng=None):
    """Categorical sample (training) or argmax with lowest-index tie-break
    (evaluation, rng=None). Returns (action index, log-probability)."""
    if rng is None:
        idx = int(np.argmax(probs))
    else:
        u = rng.random()
        cum = np.cumsum(probs)
        idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
        idx = min(idx, len(probs) - 1)
    return idx, float(np.log(probs[idx]))


# ---------------------------------------------------------------------------
# PPO loss


def ppo_loss_and_grads(params, batch, clip_eps, value_coef, entropy_coef):
    """Clipped-surrogate PPO loss and its exact gradients.

    batch keys: own (B,6), intr (B,K,5), intr_mask (B,K), act_mask (B,3),
    actions (B,), old_logp (B,), advantages (B,), returns (B,).
    Returns (loss, grads, stats).
    """
    logits, value, cache = forward(
        params, batch["own"], batch["intr"], batch["intr_mask"], batch["act_mask"])
    logp_all = masked_log_softmax(logits)
    b = logits.shape[0]
    rows = np.arange(b)
    actions = batch["actions"]
    logp_a = logp_all[rows, actions]

    adv = batch["advantages"]
    ratio = np.exp(logp_a - batch["old_logp"])
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    policy_loss = -np.minimum(surr1, surr2).mean()

    verr = value - batch["returns"]
    value_loss = (verr * verr).mean()

    probs = np.where(np.isfinite(logp_all), np.exp(logp_all), 0.0)
    safe_lp = np.where(np.isfinite(logp_all), logp_all, 0.0)  # masked entries have p=0
    entropy = -(probs * safe_lp).sum(axis=1)

    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy.mean()
    if not np.isfinite(loss):
        raise SimulationError(
            f"non-finite loss: policy={policy_loss} value={value_loss} "
            f"entropy_mean={entropy.mean()}"
        )

    # d loss / d logp_a: active when the unclipped branch holds (ties included,
    # where both branches have identical gradients inside the clip window).
    active = (surr1 <= surr2).astype(float)
    dlogp_a = -(adv * ratio * active) / b

    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    dlogits = dlogp_a[:, None] * (onehot - probs)
    # entropy term: dH/dlogits_j = -p_j (logp_j + H); loss carries -entropy_coef * mean(H)
    dent = -probs * (safe_lp + entropy[:, None])
    dlogits += (-entropy_coef / b) * dent
    dvalue = value_coef * 2.0 * verr / b

    grads = backward(params, cache, dlogits, dvalue)
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy.mean()),
        "approx_kl": float(np.mean(batch["old_logp"] - logp_a)),
    }
    return float(loss), grads, stats


class Adam:
    """Adaptive-moment optimizer over a parameter dict."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for key in params:
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            mhat = self.m[key] / b1c
            vhat = self.v[key] / b2c
            params[key] = params[key] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return params


# ---------------------------------------------------------------------------
# Flatten / serialization


def flatten_params(params):
    return np.concatenate([params[k].ravel() for k in PARAM_KEYS])


def unflatten_params(flat, template):
    out, i = {}, 0
    for k in PARAM_KEYS:
        n = template[k].size
        out[k] = flat[i:i + n].reshape(template[k].shape)
        i += n
    return out


def params_to_doc(params):
    return {k: params[k].tolist() for k in PARAM_KEYS}


def params_from_doc(doc):
    try:
        return {k: np.asarray(doc[k], dtype=float) for k in PARAM_KEYS}
    except KeyError as exc:
        raise ValidationError(f"checkpoint missing weight tensor {exc}") from exc
