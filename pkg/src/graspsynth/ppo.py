"""Clipped-surrogate policy optimization: advantage estimation, the loss
with manual analytic gradients, and the minibatch update loop."""

from __future__ import annotations

import numpy as np

from .policy import LOG_2PI, LOG_STD_MAX, LOG_STD_MIN, Adam, NaNGradient, Policy, clip_grads_global


class LengthMismatch(Exception):
    pass


def compute_gae(rewards, values, bootstrap_value: float, gamma: float, lam: float):
    """Exponentially weighted advantage recursion over one trajectory
    segment; returns (advantages, returns) with returns = A + V."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise LengthMismatch(f"{rewards.shape} vs {values.shape}")
    n = len(rewards)
    next_values = np.append(values[1:], bootstrap_value)
    deltas = rewards + gamma * next_values - values
    adv = np.zeros(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + values


def ppo_loss_and_grads(policy: Policy, batch: dict, clip: float, value_coef: float,
                       entropy_coef: float):
    """Loss value plus analytic gradients for every parameter.

    Loss = -mean(min(rho A, clip(rho) A)) + value_coef * mean((V - ret)^2)
           - entropy_coef * mean(entropy).
    """
    obs = batch["obs"]
    actions = batch["actions"]
    logp_old = batch["logp"]
    adv = batch["adv"]
    ret = batch["ret"]
    n = len(obs)

    mu, value, hs = policy.forward(obs, need_cache=True)
    log_std = policy.log_std_eff()
    sigma = np.exp(log_std)
    z = (actions - mu) / sigma
    logp = (-0.5 * z**2 - log_std - 0.5 * LOG_2PI).sum(axis=1)
    ratio = np.exp(logp - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    surrogate = np.minimum(unclipped, clipped)
    entropy = float((log_std + 0.5 * (LOG_2PI + 1.0)).sum())
    value_err = value - ret
    loss = (
        -surrogate.mean()
        + value_coef * float(np.mean(value_err**2))
        - entropy_coef * entropy
    )

    # gradient of the surrogate flows only through the unclipped branch
    use_unclipped = unclipped <= clipped
    d_logp = np.where(use_unclipped, -(adv * ratio) / n, 0.0)
    d_mu = d_logp[:, None] * (z / sigma)
    d_log_std = (d_logp[:, None] * (z**2 - 1.0)).sum(axis=0)
    d_log_std -= entropy_coef  # d(-coef * sum(log_std)) / d log_std
    # clamp boundary: no gradient outside the active range
    raw = policy.params["log_std"]
    d_log_std = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), d_log_std, 0.0)
    d_value = value_coef * 2.0 * value_err / n

    grads = policy.backward(hs, d_mu, d_value)
    grads["log_std"] = d_log_std
    stats = {
        "loss": float(loss),
        "surrogate": float(surrogate.mean()),
        "value_loss": float(np.mean(value_err**2)),
        "entropy": entropy,
        "clip_fraction": float(np.mean(~use_unclipped)),
        "approx_kl": float(np.mean(logp_old - logp)),
    }
    return loss, grads, stats


def ppo_update(policy: Policy, optimizer: Adam, batch: dict, config, rng: np.random.Generator):
    """updates_per_epoch passes over the batch in minibatches of batch_size.

    Advantages normalize to zero mean and unit std over the whole batch
    first. A non-finite gradient aborts the update and restores the
    parameters that were in place when it started.
    """
    n = len(batch["obs"])
    adv = batch["adv"]
    batch = dict(batch, adv=(adv - adv.mean()) / (adv.std() + 1e-8))
    snapshot = policy.state_dict()
    stats = []
    try:
        for _ in range(config.updates_per_epoch):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                mini = {k: v[idx] for k, v in batch.items()}
                _, grads, info = ppo_loss_and_grads(
                    policy, mini, config.clip, config.value_coef, config.entropy_coef
                )
                for g in grads.values():
                    if not np.all(np.isfinite(g)):
                        raise NaNGradient("non-finite gradient")
                info["grad_norm"] = clip_grads_global(grads, config.max_grad_norm)
                optimizer.step(policy.params, grads)
                stats.append(info)
    except NaNGradient:
        policy.load_state(snapshot)
        return {"aborted": True, "updates": len(stats)}
    out = {k: float(np.mean([s[k] for s in stats])) for k in stats[0]}
    out["aborted"] = False
    return out
