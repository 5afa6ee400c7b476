"""Feed-forward Gaussian policy with a shared trunk, value head and a
state-independent log-std vector, implemented in plain numpy with manual
backpropagation.

Keeping the network in numpy (float64) makes training bitwise reproducible
across runs and lets the gradient computation be checked directly against
finite differences.
"""

from __future__ import annotations

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = np.log(2.0 * np.pi)


class NaNGradient(Exception):
    pass


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.normal(size=(rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Policy:
    """Parameters live in a flat dict of float64 arrays."""

    def __init__(self, obs_dim: int, act_dim: int, hidden_units: int = 128,
                 hidden_layers: int = 2, seed: int = 0, init_log_std: float = -0.5):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden_units = hidden_units
        self.hidden_layers = hidden_layers
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 91])))
        params = {}
        last = obs_dim
        for i in range(hidden_layers):
            params[f"W{i}"] = orthogonal(rng, last, hidden_units, np.sqrt(2.0))
            params[f"b{i}"] = np.zeros(hidden_units)
            last = hidden_units
        params["W_mu"] = orthogonal(rng, last, act_dim, 0.01)
        params["b_mu"] = np.zeros(act_dim)
        params["W_v"] = orthogonal(rng, last, 1, 1.0)
        params["b_v"] = np.zeros(1)
        params["log_std"] = np.full(act_dim, init_log_std)
        self.params = params

    # ------------------------------------------------------------------
    def forward(self, obs: np.ndarray, need_cache: bool = False):
        """obs (N, obs_dim) -> (mu (N, act), value (N,), cache or None)."""
        x = np.atleast_2d(obs)
        h = x
        hs = [x]
        for i in range(self.hidden_layers):
            h = np.tanh(h @ self.params[f"W{i}"] + self.params[f"b{i}"])
            hs.append(h)
        mu = h @ self.params["W_mu"] + self.params["b_mu"]
        value = (h @ self.params["W_v"] + self.params["b_v"])[:, 0]
        return mu, value, (hs if need_cache else None)

    def log_std_eff(self) -> np.ndarray:
        return np.clip(self.params["log_std"], LOG_STD_MIN, LOG_STD_MAX)

    def log_prob(self, mu: np.ndarray, actions: np.ndarray) -> np.ndarray:
        log_std = self.log_std_eff()
        sigma = np.exp(log_std)
        z = (actions - mu) / sigma
        return (-0.5 * z**2 - log_std - 0.5 * LOG_2PI).sum(axis=1)

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None):
        """Sample (or take the mean of) the action distribution.

        Returns (action, log_prob, value) with leading batch axis squeezed
        away when obs is a single observation.
        """
        single = obs.ndim == 1
        mu, value, _ = self.forward(obs)
        if rng is None:
            act = mu
        else:
            sigma = np.exp(self.log_std_eff())
            act = mu + sigma * rng.standard_normal(mu.shape)
        logp = self.log_prob(mu, act)
        if single:
            return act[0], logp[0], value[0]
        return act, logp, value

    # ------------------------------------------------------------------
    def backward(self, hs, d_mu: np.ndarray, d_value: np.ndarray) -> dict:
        """Gradients of a scalar loss given d(loss)/d(mu) and d(loss)/d(value)."""
        grads = {}
        h_last = hs[-1]
        grads["W_mu"] = h_last.T @ d_mu
        grads["b_mu"] = d_mu.sum(axis=0)
        dv = d_value[:, None]
        grads["W_v"] = h_last.T @ dv
        grads["b_v"] = dv.sum(axis=0)
        dh = d_mu @ self.params["W_mu"].T + dv @ self.params["W_v"].T
        for i in range(self.hidden_layers - 1, -1, -1):
            da = dh * (1.0 - hs[i + 1] ** 2)
            grads[f"W{i}"] = hs[i].T @ da
            grads[f"b{i}"] = da.sum(axis=0)
            dh = da @ self.params[f"W{i}"].T
        return grads

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def state_dict(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state: dict) -> None:
        for k in self.params:
            self.params[k] = np.asarray(state[k], dtype=float).copy()


class Adam:
    """First-order adaptive-moment optimizer over a parameter dict."""

    def __init__(self, params: dict, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": self.t, "lr": self.lr}
        for k in self.m:
            out[f"m:{k}"] = self.m[k].copy()
            out[f"v:{k}"] = self.v[k].copy()
        return out

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        for k in self.m:
            self.m[k] = np.asarray(state[f"m:{k}"], dtype=float).copy()
            self.v[k] = np.asarray(state[f"v:{k}"], dtype=float).copy()


def clip_grads_global(grads: dict, max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for k in grads:
            grads[k] = grads[k] * scale
    return total
