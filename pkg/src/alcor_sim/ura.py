"""Unconstrained resource-allocation back-ends.

Three interchangeable policies allocate transmit powers among the currently
active users to push up their sum rate, without knowing anything about
per-user demands: a trivial full-power policy, iterative WMMSE, and a small
MLP trained by unsupervised stochastic gradient ascent on the sum utility.
All back-ends honour the same two output invariants: powers live in
[0, p_max] and deactivated users get exactly zero.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelMatrix, mask_channel
from .utility import rate_gradient, rates_from_magnitudes

POLICY_FORMAT = "alcor-sim/mlp-policy"
POLICY_VERSION = 1


@dataclass
class WmmseConfig:
    max_iters: int = 100
    tol: float = 1e-5  # relative sum-rate change threshold

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


class UraPolicy:
    """Interface: map a masked channel + activation vector to powers."""

    @property
    def descriptor(self) -> dict:
        raise NotImplementedError

    def allocate(self, masked: ChannelMatrix, xi: np.ndarray, noise: float) -> np.ndarray:
        raise NotImplementedError

    def allocate_batch(self, habs2: np.ndarray, active: np.ndarray, noise: float) -> np.ndarray:
        """Vectorized path: habs2 (B,N,N) already masked, active (B,N) bool."""
        out = np.zeros(active.shape)
        for b in range(active.shape[0]):
            chan = ChannelMatrix(active.shape[1], np.sqrt(habs2[b]).astype(complex))
            out[b] = self.allocate(chan, active[b], noise)
        return out


class MaxPowerPolicy(UraPolicy):
    """p_i = p_max * xi_i."""

    def __init__(self, p_max: float = 1.0):
        self.p_max = float(p_max)

    @property
    def descriptor(self) -> dict:
        return {"name": "maxpower", "p_max": self.p_max}

    def allocate(self, masked, xi, noise):
        return self.p_max * np.asarray(xi, dtype=float)

    def allocate_batch(self, habs2, active, noise):
        return self.p_max * active.astype(float)


def wmmse_batch(habs2: np.ndarray, active: np.ndarray, noise: float, p_max: float,
                cfg: WmmseConfig | None = None) -> np.ndarray:
    """Alternating closed-form WMMSE updates, vectorized over a batch.

    habs2 is (B,N,N) with zero rows/columns for inactive users; returns
    powers (B,N). Initialization at full power; the recorded sum rate is
    nondecreasing across iterations up to numerical tolerance.
    """
    cfg = cfg or WmmseConfig()
    habs2 = np.asarray(habs2, dtype=float)
    active = np.asarray(active, dtype=bool)
    B, N = active.shape
    diag = np.einsum("bii->bi", habs2)
    hdiag = np.sqrt(diag)
    v = np.where(active, np.sqrt(p_max), 0.0)
    prev_sr = np.full(B, -np.inf)
    for _ in range(cfg.max_iters):
        p = v * v
        total = np.einsum("bij,bj->bi", habs2, p) + noise
        f = hdiag * v / total
        w = 1.0 / (1.0 - f * hdiag * v)
        den = np.einsum("bj,bji->bi", w * f * f, habs2)
        num = w * f * hdiag
        v = np.where(active & (den > 0), num / np.where(den > 0, den, 1.0), 0.0)
        np.clip(v, 0.0, np.sqrt(p_max), out=v)
        p = v * v
        sig = diag * p
        inter = np.einsum("bij,bj->bi", habs2, p) - sig + noise
        sr = np.sum(np.log2(1.0 + sig / inter), axis=1)
        if np.all(np.abs(sr - prev_sr) <= cfg.tol * np.maximum(1.0, np.abs(prev_sr))):
            break
        prev_sr = sr
    return v * v


def wmmse_allocate(masked: ChannelMatrix, xi: np.ndarray, noise: float, p_max: float,
                   cfg: WmmseConfig | None = None, sr_trace: list | None = None) -> np.ndarray:
    """Single-instance WMMSE on the active sub-problem.

    Operates on the submatrix of active users and scatters powers back; with
    no active users the zero vector is returned. ``sr_trace`` collects the
    per-iteration sum rate when provided.
    """
    cfg = cfg or WmmseConfig()
    xi = np.asarray(xi).astype(bool)
    n = masked.n_users
    p_out = np.zeros(n)
    idx = np.where(xi)[0]
    if len(idx) == 0:
        return p_out
    habs2 = masked.magnitudes_sq()[np.ix_(idx, idx)]
    diag = np.diag(habs2)
    hdiag = np.sqrt(diag)
    v = np.full(len(idx), np.sqrt(p_max))
    prev_sr = -np.inf
    for _ in range(cfg.max_iters):
        p = v * v
        total = habs2 @ p + noise
        f = hdiag * v / total
        w = 1.0 / (1.0 - f * hdiag * v)
        den = (w * f * f) @ habs2
        num = w * f * hdiag
        v = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        np.clip(v, 0.0, np.sqrt(p_max), out=v)
        p = v * v
        sig = diag * p
        inter = habs2 @ p - sig + noise
        sr = float(np.sum(np.log2(1.0 + sig / inter)))
        if sr_trace is not None:
            sr_trace.append(sr)
        if abs(sr - prev_sr) <= cfg.tol * max(1.0, abs(prev_sr)):
            break
        prev_sr = sr
    p_out[idx] = v * v
    return p_out


class WmmsePolicy(UraPolicy):
    def __init__(self, p_max: float = 1.0, cfg: WmmseConfig | None = None):
        self.p_max = float(p_max)
        self.cfg = cfg or WmmseConfig()

    @property
    def descriptor(self) -> dict:
        return {"name": "wmmse", "p_max": self.p_max,
                "max_iters": self.cfg.max_iters, "tol": self.cfg.tol}

    def allocate(self, masked, xi, noise):
        return wmmse_allocate(masked, xi, noise, self.p_max, self.cfg)

    def allocate_batch(self, habs2, active, noise):
        return wmmse_batch(habs2, active, noise, self.p_max, self.cfg)


class MlpPolicy(UraPolicy):
    """Fully connected net mapping flattened |h_ij|^2 to powers.

    Hidden layers are ReLU; the output layer is a logistic scaled by p_max,
    which enforces the box constraint structurally. Inputs are z-scored with
    statistics frozen from a calibration batch.
    """

    def __init__(self, n_users: int, hidden: tuple[int, ...] = (400, 400, 200),
                 p_max: float = 1.0, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.n_users = n_users
        self.p_max = float(p_max)
        widths = [n_users * n_users, *hidden, n_users]
        self.widths = widths
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.norm_mean = np.zeros(widths[0])
        self.norm_std = np.ones(widths[0])
        self.trained_with: dict = {}

    @property
    def descriptor(self) -> dict:
        return {"name": "mlp", "widths": list(self.widths), "p_max": self.p_max,
                **({"training": self.trained_with} if self.trained_with else {})}

    # -- forward/backward ---------------------------------------------------

    def features(self, habs2: np.ndarray) -> np.ndarray:
        """Flatten and standardize one or a batch of |h|^2 matrices."""
        x = np.asarray(habs2, dtype=float).reshape(-1, self.n_users * self.n_users)
        return (x - self.norm_mean) / self.norm_std

    def calibrate(self, habs2_batch: np.ndarray):
        """Freeze per-feature z-score statistics from a calibration batch."""
        x = np.asarray(habs2_batch, dtype=float).reshape(-1, self.n_users * self.n_users)
        self.norm_mean = x.mean(axis=0)
        self.norm_std = np.maximum(x.std(axis=0), 1e-8)

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        a = np.atleast_2d(x)
        if a.shape[1] != self.widths[0]:
            raise ValueError(f"input dim {a.shape[1]} != expected {self.widths[0]}")
        if cache is not None:
            cache.append(a)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ W + b, 0.0)
            if cache is not None:
                cache.append(a)
        z = a @ self.weights[-1] + self.biases[-1]
        out = self.p_max / (1.0 + np.exp(-z))
        if cache is not None:
            cache.append(out)
        return out

    def backward(self, cache: list, dout: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Gradients of sum(objective) wrt (W, b) given d objective / d output."""
        out = cache[-1]
        s = out / self.p_max
        delta = dout * self.p_max * s * (1.0 - s)
        grads = []
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = cache[layer]
            gW = a_prev.T @ delta
            gb = delta.sum(axis=0)
            grads.append((gW, gb))
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (a_prev > 0)
        grads.reverse()
        return grads

    def allocate(self, masked, xi, noise):
        x = self.features(masked.magnitudes_sq())
        out = self.forward(x)[0]
        return np.where(np.asarray(xi).astype(bool), out, 0.0)

    def allocate_batch(self, habs2, active, noise):
        out = self.forward(self.features(habs2))
        return np.where(active, out, 0.0)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path):
        def pack(a: np.ndarray) -> dict:
            return {"shape": list(a.shape),
                    "data": base64.b64encode(np.ascontiguousarray(a, dtype=np.float64).tobytes()).decode()}

        doc = {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "n_users": self.n_users,
            "widths": list(self.widths),
            "p_max": self.p_max,
            "weights": [pack(W) for W in self.weights],
            "biases": [pack(b) for b in self.biases],
            "norm_mean": pack(self.norm_mean),
            "norm_std": pack(self.norm_std),
            "training": self.trained_with,
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "MlpPolicy":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != POLICY_FORMAT:
            raise ValueError(f"not a policy file: {path}")
        if doc.get("version") != POLICY_VERSION:
            raise ValueError(f"unsupported policy version {doc.get('version')}")

        def unpack(d: dict) -> np.ndarray:
            return np.frombuffer(base64.b64decode(d["data"]), dtype=np.float64).reshape(d["shape"]).copy()

        widths = doc["widths"]
        policy = cls(doc["n_users"], hidden=tuple(widths[1:-1]), p_max=doc["p_max"])
        policy.weights = [unpack(w) for w in doc["weights"]]
        policy.biases = [unpack(b) for b in doc["biases"]]
        policy.norm_mean = unpack(doc["norm_mean"])
        policy.norm_std = unpack(doc["norm_std"])
        policy.trained_with = doc.get("training", {})
        return policy


@dataclass
class TrainTrace:
    steps: list = field(default_factory=list)
    batch_mean_su: list = field(default_factory=list)


def sum_utility_gradient(policy: MlpPolicy, habs2_masked: np.ndarray, active: np.ndarray,
                         noise: float) -> tuple[list[tuple[np.ndarray, np.ndarray]], float]:
    """Gradient of one sample's sum utility wrt the policy parameters.

    Chains the closed-form rate gradient through the network: the masked
    channel already zeroes every row/column of inactive users, so their
    power partials vanish and no explicit gradient mask is needed.
    """
    cache = []
    out = policy.forward(policy.features(habs2_masked), cache)[0]
    p = np.where(active, out, 0.0)
    chan = ChannelMatrix(policy.n_users, np.sqrt(habs2_masked).astype(complex))
    dr_dp = rate_gradient(chan, p, noise)
    du_dp = dr_dp.sum(axis=0)
    grads = policy.backward(cache, du_dp[None, :])
    su = float(np.sum(rates_from_magnitudes(habs2_masked, p, noise)[active]))
    return grads, su


def mlp_train(policy: MlpPolicy, channel_sampler, steps: int, batch: int,
              rng: np.random.Generator, noise: float, step_size: float = 1e-3,
              kappa_mode: str = "non-diverse", clip_norm: float = 10.0) -> TrainTrace:
    """Unsupervised ascent on batch-mean sum utility.

    ``channel_sampler(rng)`` must yield one |h|^2 matrix per call. In diverse
    mode the activation probability is redrawn per batch item from
    {0.2, 0.5, 1.0} (uniform over the three levels, same level for every
    user); non-diverse keeps every user always on.
    """
    if steps < 1 or batch < 1:
        raise ValueError("steps and batch must be >= 1")
    if kappa_mode not in ("diverse", "non-diverse"):
        raise ValueError(f"unknown kappa_mode: {kappa_mode}")
    n = policy.n_users
    # calibration batch for input standardization
    calib = np.stack([channel_sampler(rng) for _ in range(max(64, batch))])
    policy.calibrate(calib)
    trace = TrainTrace()
    levels = np.array([0.2, 0.5, 1.0])
    for step in range(steps):
        acc = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(policy.weights, policy.biases)]
        su_sum = 0.0
        for _ in range(batch):
            habs2 = channel_sampler(rng)
            if kappa_mode == "diverse":
                kappa = levels[rng.integers(0, len(levels))]
                active = rng.random(n) < kappa
            else:
                active = np.ones(n, dtype=bool)
            keep = active.astype(float)
            masked = habs2 * keep[:, None] * keep[None, :]
            grads, su = sum_utility_gradient(policy, masked, active, noise)
            su_sum += su
            acc = [(aW + gW, ab + gb) for (aW, ab), (gW, gb) in zip(acc, grads)]
        mean_su = su_sum / batch
        if not np.isfinite(mean_su):
            raise RuntimeError(f"training diverged at step {step}: batch-mean SU = {mean_su}")
        gnorm = np.sqrt(sum(float(np.sum(gW**2) + np.sum(gb**2)) for gW, gb in acc)) / batch
        scale = (step_size / batch) * min(1.0, clip_norm / max(gnorm, 1e-12))
        for (W, b), (gW, gb) in zip(zip(policy.weights, policy.biases), acc):
            W += scale * gW
            b += scale * gb
        trace.steps.append(step)
        trace.batch_mean_su.append(mean_su)
    policy.trained_with = {"steps": steps, "batch": batch, "step_size": step_size,
                           "kappa_mode": kappa_mode, "clip_norm": clip_norm}
    return trace


def policy_ura(policy: UraPolicy, channel: ChannelMatrix, xi: np.ndarray, noise: float) -> np.ndarray:
    """Dispatch to a back-end on the masked channel and enforce the output
    invariants: box constraint and zero power for deactivated users."""
    xi = np.asarray(xi)
    on = xi.astype(bool)
    if not on.any():
        return np.zeros(channel.n_users)
    masked = mask_channel(channel, xi)
    p = np.asarray(policy.allocate(masked, xi, noise), dtype=float)
    p_max = getattr(policy, "p_max", None)
    if p_max is not None:
        p = np.clip(p, 0.0, p_max)
    return np.where(on, p, 0.0)
