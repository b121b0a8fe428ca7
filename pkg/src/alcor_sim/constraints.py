"""Per-user demand specifications and the stochastic constraint-gap oracle.

A gap sample is positive exactly when the user's demand is currently unmet:
rate demands compare a minimum rate against the realized rate, queue demands
compare queue length (delay-sensitive) or a consecutive-growth counter
(delay-tolerant) against a threshold. The solver only ever sees gap vectors,
which is what makes the demand types freely mixable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class RateDemand:
    u_min: float  # bits/s/Hz
    gap_scale: float = 1.0

    def __post_init__(self):
        if self.u_min < 0:
            raise ValueError("u_min must be >= 0")


@dataclass
class LatencyDemand:
    """Delay-sensitive user: queue length must stay below d_max packets."""

    d_max: int
    gap_scale: float = 1.0

    def __post_init__(self):
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")

    @classmethod
    def from_latency(cls, latency_ms: float, arrival_rate: float, gap_scale: float = 1.0):
        """Little's-law style conversion: d_max = ceil(latency * arrival rate)."""
        return cls(max(1, math.ceil(latency_ms * arrival_rate / 1000.0)), gap_scale)


@dataclass
class StabilityDemand:
    """Delay-tolerant user: queue must not grow over c_max consecutive batches."""

    c_max: int = 3
    gap_scale: float = 1.0

    def __post_init__(self):
        if self.c_max < 1:
            raise ValueError("c_max must be >= 1")


DemandSpec = list  # list of per-user demand entries, one of the three above


def rate_demand_vector(spec: DemandSpec) -> np.ndarray:
    return np.array([d.u_min if isinstance(d, RateDemand) else 0.0 for d in spec])


def gap_scales(spec: DemandSpec) -> np.ndarray:
    return np.array([d.gap_scale for d in spec])


def gap_rate(u_min: np.ndarray, realized: np.ndarray) -> np.ndarray:
    """f_i = u_min_i - realized_i (positive = demand unmet)."""
    u_min = np.asarray(u_min, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if u_min.shape != realized.shape:
        raise ValueError("demand and rate vectors must have equal length")
    return u_min - realized


def gap_queue(queue_lengths: np.ndarray, growth_counters: np.ndarray,
              spec: DemandSpec) -> np.ndarray:
    """Queue-based gaps: q_i - d_max_i for delay-sensitive users,
    c_i - c_max_i for delay-tolerant ones. Rate entries are not meaningful
    here and raise."""
    out = np.empty(len(spec))
    for i, d in enumerate(spec):
        if isinstance(d, LatencyDemand):
            out[i] = queue_lengths[i] - d.d_max
        elif isinstance(d, StabilityDemand):
            out[i] = growth_counters[i] - d.c_max
        else:
            raise TypeError(f"user {i}: queue gap undefined for {type(d).__name__}")
    return out


def batch_mean_gap(samples) -> np.ndarray:
    """Element-wise mean over a batch of gap samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("batch of gap samples must be nonempty")
    mat = np.asarray(samples, dtype=float)
    if mat.ndim != 2:
        raise ValueError("gap samples must be equal-length vectors")
    return mat.mean(axis=0)
