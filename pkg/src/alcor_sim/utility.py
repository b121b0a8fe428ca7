"""Per-user utilities: Shannon rates, their power gradients, sum utility.

Rates are in bits/s/Hz; the traffic layer multiplies by sub-channel bandwidth
to get bits/s. Only channel magnitudes enter the formulas.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelMatrix, mask_channel

LN2 = np.log(2.0)


def rates_from_magnitudes(habs2: np.ndarray, p: np.ndarray, noise: float) -> np.ndarray:
    """Shannon rates from a |h_ij|^2 matrix. Users with zero direct gain get 0.

    R_i = log2(1 + |h_ii|^2 p_i / (noise + sum_{j != i} |h_ij|^2 p_j))
    """
    if noise <= 0:
        raise ValueError("noise power must be positive")
    habs2 = np.asarray(habs2, dtype=float)
    p = np.asarray(p, dtype=float)
    signal = np.diag(habs2) * p
    interference = habs2 @ p - signal + noise
    return np.log2(1.0 + signal / interference)


def rates(channel: ChannelMatrix, p: np.ndarray, noise: float) -> np.ndarray:
    return rates_from_magnitudes(channel.magnitudes_sq(), p, noise)


def rate_gradient(channel: ChannelMatrix, p: np.ndarray, noise: float) -> np.ndarray:
    """Closed-form partials dR_i/dp_j of the rate vector, shape (N, N).

    With I_i = noise + sum_{j != i} |h_ij|^2 p_j:
      dR_i/dp_i = |h_ii|^2 / (ln2 * (I_i + |h_ii|^2 p_i))
      dR_i/dp_j = -|h_ij|^2 |h_ii|^2 p_i / (ln2 * I_i * (I_i + |h_ii|^2 p_i)), j != i
    Off-diagonal entries are always <= 0 (more interference never helps).
    """
    if noise <= 0:
        raise ValueError("noise power must be positive")
    habs2 = channel.magnitudes_sq()
    p = np.asarray(p, dtype=float)
    diag = np.diag(habs2)
    signal = diag * p
    interf = habs2 @ p - signal + noise  # I_i
    total = interf + signal
    grad = -(habs2 * (diag * p / (LN2 * interf * total))[:, None])
    np.fill_diagonal(grad, diag / (LN2 * total))
    return grad


def sum_utility(channel: ChannelMatrix, p: np.ndarray, noise: float, xi: np.ndarray) -> float:
    """Sum of active users' rates on the masked channel, inactive powers forced to 0."""
    xi = np.asarray(xi)
    masked = mask_channel(channel, xi)
    p_eff = np.where(xi.astype(bool), np.asarray(p, dtype=float), 0.0)
    r = rates(masked, p_eff, noise)
    return float(np.sum(r[xi.astype(bool)]))
