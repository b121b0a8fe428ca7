"""Stochastic channel generation for the two simulated scenarios.

Supports IID circularly-symmetric (Rayleigh) channels and a multi-cell
layout with distance path loss, log-normal shadowing and fast fading on top.
All gains are linear complex amplitudes; conversion helpers translate dB/dBm
figures into the linear domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChannelMatrix:
    """Complex channel gains; row i = receiver i, column j = transmitter j."""

    n_users: int
    gains: np.ndarray
    subchannel_id: int | None = None

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex)
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        if self.gains.shape != (self.n_users, self.n_users):
            raise ValueError(f"gains must be {self.n_users}x{self.n_users}, got {self.gains.shape}")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("channel gains must be finite")

    def magnitudes_sq(self) -> np.ndarray:
        """|h_ij|^2 as a real matrix (what rates depend on)."""
        return np.abs(self.gains) ** 2


@dataclass
class FadingParams:
    """Large/small-scale fading parameters of the multi-cell scenario."""

    pathloss_fixed_db: float = 120.9
    pathloss_slope: float = 37.6  # dB per decade of distance (km)
    shadowing_sigma_db: float = 8.0
    noise_power_dbm: float = -114.0
    coherence_ratio: int = 10  # large-scale resampled every this many draws

    def __post_init__(self):
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.pathloss_slope <= 0:
            raise ValueError("pathloss_slope must be > 0")
        if self.coherence_ratio < 1:
            raise ValueError("coherence_ratio must be >= 1")


@dataclass
class CellTopology:
    """Transmitter/receiver positions (meters) for the multi-cell layout."""

    n_cells: int
    cell_radius_m: float
    min_distance_m: float
    tx_positions: np.ndarray  # (N, 2)
    rx_positions: np.ndarray  # (N, 2)

    def __post_init__(self):
        self.tx_positions = np.asarray(self.tx_positions, dtype=float)
        self.rx_positions = np.asarray(self.rx_positions, dtype=float)
        if self.tx_positions.shape != self.rx_positions.shape:
            raise ValueError("tx/rx position arrays must have equal shapes")
        d = np.linalg.norm(self.rx_positions - self.tx_positions, axis=1)
        if np.any(d < self.min_distance_m - 1e-9) or np.any(d > self.cell_radius_m + 1e-9):
            raise ValueError("receiver distances must lie in [min_distance_m, cell_radius_m]")

    @property
    def n_users(self) -> int:
        return len(self.tx_positions)

    def distances_km(self) -> np.ndarray:
        """Pairwise distance (km) from transmitter j to receiver i, entry [i, j]."""
        diff = self.rx_positions[:, None, :] - self.tx_positions[None, :, :]
        return np.linalg.norm(diff, axis=2) / 1000.0


def hex_cell_centers(n_cells: int, cell_radius_m: float) -> np.ndarray:
    """Cell centers on a hexagonal grid with inter-site distance 2R.

    The layout (one center cell ringed by six) is a config default, not a
    scenario requirement; callers may supply their own positions.
    """
    if not 1 <= n_cells <= 7:
        raise ValueError("hex layout supports 1..7 cells")
    centers = [(0.0, 0.0)]
    for a in np.pi / 3 * np.arange(6):
        centers.append((2 * cell_radius_m * np.cos(a), 2 * cell_radius_m * np.sin(a)))
    return np.array(centers[:n_cells])


def make_topology(n_users: int, rng: np.random.Generator, n_cells: int = 7,
                  cell_radius_m: float = 500.0, min_distance_m: float = 50.0) -> CellTopology:
    """Place users round-robin over cells; transmitters at cell centers,
    receivers uniform in the disk with points closer than the minimum
    distance rejected."""
    centers = hex_cell_centers(n_cells, cell_radius_m)
    tx = np.array([centers[i % n_cells] for i in range(n_users)])
    rx = np.empty((n_users, 2))
    for i in range(n_users):
        while True:
            pt = rng.uniform(-cell_radius_m, cell_radius_m, 2)
            d = np.hypot(pt[0], pt[1])
            if min_distance_m <= d <= cell_radius_m:
                break
        rx[i] = tx[i] + pt
    return CellTopology(n_cells, cell_radius_m, min_distance_m, tx, rx)


def sample_rayleigh(n_users: int, rng: np.random.Generator) -> ChannelMatrix:
    """IID circularly symmetric unit-variance gains: E|h_ij|^2 = 1."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    re = rng.standard_normal((n_users, n_users))
    im = rng.standard_normal((n_users, n_users))
    return ChannelMatrix(n_users, (re + 1j * im) / np.sqrt(2.0))


def pathloss_db(distance_km: np.ndarray, params: FadingParams,
                shadowing_db: np.ndarray | float = 0.0) -> np.ndarray:
    """Large-scale attenuation: fixed + slope*log10(d_km) + shadowing, in dB."""
    distance_km = np.asarray(distance_km, dtype=float)
    if np.any(distance_km <= 0):
        raise ValueError("distances must be strictly positive")
    return params.pathloss_fixed_db + params.pathloss_slope * np.log10(distance_km) + shadowing_db


class MulticellSampler:
    """Draws multi-cell channel realizations.

    Holds the slowly varying large-scale amplitude (path loss + shadowing);
    fast fading is redrawn every call, the large-scale part every
    ``coherence_ratio`` calls. Each draw can produce several independently
    faded sub-channel matrices sharing the large-scale component.
    """

    def __init__(self, topology: CellTopology, params: FadingParams,
                 rng: np.random.Generator, n_subchannels: int = 1):
        self.topology = topology
        self.params = params
        self.rng = rng
        self.n_subchannels = n_subchannels
        self._dist_km = topology.distances_km()
        self._ls_amp: np.ndarray | None = None
        self._age = 0

    def _refresh_large_scale(self):
        zeta = self.rng.normal(0.0, self.params.shadowing_sigma_db, self._dist_km.shape)
        att_db = pathloss_db(self._dist_km, self.params, zeta)
        self._ls_amp = 10.0 ** (-att_db / 20.0)

    def draw(self) -> list[ChannelMatrix]:
        """One channel instant: a ChannelMatrix per sub-channel."""
        if self._ls_amp is None or self._age >= self.params.coherence_ratio:
            self._refresh_large_scale()
            self._age = 0
        self._age += 1
        n = self.topology.n_users
        out = []
        for s in range(self.n_subchannels):
            re = self.rng.standard_normal((n, n))
            im = self.rng.standard_normal((n, n))
            g = (re + 1j * im) / np.sqrt(2.0)
            out.append(ChannelMatrix(n, g * self._ls_amp, subchannel_id=s))
        return out


def mask_channel(channel: ChannelMatrix, xi: np.ndarray) -> ChannelMatrix:
    """Zero the rows and columns of deactivated users (xi_i = 0)."""
    xi = np.asarray(xi)
    if xi.shape != (channel.n_users,):
        raise ValueError(f"activation vector must have length {channel.n_users}")
    keep = xi.astype(bool).astype(float)
    gains = channel.gains * keep[:, None] * keep[None, :]
    return ChannelMatrix(channel.n_users, gains, channel.subchannel_id)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    if x_w <= 0:
        raise ValueError("power must be positive")
    return 10.0 * np.log10(x_w) + 30.0
