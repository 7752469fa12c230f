"""Frame plans, power splitting, orthogonal pilots and received-signal synthesis.

A plan of ``M`` frames with sizes ``q_1..q_M`` covers slots ``1..delta_M - 1``.
Frame ``m`` starts at ``delta_{m-1}`` with its pilot slot and the remaining
``q_m - 1`` slots carry data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag, hadamard

from .channel import SecondOrderStats

MIN_FRAME_SIZE = 2


@dataclass(frozen=True)
class FramePlan:
    sizes: tuple[int, ...]
    pilot_len: int = 1

    def __post_init__(self):
        sizes = tuple(int(q) for q in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ValueError("a plan needs at least one frame")
        if any(q < MIN_FRAME_SIZE for q in sizes):
            raise ValueError(f"frame sizes must be >= {MIN_FRAME_SIZE}, got {list(sizes)}")
        if self.pilot_len < 1:
            raise ValueError("pilot length must be positive")

    @property
    def n_frames(self) -> int:
        return len(self.sizes)

    @property
    def boundaries(self) -> np.ndarray:
        return frame_boundaries(self)

    @property
    def horizon(self) -> int:
        """Total number of slots ``delta_M - 1``."""
        return int(sum(self.sizes))

    @property
    def n_data_slots(self) -> int:
        return self.horizon - self.n_frames

    @property
    def pilot_slots(self) -> list[int]:
        return [int(d) for d in self.boundaries[:-1]]

    @property
    def data_slots(self) -> list[int]:
        pilots = set(self.pilot_slots)
        return [t for t in range(1, self.horizon + 1) if t not in pilots]

    def frame_of(self, t) -> int:
        """Frame index ``m`` (1-based) with ``delta_{m-1} <= t < delta_m``."""
        b = self.boundaries
        if not b[0] <= t < b[-1]:
            raise ValueError(f"slot {t} is outside the plan horizon 1..{b[-1] - 1}")
        return int(np.searchsorted(b, t, side="right"))

    def pilot_times(self, t) -> list[int]:
        """Pilot slots feeding the estimate at slot ``t``: previous and current frame."""
        m = self.frame_of(t)
        b = self.boundaries
        return [int(b[m - 2]), int(b[m - 1])] if m >= 2 else [int(b[0])]


@dataclass(frozen=True)
class PowerBudget:
    pilot_max: float
    data_max: float
    total: float | None = None

    def __post_init__(self):
        if self.pilot_max < 0 or self.data_max < 0:
            raise ValueError("power budgets must be nonnegative")
        if self.total is None:
            object.__setattr__(self, "total", self.pilot_max + self.data_max)
        if self.pilot_max + self.data_max > self.total + 1e-12:
            raise ValueError("pilot plus data budget exceeds the total budget")


@dataclass(frozen=True)
class UserConfig:
    """Per-user link parameters.

    ``stats`` describes the small-scale channel; ``gain`` is the linear
    large-scale amplitude ``alpha``.
    """

    gain: float
    budget: PowerBudget
    stats: SecondOrderStats
    pilot_noise_var: float
    data_noise_var: float
    beamformer: str = "optimal"

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.pilot_noise_var <= 0 or self.data_noise_var <= 0:
            raise ValueError("noise variances must be positive")
        if self.beamformer not in ("optimal", "isotropic"):
            raise ValueError("beamformer rule must be 'optimal' or 'isotropic'")

    @property
    def n_tx(self) -> int:
        return self.stats.n_tx


def frame_boundaries(plan: FramePlan) -> np.ndarray:
    """``delta_0..delta_M`` with ``delta_0 = 1``."""
    return np.concatenate([[1], 1 + np.cumsum(plan.sizes)]).astype(int)


def split_powers(budget: PowerBudget, plan: FramePlan) -> tuple[float, float]:
    """Per-slot pilot and data powers for a plan."""
    if plan.n_data_slots < 1:
        raise ValueError("plan has no data slot")
    return budget.pilot_max / plan.n_frames, budget.data_max / plan.n_data_slots


def pilot_matrices(n_users: int, n_tx: int, pilot_len: int) -> list[np.ndarray]:
    """Real pilot matrices ``S_k`` of shape ``(pilot_len, n_tx)``.

    Columns are taken from a Hadamard matrix when ``pilot_len`` is a power
    of two and from scaled identity columns otherwise, so
    ``S_i^T S_j = pilot_len I`` for ``i = j`` and zero otherwise.
    """
    need = n_users * n_tx
    if pilot_len < need:
        raise ValueError(f"pilot length {pilot_len} < K * n_tx = {need}")
    if pilot_len & (pilot_len - 1) == 0:
        cols = hadamard(pilot_len).astype(float)
    else:
        cols = np.sqrt(pilot_len) * np.eye(pilot_len)
    return [cols[:, k * n_tx:(k + 1) * n_tx] for k in range(n_users)]


def spreading_matrix(pilot: np.ndarray, n_rx: int, n_blocks: int = 1) -> np.ndarray:
    """Block-diagonal map from stacked channel vectors to stacked observations.

    Each block is ``kron(S, I_{n_rx})`` so that ``vec(H S^T) = kron(S, I) vec(H)``.
    """
    one = np.kron(pilot, np.eye(n_rx))
    return block_diag(*([one] * n_blocks))


def complex_noise(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    """Circularly symmetric ``CN(0, var)`` samples."""
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _as_vec(h, n_rx, n_tx):
    h = np.asarray(h)
    if h.shape == (n_rx, n_tx):
        return h.reshape(-1, order="F")
    if h.shape == (n_rx * n_tx,):
        return h
    raise ValueError(f"channel shape {h.shape} does not match ({n_rx}, {n_tx})")


def synthesize_pilot_rx(channels: Sequence[np.ndarray], gain: float, pilot: np.ndarray,
                        pilot_power: float, noise_var: float, rng) -> np.ndarray:
    """Stacked pilot observations ``alpha sqrt(P_p) S_tilde h_p + noise``.

    ``channels`` holds one channel (matrix ``n_rx x n_tx`` or its vec) per
    pilot slot, oldest first. The result has length
    ``len(channels) * pilot_len * n_rx``.
    """
    rng = np.random.default_rng(rng)
    channels = list(channels)
    h0 = np.asarray(channels[0])
    n_tx = pilot.shape[1]
    n_rx = h0.shape[0] if h0.ndim == 2 else h0.size // n_tx
    if h0.ndim == 2 and h0.shape[1] != n_tx:
        raise ValueError("pilot width does not match n_tx")
    h_p = np.concatenate([_as_vec(h, n_rx, n_tx) for h in channels])
    s = spreading_matrix(pilot, n_rx, len(channels))
    clean = gain * np.sqrt(pilot_power) * (s @ h_p)
    return clean + complex_noise(rng, clean.shape, noise_var)


def synthesize_data_rx(channels: Sequence[np.ndarray], beamformers: Sequence[np.ndarray],
                       symbols: Sequence[complex], gains: Sequence[float],
                       noise_var: float, rng) -> np.ndarray:
    """Uplink data observation ``sum_k alpha_k H_k w_k s_k + n``."""
    rng = np.random.default_rng(rng)
    channels = [np.asarray(h) for h in channels]
    if not (len(channels) == len(beamformers) == len(symbols) == len(gains)):
        raise ValueError("per-user inputs must have equal length")
    n_rx = channels[0].shape[0]
    y = np.zeros(n_rx, dtype=complex)
    for h, w, s, a in zip(channels, beamformers, symbols, gains):
        w = np.atleast_1d(np.asarray(w))
        if h.shape != (n_rx, w.size):
            raise ValueError("channel and beamformer shapes disagree")
        y = y + a * (h @ w) * s
    return y + complex_noise(rng, n_rx, noise_var)
