"""LMMSE channel estimation from the current and previous frames' pilots.

The estimate at slot ``t`` uses the despread pilot observations
``z = S^H y_p / (alpha sqrt(P_p) tau_p) = h_p + noise`` whose noise
covariance is ``reg * I`` with ``reg = sigma_p^2 / (alpha^2 P_p tau_p)``.
With ``E = E[h(t) h_p^H]`` and ``M = E[h_p h_p^H]``::

    h_hat = E (M + reg I)^{-1} z,    C_hat = E (M + reg I)^{-1} E^H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .channel import SecondOrderStats, hermitize, sample_gaussian
from .errors import SingularSystemError
from .frame import FramePlan, UserConfig, complex_noise, spreading_matrix, split_powers

COND_LIMIT = 1e12
LOADING = 1e-12


@dataclass(frozen=True)
class EstimatorMatrices:
    """Blocks of the stacked estimation problem at one slot.

    ``e_m`` is ``E[h(t) h_p^H]`` (``N x bN``), ``m_m`` is ``E[h_p h_p^H]``
    and ``cov_t`` is ``C_h(t)``; ``b`` is 1 in the first frame, 2 after.
    """

    e_m: np.ndarray
    m_m: np.ndarray
    regularizer: float
    cov_t: np.ndarray
    pilot_times: tuple[int, ...]

    @property
    def n_blocks(self) -> int:
        return len(self.pilot_times)


@dataclass(frozen=True)
class EstimateStats:
    cov_est: np.ndarray
    cov_err: np.ndarray
    cov_true: np.ndarray


def regularizer(gain, pilot_power, pilot_len, noise_var) -> float:
    if pilot_power <= 0:
        return math.inf
    return noise_var / (gain**2 * pilot_power * pilot_len)


def estimator_matrices(stats: SecondOrderStats, plan: FramePlan, t, gain: float,
                       pilot_power: float, noise_var: float,
                       allow_pilot_slot: bool = False) -> EstimatorMatrices:
    """Assemble ``E_m`` and ``M_m`` for slot ``t`` from ``stats.cross_cov``."""
    times = plan.pilot_times(t)
    if not allow_pilot_slot and t == times[-1]:
        raise ValueError(f"slot {t} is a pilot slot")
    e = np.hstack([stats.cross_cov(t, d) for d in times])
    m = hermitize(np.block([[stats.cross_cov(a, b) for b in times] for a in times]))
    reg = regularizer(gain, pilot_power, plan.pilot_len, noise_var)
    return EstimatorMatrices(e, m, reg, stats.cov(t), tuple(times))


def _factor(mats: EstimatorMatrices):
    a = mats.m_m + mats.regularizer * np.eye(mats.m_m.shape[0])
    w = np.linalg.eigvalsh(a)
    if w[0] <= w[-1] / COND_LIMIT:
        a = a + LOADING * np.trace(a).real / a.shape[0] * np.eye(a.shape[0])
    try:
        return linalg.cho_factor(a, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("regularized pilot covariance is singular") from exc


def estimate_covariance(mats: EstimatorMatrices) -> EstimateStats:
    """Covariance of the estimate and of its error at the slot."""
    c_t = mats.cov_t
    if math.isinf(mats.regularizer):
        return EstimateStats(np.zeros_like(c_t), c_t.copy(), c_t)
    fac = _factor(mats)
    c_hat = hermitize(mats.e_m @ linalg.cho_solve(fac, mats.e_m.conj().T))
    return EstimateStats(c_hat, hermitize(c_t - c_hat), c_t)


def lmmse_estimate(y_p: np.ndarray, mats: EstimatorMatrices, pilot: np.ndarray,
                   gain: float, pilot_power: float) -> np.ndarray:
    """Channel estimate at the slot from stacked pilot observations.

    ``y_p`` is one observation vector or a batch with observations in rows.
    """
    y_p = np.asarray(y_p)
    n = mats.e_m.shape[0]
    if math.isinf(mats.regularizer):
        return np.zeros(y_p.shape[:-1] + (n,), dtype=complex)
    tau = pilot.shape[0]
    n_rx = n // pilot.shape[1]
    s = spreading_matrix(pilot, n_rx, mats.n_blocks)
    if y_p.shape[-1] != s.shape[0] or y_p.ndim > 2:
        raise ValueError(f"pilot observation has shape {y_p.shape}, expected (..., {s.shape[0]})")
    z = (y_p @ s.conj()) / (gain * math.sqrt(pilot_power) * tau)
    return linalg.cho_solve(_factor(mats), z.T).T @ mats.e_m.T


def simulate_estimates(stats: SecondOrderStats, plan: FramePlan, t, gain: float,
                       pilot_power: float, noise_var: float, pilot: np.ndarray,
                       trials: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``trials`` channels at slot ``t`` together with their LMMSE estimates.

    Channels at the pilot slots and at ``t`` are drawn jointly, pilots are
    spread, noise is added and the estimator is applied. Returns
    ``(h_true, h_hat)``, each of shape ``(trials, N)``.
    """
    rng = np.random.default_rng(rng)
    mats = estimator_matrices(stats, plan, t, gain, pilot_power, noise_var)
    times = list(mats.pilot_times) + [t]
    draws = sample_gaussian(stats, times, trials, rng)
    n = stats.n
    h_p = draws[:, :-1, :].reshape(trials, -1)
    s = spreading_matrix(pilot, stats.n_rx, mats.n_blocks)
    clean = gain * math.sqrt(pilot_power) * (h_p @ s.T)
    y = clean + complex_noise(rng, clean.shape, noise_var)
    h_hat = lmmse_estimate(y, mats, pilot, gain, pilot_power)
    return draws[:, -1, :].reshape(trials, n), h_hat


# ---------------------------------------------------------------------------
# Per-slot statistics of all users
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UserSlot:
    """One user's estimation statistics and transmit settings at a data slot."""

    gain: float
    cov_est: np.ndarray
    cov_err: np.ndarray
    cov_true: np.ndarray
    data_power: float
    n_tx: int
    beamformer: np.ndarray | None = None
    rule: str = "optimal"

    @property
    def n_rx(self) -> int:
        return self.cov_est.shape[0] // self.n_tx

    @property
    def tx_cov(self) -> np.ndarray:
        """Rank-one transmit covariance ``P_d w w^H``."""
        if self.beamformer is None:
            raise ValueError("beamformer not assigned")
        w = self.beamformer
        return self.data_power * np.outer(w, w.conj())


@dataclass(frozen=True)
class SlotStats:
    """Statistics of all users at one slot; user 0 is the tagged user."""

    users: tuple[UserSlot, ...]
    noise_var: float

    @property
    def n_rx(self) -> int:
        return self.users[0].n_rx

    @property
    def n_users(self) -> int:
        return len(self.users)

    def with_beamformers(self, beamformers: Sequence[np.ndarray]) -> "SlotStats":
        users = tuple(replace(u, beamformer=_unit(w)) for u, w in zip(self.users, beamformers))
        return replace(self, users=users)

    def with_user(self, k: int, **changes) -> "SlotStats":
        users = list(self.users)
        users[k] = replace(users[k], **changes)
        return replace(self, users=tuple(users))

    def reordered(self, k: int) -> "SlotStats":
        """Same slot with user ``k`` moved to the tagged position."""
        order = [k] + [i for i in range(self.n_users) if i != k]
        return replace(self, users=tuple(self.users[i] for i in order))


def _unit(w):
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise ValueError("beamformer must be nonzero")
    return w / nrm


def isotropic_beamformer(n_tx: int) -> np.ndarray:
    return np.ones(n_tx, dtype=complex) / math.sqrt(n_tx)


def user_estimate_stats(user: UserConfig, plan: FramePlan, t, pilot_power: float) -> EstimateStats:
    mats = estimator_matrices(user.stats, plan, t, user.gain, pilot_power, user.pilot_noise_var)
    return estimate_covariance(mats)


def slot_stats(users: Sequence[UserConfig], plan: FramePlan, t,
               powers: Sequence[tuple[float, float]] | None = None,
               noise_var: float | None = None) -> SlotStats:
    """Statistics of every user at data slot ``t``.

    ``powers`` optionally overrides the per-slot ``(pilot, data)`` power of
    each user; by default each user's budget is split over the plan. The
    data noise is taken from the tagged user unless given.
    """
    out = []
    for k, u in enumerate(users):
        p_p, p_d = powers[k] if powers is not None else split_powers(u.budget, plan)
        est = user_estimate_stats(u, plan, t, p_p)
        out.append(UserSlot(u.gain, est.cov_est, est.cov_err, est.cov_true, p_d, u.n_tx,
                            rule=u.beamformer))
    nv = users[0].data_noise_var if noise_var is None else noise_var
    return SlotStats(tuple(out), nv)
