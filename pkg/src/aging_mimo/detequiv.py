"""Deterministic equivalent of the tagged user's SINR and spectral efficiency.

With ``R_k = alpha_k^2 A_k(C_hat_k)`` (transmit power included through
``C_x_k = P_k w_k w_k^H``), ``Theta = sum_k alpha_k^2 A_k(Q_k)`` and
``rho = sigma_d^2``, the interferers' fixed point is::

    T = (sum_{k>=2} R_k / (1 + omega_k) + Theta + rho I)^{-1},   omega_k = tr(R_k T).

The SINR mean is ``tr(R_1 T)``. Its variance is ``c * tr(R_1 T')`` where
``T' = T (R_1 + sum_k omega'_k R_k / (1 + omega_k)^2) T`` and ``omega'``
solves ``(I - J) omega' = v'``. The factor ``c`` is 1 for circularly
symmetric Gaussian estimates; see :class:`DetEquivConfig`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .channel import hermitize
from .combining import apply_A, estimate_operator, theta_matrix
from .errors import ConvergenceError, NumericalError
from .estimation import SlotStats, isotropic_beamformer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetEquivConfig:
    """Numerical settings of the deterministic equivalent.

    ``variance_factor`` multiplies ``tr(R_1 T')``. The value 1 is the
    exact second moment of a quadratic form in a complex circular Gaussian
    vector; 2 is the real-valued counterpart. ``variance_cov`` selects the
    estimate covariance (``"estimate"``) or the true channel covariance
    (``"true"``) inside the variance term.
    """

    tol: float = 1e-10
    max_iter: int = 500
    variance_cov: str = "estimate"
    variance_factor: float = 1.0
    beamformer_rounds: int = 4

    def __post_init__(self):
        if self.variance_cov not in ("estimate", "true"):
            raise ValueError("variance_cov must be 'estimate' or 'true'")


DEFAULT_CONFIG = DetEquivConfig()


@dataclass(frozen=True)
class FixedPointState:
    omega: np.ndarray
    t_matrix: np.ndarray
    iterations: int
    residual: float
    differences: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class DetEquivSE:
    mean_gamma: float
    var_gamma: float
    se: float
    omega_prime: np.ndarray

    @property
    def first_order(self) -> float:
        return math.log2(1.0 + self.mean_gamma)


def _resolvent(r_list, omega, theta, rho):
    n = theta.shape[0]
    a = theta + rho * np.eye(n)
    for r, w in zip(r_list, omega):
        a = a + r / (1.0 + w)
    return hermitize(linalg.inv(hermitize(a)))


def _tr(a, b) -> float:
    """``Re tr(a b)`` without forming the product."""
    return float(np.real(np.sum(a * b.T)))


def fixed_point(r_list, theta: np.ndarray, rho: float, tol: float = 1e-10,
                max_iter: int = 500) -> FixedPointState:
    """Solve the interferers' fixed point by direct iteration from ``1/rho``.

    ``r_list`` holds ``R_k`` for the interferers only.
    """
    if rho <= 0:
        raise ValueError("noise variance must be positive")
    r_list = list(r_list)
    if not r_list:
        return FixedPointState(np.zeros(0), _resolvent([], [], theta, rho), 0, 0.0)
    omega = np.full(len(r_list), 1.0 / rho)
    diffs = []
    for it in range(1, max_iter + 1):
        t = _resolvent(r_list, omega, theta, rho)
        new = np.array([_tr(r, t) for r in r_list])
        diff = float(np.max(np.abs(new - omega)))
        diffs.append(diff)
        omega = new
        if diff < tol:
            t = _resolvent(r_list, omega, theta, rho)
            # the resolvent norm is bounded by 1/rho
            assert np.linalg.norm(t, 2) <= (1 + 1e-9) / rho
            return FixedPointState(omega, t, it, diff, tuple(diffs))
    raise ConvergenceError(f"fixed point did not converge in {max_iter} iterations "
                           f"(residual {diff:.3g})", residual=diff, iterations=max_iter)


def omega_prime(state: FixedPointState, r_list, r1: np.ndarray) -> np.ndarray:
    """Solve ``(I - J) omega' = v'``."""
    r_list = list(r_list)
    if not r_list:
        return np.zeros(0)
    t = state.t_matrix
    rt = [r @ t for r in r_list]
    w = state.omega
    jac = np.array([[_tr(rt[k], rt[l]) / (1 + w[l]) ** 2 for l in range(len(rt))]
                    for k in range(len(rt))])
    r1t = r1 @ t
    v = np.array([_tr(rk, r1t) for rk in rt])
    lead = np.max(np.abs(np.linalg.eigvals(jac)))
    if lead >= 1:
        raise NumericalError(f"spectral radius of J is {lead:.3g} >= 1")
    return np.linalg.solve(np.eye(len(rt)) - jac, v)


def se_from_operators(state: FixedPointState, r1: np.ndarray, r_list, r1_var=None,
                      variance_factor: float = 1.0) -> DetEquivSE:
    """Mean, variance and second-order SE from assembled operators."""
    t = state.t_matrix
    mean = max(_tr(r1, t), 0.0)
    rv = r1 if r1_var is None else r1_var
    wp = omega_prime(state, r_list, rv)
    inner = rv + sum((wk / (1 + om) ** 2) * r for wk, om, r in zip(wp, state.omega, r_list))
    t_prime = t @ inner @ t
    var = max(variance_factor * _tr(rv, t_prime), 0.0)
    se = math.log2(1 + mean) - var / (2 * math.log(2) * (1 + mean) ** 2)
    return DetEquivSE(mean, var, se, wp)


def slot_fixed_point(slot: SlotStats, config: DetEquivConfig = DEFAULT_CONFIG) -> FixedPointState:
    r_list = [estimate_operator(slot, k) for k in range(1, slot.n_users)]
    return fixed_point(r_list, theta_matrix(slot), slot.noise_var, config.tol, config.max_iter)


def se_deterministic(state: FixedPointState, slot: SlotStats,
                     config: DetEquivConfig = DEFAULT_CONFIG) -> DetEquivSE:
    """Second-order SE of the tagged user for the beamformers stored in ``slot``.

    ``state`` fixes ``T``; the tagged user's operator is rebuilt from its
    beamformer so that ``state`` can be reused across candidate beamformers.
    """
    r1 = estimate_operator(slot, 0)
    r_list = [estimate_operator(slot, k) for k in range(1, slot.n_users)]
    r1_var = estimate_operator(slot, 0, true_cov=True) if config.variance_cov == "true" else None
    return se_from_operators(state, r1, r_list, r1_var, config.variance_factor)


def g_operator(cov: np.ndarray, t_matrix: np.ndarray) -> np.ndarray:
    """Transmit-side matrix ``G`` with ``tr(R_1 T) = alpha^2 P w^H G w``.

    ``G[a, b] = sum_{i, l} T[i, l] C[b n_rx + l, a n_rx + i]``; for real
    ``C`` and ``T`` this is the receive-weighted block sum of ``C`` over its
    ``n_tx x n_tx`` blocks indexed by receive antenna pairs.
    """
    n_rx = t_matrix.shape[0]
    n_tx = cov.shape[0] // n_rx
    if cov.shape != (n_tx * n_rx, n_tx * n_rx):
        raise ValueError("covariance size is not a multiple of n_rx")
    c4 = cov.reshape(n_tx, n_rx, n_tx, n_rx)
    return hermitize(np.einsum("il,blai->ab", t_matrix, c4))


def _fix_phase(w):
    k = int(np.argmax(np.abs(w)))
    return w * (abs(w[k]) / w[k])


def optimal_beamformer(cov_est: np.ndarray, t_matrix: np.ndarray) -> np.ndarray:
    """Dominant eigenvector of ``G(C_hat, T)`` with its largest entry real positive."""
    g = g_operator(cov_est, t_matrix)
    if not np.any(np.abs(g) > 0):
        raise ValueError("G is identically zero")
    _, v = np.linalg.eigh(g)
    return _fix_phase(v[:, -1])


def assign_beamformers(slot: SlotStats, config: DetEquivConfig = DEFAULT_CONFIG,
                       initial=None) -> SlotStats:
    """Give every user its beamformer according to its rule.

    Users with the ``optimal`` rule take the dominant eigenvector of
    ``G(C_hat_k, T_k)``, where ``T_k`` is the fixed point seen with user
    ``k`` tagged. Since ``T_k`` depends on all beamformers through
    ``Theta``, users are updated in turn for a few rounds starting from
    the isotropic vector.
    """
    ws = list(initial) if initial is not None else [isotropic_beamformer(u.n_tx) for u in slot.users]
    cur = slot.with_beamformers(ws)
    active = [k for k, u in enumerate(slot.users) if u.rule == "optimal" and u.n_tx > 1]
    for _ in range(config.beamformer_rounds if active else 0):
        change = 0.0
        for k in active:
            u = cur.users[k]
            if not np.any(u.cov_est):
                continue
            state = slot_fixed_point(cur.reordered(k), config)
            w = optimal_beamformer(u.cov_est, state.t_matrix)
            change = max(change, 1 - abs(np.vdot(w, u.beamformer)))
            cur = cur.with_user(k, beamformer=w)
        if change < 1e-12:
            break
    return cur


def slot_se(slot: SlotStats, config: DetEquivConfig = DEFAULT_CONFIG,
            beamformers=None) -> tuple[DetEquivSE, SlotStats]:
    """SE of the tagged user at a slot with assigned (or given) beamformers."""
    if beamformers is None:
        slot = assign_beamformers(slot, config)
    else:
        slot = slot.with_beamformers(beamformers)
    if not np.any(slot.users[0].cov_est):
        return DetEquivSE(0.0, 0.0, 0.0, np.zeros(slot.n_users - 1)), slot
    state = slot_fixed_point(slot, config)
    return se_deterministic(state, slot, config), slot
