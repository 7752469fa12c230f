"""Operator algebra, MMSE receive combining and instantaneous SINR.

Conventions
-----------
``<A, B> = sum(A * conj(B))`` is the Frobenius inner product. Channel
vectors are column-stacked, ``h = vec(H)`` with ``H`` of shape
``(n_rx, n_tx)``.

The block operator maps an ``N x N`` matrix ``D`` and a transmit covariance
``C_x`` to an ``n_rx x n_rx`` matrix::

    A(D)[i, l] = sum_{a, b} D[a n_rx + i, b n_rx + l] C_x[a, b]

so that ``A(vec(H) vec(H)^H) = H C_x H^H`` for any complex ``C_x``. Its
adjoint is ``Y -> kron(conj(C_x), Y)``; for the real covariances of most
examples the conjugate is immaterial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .channel import hermitize
from .errors import NumericalError, SingularSystemError
from .estimation import SlotStats


@dataclass(frozen=True)
class CommutationMatrix:
    """Permutation with ``P vec(X) = vec(X^T)`` for ``X`` of shape ``(n_rx, n_tx)``."""

    n_tx: int
    n_rx: int
    perm: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[self.perm, ...]

    def matrix(self) -> np.ndarray:
        n = self.perm.size
        p = np.zeros((n, n))
        p[np.arange(n), self.perm] = 1.0
        return p

    @property
    def inverse(self) -> "CommutationMatrix":
        return CommutationMatrix(self.n_rx, self.n_tx, np.argsort(self.perm))


def commutation(n_tx: int, n_rx: int) -> CommutationMatrix:
    if n_tx < 1 or n_rx < 1:
        raise ValueError("sizes must be positive")
    i, a = np.meshgrid(np.arange(n_rx), np.arange(n_tx), indexing="ij")
    # row i*n_tx + a of vec(X^T) picks X[i, a] = vec(X)[a*n_rx + i]
    return CommutationMatrix(n_tx, n_rx, (a * n_rx + i).reshape(-1))


def vec(h: np.ndarray) -> np.ndarray:
    return np.asarray(h).reshape(-1, order="F")


def unvec(v: np.ndarray, n_rx: int) -> np.ndarray:
    return np.asarray(v).reshape(n_rx, -1, order="F")


def inner(a, b) -> complex:
    return complex(np.vdot(b, a))


def apply_A(d: np.ndarray, cov_x: np.ndarray, n_rx: int | None = None) -> np.ndarray:
    """Block operator ``A(D)`` for transmit covariance ``cov_x``."""
    cov_x = np.atleast_2d(cov_x)
    n_tx = cov_x.shape[0]
    if n_rx is None:
        n_rx = d.shape[0] // n_tx
    if d.shape != (n_tx * n_rx, n_tx * n_rx):
        raise ValueError(f"D of shape {d.shape} does not match n_tx={n_tx}, n_rx={n_rx}")
    d4 = d.reshape(n_tx, n_rx, n_tx, n_rx)
    return np.einsum("aibl,ab->il", d4, cov_x)


def apply_A_adjoint(y: np.ndarray, cov_x: np.ndarray) -> np.ndarray:
    return np.kron(np.conj(np.atleast_2d(cov_x)), y)


def theta_matrix(slot: SlotStats) -> np.ndarray:
    """Error-induced interference ``sum_k alpha_k^2 A_k(Q_k)``."""
    return hermitize(sum(u.gain**2 * apply_A(u.cov_err, u.tx_cov) for u in slot.users))


def estimate_operator(slot: SlotStats, k: int, true_cov: bool = False) -> np.ndarray:
    """``R_k = alpha_k^2 A_k(C_hat_k)`` (or with ``C_h_k`` when ``true_cov``)."""
    u = slot.users[k]
    c = u.cov_true if true_cov else u.cov_est
    return hermitize(u.gain**2 * apply_A(c, u.tx_cov))


@dataclass(frozen=True)
class CombinerContext:
    """``F = sum_k alpha_k^2 A_k(D_k) + sigma^2 I`` and ``F_1`` without the tagged estimate."""

    f: np.ndarray
    f1: np.ndarray
    d: tuple[np.ndarray, ...]
    desired: np.ndarray  # alpha_1 sqrt(P_1) H_hat_1 w_1


def combiner_context(slot: SlotStats, estimates) -> CombinerContext:
    n_rx = slot.n_rx
    f = slot.noise_var * np.eye(n_rx, dtype=complex)
    ds = []
    for u, h in zip(slot.users, estimates):
        dk = u.cov_err + np.outer(h, h.conj())
        ds.append(dk)
        f = f + u.gain**2 * apply_A(dk, u.tx_cov)
    f = hermitize(f)
    u1 = slot.users[0]
    desired = u1.gain * np.sqrt(u1.data_power) * (unvec(estimates[0], n_rx) @ u1.beamformer)
    f1 = hermitize(f - np.outer(desired, desired.conj()))
    lo = np.linalg.eigvalsh(f1)[0]
    if lo < -1e-10 * np.linalg.norm(f, 2):
        raise NumericalError(f"F_1 is indefinite (smallest eigenvalue {lo:.3g})")
    return CombinerContext(f, f1, tuple(ds), desired)


def mmse_combiner(slot: SlotStats, estimates, context: CombinerContext | None = None) -> np.ndarray:
    """MMSE receive vector ``alpha_1 sqrt(P_1) F^{-1} H_hat_1 w_1``."""
    ctx = context or combiner_context(slot, estimates)
    return linalg.solve(ctx.f, ctx.desired, assume_a="her")


def instantaneous_sinr(slot: SlotStats, estimates, context: CombinerContext | None = None) -> float:
    """``alpha_1^2 h_hat_1^H kron(conj(C_x1), F_1^{-1}) h_hat_1``."""
    ctx = context or combiner_context(slot, estimates)
    u1 = slot.users[0]
    try:
        f1_inv = linalg.inv(ctx.f1)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("F_1 is singular") from exc
    h = estimates[0]
    k = np.kron(np.conj(u1.tx_cov), hermitize(f1_inv))
    return max(float(np.real(u1.gain**2 * np.vdot(h, k @ h))), 0.0)


def sinr_ratio_form(g: np.ndarray, context: CombinerContext) -> float:
    """``<g g^H, F - F_1> / <g g^H, F_1>`` for a receive vector ``g``."""
    num = np.real(np.vdot(g, (context.f - context.f1) @ g))
    den = np.real(np.vdot(g, context.f1 @ g))
    return float(num / den)


def instantaneous_se(gamma) -> float:
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("SINR must be nonnegative")
    return np.log2(1.0 + gamma)
