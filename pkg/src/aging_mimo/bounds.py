"""Monte-Carlo spectral efficiency and the capacity bounds it is compared with.

Each trial draws every user's channel estimate ``h_hat_k ~ CN(0, C_hat_k)``
and an independent error ``h_tilde_k ~ CN(0, Q_k)``. For Gaussian channels
this is exactly the joint law produced by the LMMSE estimator, because
the error is uncorrelated with, hence independent of, the estimate.
Only the beamformed vectors ``H_k w_k`` enter any quantity below, so the
draws are made directly in ``n_rx`` dimensions.

Trials are split into fixed-size chunks with seeds spawned from one
:class:`numpy.random.SeedSequence`, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import hermitize, psd_sqrt
from .combining import theta_matrix
from .detequiv import DEFAULT_CONFIG, DetEquivConfig, slot_se
from .errors import NumericalError
from .estimation import SlotStats

CHUNK = 250
MIN_TRIALS = 100
LN2 = math.log(2)


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    trials: int
    seed: int


@dataclass(frozen=True)
class McSamples:
    """Per-trial quantities shared by all Monte-Carlo estimators."""

    gamma: np.ndarray        # MMSE SINR given the estimates
    gain: np.ndarray         # g^H x_k for every user, shape (trials, K)
    g_norm2: np.ndarray      # ||g||^2
    gamma_lower: np.ndarray  # 1 / [(I + Z^H Phi^{-1} Z)^{-1}]_11 - 1
    seed: int

    @property
    def trials(self) -> int:
        return self.gamma.size


def _beamformed_cov(cov, w, n_rx):
    """Covariance of ``H w`` when ``vec(H)`` has covariance ``cov``."""
    n_tx = w.size
    c4 = cov.reshape(n_tx, n_rx, n_tx, n_rx)
    return hermitize(np.einsum("a,aibl,b->il", w, c4, w.conj()))


def _draw(root, rng, trials):
    n = root.shape[0]
    z = (rng.standard_normal((trials, n)) + 1j * rng.standard_normal((trials, n))) / math.sqrt(2)
    return z @ root.T


def _chunk(slot: SlotStats, roots, phi_inv_root, theta_plus_noise, child, trials):
    rng = np.random.default_rng(child)
    users = slot.users
    n_rx = slot.n_rx
    scale = np.array([u.gain * math.sqrt(u.data_power) for u in users])
    z = np.stack([_draw(r_est, rng, trials) for r_est, _ in roots], axis=2) * scale
    e = np.stack([_draw(r_err, rng, trials) for _, r_err in roots], axis=2) * scale
    x = z + e                                               # true beamformed channels
    f = theta_plus_noise + np.einsum("tik,tlk->til", z, z.conj())
    g = np.linalg.solve(f, z[:, :, 0:1])[:, :, 0]           # MMSE combiner F^{-1} z_1
    num = np.real(np.einsum("ti,ti->t", z[:, :, 0].conj(), g))
    # z^H F^{-1} z = x / (1 + x) with x the SINR; invert to avoid forming F_1
    gamma = num / np.maximum(1.0 - num, np.finfo(float).tiny)
    gain = np.einsum("ti,tik->tk", g.conj(), x)
    g_norm2 = np.real(np.einsum("ti,ti->t", g.conj(), g))
    zw = np.einsum("il,tlk->tik", phi_inv_root, z)
    gram = np.einsum("tik,til->tkl", zw.conj(), zw) + np.eye(len(users))
    diag = np.real(np.linalg.inv(gram)[:, 0, 0])
    gamma_lower = 1.0 / diag - 1.0
    return gamma, gain, g_norm2, gamma_lower


def monte_carlo(slot: SlotStats, trials: int, seed: int, threads: int = 1) -> McSamples:
    """Draw ``trials`` independent estimate/error realizations at a slot."""
    if trials < MIN_TRIALS:
        raise ValueError(f"at least {MIN_TRIALS} trials are required")
    n_rx = slot.n_rx
    roots = []
    for u in slot.users:
        w = u.beamformer
        roots.append((psd_sqrt(_beamformed_cov(u.cov_est, w, n_rx)),
                      psd_sqrt(_beamformed_cov(u.cov_err, w, n_rx))))
    phi = theta_matrix(slot) + slot.noise_var * np.eye(n_rx)
    w_phi, v_phi = np.linalg.eigh(phi)
    phi_inv_root = (v_phi / np.sqrt(w_phi)) @ v_phi.conj().T
    sizes = [CHUNK] * (trials // CHUNK) + ([trials % CHUNK] if trials % CHUNK else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(slot, roots, phi_inv_root, phi, c, s) for c, s in zip(children, sizes)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: _chunk(*a), args))
    else:
        parts = [_chunk(*a) for a in args]
    cat = [np.concatenate([p[i] for p in parts]) for i in range(4)]
    return McSamples(cat[0], cat[1], cat[2], cat[3], int(seed))


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def _samples(slot, trials, seed, threads, samples):
    return samples if samples is not None else monte_carlo(slot, trials, seed, threads)


def mc_expected_se(slot: SlotStats, trials: int = 2000, seed: int = 0, threads: int = 1,
                   samples: McSamples | None = None) -> McEstimate:
    """Sample mean of ``log2(1 + gamma)``."""
    s = _samples(slot, trials, seed, threads, samples)
    v, e = _mean_se(np.log2(1 + s.gamma))
    return McEstimate(v, e, s.trials, s.seed)


def jensen_bound(slot: SlotStats, trials: int = 2000, seed: int = 0, threads: int = 1,
                 samples: McSamples | None = None) -> McEstimate:
    """``log2(1 + E[gamma])``."""
    s = _samples(slot, trials, seed, threads, samples)
    m, e = _mean_se(s.gamma)
    return McEstimate(math.log2(1 + m), e / ((1 + m) * LN2), s.trials, s.seed)


def ngo_bound(slot: SlotStats, trials: int = 2000, seed: int = 0, threads: int = 1,
              samples: McSamples | None = None) -> McEstimate:
    """Harmonic-mean bound ``log2(1 + 1 / E[1 / gamma_lower])``.

    ``gamma_lower`` is computed from the beamformed estimates after
    whitening by ``Theta + sigma^2 I``; with perfect estimates this is the
    usual ``(I + H^H H / sigma^2)^{-1}`` construction.
    """
    s = _samples(slot, trials, seed, threads, samples)
    with np.errstate(divide="ignore"):
        inv = 1.0 / s.gamma_lower
    if not np.all(np.isfinite(inv)):
        return McEstimate(0.0, 0.0, s.trials, s.seed)
    m, e = _mean_se(inv)
    deriv = 1.0 / (m * (m + 1) * LN2)
    return McEstimate(math.log2(1 + 1 / m), deriv * e, s.trials, s.seed)


def _utf_value(gain, g_norm2, noise_var):
    mean_desired = np.mean(gain[:, 0])
    power = np.sum(np.mean(np.abs(gain) ** 2, axis=0))
    num = abs(mean_desired) ** 2
    den = power - num + noise_var * np.mean(g_norm2)
    if den <= 0:
        if num == 0:
            return 0.0
        raise NumericalError("UTF denominator is not positive; increase trials")
    return math.log2(1 + num / den)


def utf_bound(slot: SlotStats, trials: int = 2000, seed: int = 0, threads: int = 1,
              samples: McSamples | None = None, batches: int = 20) -> McEstimate:
    """Use-and-then-forget bound with the MMSE combiner.

    The standard error comes from the spread of the same ratio over
    ``batches`` disjoint batches of trials.
    """
    s = _samples(slot, trials, seed, threads, samples)
    value = _utf_value(s.gain, s.g_norm2, slot.noise_var)
    idx = np.array_split(np.arange(s.trials), batches)
    per = [_utf_value(s.gain[i], s.g_norm2[i], slot.noise_var) for i in idx]
    return McEstimate(value, float(np.std(per, ddof=1) / math.sqrt(batches)), s.trials, s.seed)


def hoydis_reference(slot: SlotStats, config: DetEquivConfig = DEFAULT_CONFIG) -> float:
    """First-order deterministic equivalent ``log2(1 + E[gamma])``.

    ``slot`` must already carry beamformers."""
    res, _ = slot_se(slot, config, beamformers=[u.beamformer for u in slot.users])
    return res.first_order


def all_bounds(slot: SlotStats, trials: int, seed: int, threads: int = 1,
               config: DetEquivConfig = DEFAULT_CONFIG) -> dict[str, McEstimate | float]:
    """Every comparison quantity from one shared set of draws."""
    s = monte_carlo(slot, trials, seed, threads)
    det, _ = slot_se(slot, config, beamformers=[u.beamformer for u in slot.users])
    return {
        "mc": mc_expected_se(slot, samples=s),
        "utf": utf_bound(slot, samples=s),
        "ngo": ngo_bound(slot, samples=s),
        "jensen": jensen_bound(slot, samples=s),
        "hoydis": det.first_order,
        "se_det": det.se,
    }
