"""Second-order statistics and ray-based realizations of aging MIMO channels.

Layout
------
A channel matrix ``H`` has shape ``(n_rx, n_tx)``. Its vector form is the
column-stacked ``vec(H)``, so the receive index runs fastest and a transmit
factor sits outside a receive factor in every Kronecker product::

    cov(t1, t2) = L_min * kron(T_tx(t1, t2), R_rx(t1, t2))

Time is counted in symbol slots with a unit symbol period. Doppler
frequencies are therefore in cycles per slot and velocities in wavelength
units per slot once divided by the carrier wavelength.

Angle model
-----------
Each ray keeps its angles of arrival/departure and its phase over the
sampling window (``mode="persistent"``). ``mode="independent"`` redraws the
angles at every distinct time while keeping phases, which is the other
extreme of the unspecified joint angle law.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, special

from .errors import IntegrationError, SingularNormalizationError

log = logging.getLogger(__name__)

Scalar = Union[float, int]
TimeFunction = Union[Scalar, Callable[[float], float]]

MODES = ("persistent", "independent")
QUAD_EPSABS = 1e-8
QUAD_MAX_EVAL = 2**14
EIG_FLOOR = 1e-12


def _at(value, t):
    return float(value(t)) if callable(value) else float(value)


# ---------------------------------------------------------------------------
# Bessel helpers
# ---------------------------------------------------------------------------

def i0_ratio(z, kappa):
    """Return ``I0(z) / I0(kappa)`` for complex ``z`` and real ``kappa >= 0``.

    Both Bessel values are exponentially scaled before dividing so that
    large concentrations do not overflow.
    """
    z = np.asarray(z, dtype=complex)
    kappa = float(kappa)
    # I0 is even, so the sign of the square-root branch is irrelevant; pick Re(z) >= 0.
    z = np.where(z.real < 0, -z, z)
    return special.ive(0, z) / special.ive(0, kappa) * np.exp(z.real - kappa)


def angle_mean(spectrum: "AngularSpectrum", c, ref):
    """Closed-form ``E[exp(j c cos(ref - theta))]`` for ``theta ~ spectrum``.

    ``c`` and ``ref`` broadcast against each other. Supported for the
    uniform and von Mises kinds; custom densities go through quadrature.
    """
    c = np.asarray(c, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if spectrum.kind == "uniform":
        return special.j0(c) + 0j * ref
    if spectrum.kind == "von_mises":
        k = spectrum.concentration
        arg = np.sqrt(k * k - c * c + 2j * k * c * np.cos(ref - spectrum.center) + 0j)
        return i0_ratio(arg, k)
    raise ValueError("closed form needs a uniform or von Mises spectrum")


def angle_mean_quad(spectrum: "AngularSpectrum", integrand_phase):
    """Adaptive quadrature of ``E[exp(j phase(theta))]`` over ``[-pi, pi]``.

    ``integrand_phase`` maps an angle to an array of real phases; the
    result has the same shape.
    """
    def f(theta):
        return spectrum.density(theta) * np.exp(1j * integrand_phase(theta))

    limit = QUAD_MAX_EVAL // 21
    res, err, info = integrate.quad_vec(
        f, -np.pi, np.pi, epsabs=QUAD_EPSABS, epsrel=0.0, limit=limit,
        full_output=True)
    if not info.success or err > QUAD_EPSABS:
        raise IntegrationError(f"quadrature did not converge (error estimate {err:.3g})")
    return np.asarray(res)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear arrays at the user (tx) and the base station (rx).

    Spacings are in wavelengths; ``rx_orientation`` is the base-station
    array orientation in radians. The user's array is aligned with its
    heading, which lives in :class:`MobilityModel`.
    """

    n_tx: int
    n_rx: int
    d_tx: float = 0.5
    d_rx: float = 0.5
    rx_orientation: float = 0.0

    def __post_init__(self):
        if int(self.n_tx) != self.n_tx or self.n_tx < 1:
            raise ValueError("n_tx must be a positive integer")
        if int(self.n_rx) != self.n_rx or self.n_rx < 1:
            raise ValueError("n_rx must be a positive integer")
        if self.d_tx < 0 or self.d_rx < 0:
            raise ValueError("antenna spacings must be nonnegative")

    @property
    def n(self) -> int:
        return self.n_tx * self.n_rx


@dataclass(frozen=True)
class AngularSpectrum:
    """Distribution of ray angles on ``[-pi, pi]``."""

    kind: str = "uniform"
    center: float = 0.0
    concentration: float = 0.0
    pdf: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("uniform", "von_mises", "custom_pdf"):
            raise ValueError(f"unknown angular spectrum kind {self.kind!r}")
        if self.concentration < 0:
            raise ValueError("concentration must be nonnegative")
        if self.kind == "uniform" and self.concentration != 0:
            raise ValueError("a uniform spectrum has zero concentration")
        if self.kind == "custom_pdf":
            if self.pdf is None:
                raise ValueError("custom_pdf spectrum needs a pdf")
            mass, _ = integrate.quad(lambda x: float(self.pdf(x)), -np.pi, np.pi,
                                     epsabs=1e-10, limit=200)
            if abs(mass - 1.0) > 1e-6:
                raise ValueError(f"custom pdf integrates to {mass:.8g}, not 1")

    @classmethod
    def uniform(cls) -> "AngularSpectrum":
        return cls("uniform")

    @classmethod
    def von_mises(cls, center: float, concentration: float) -> "AngularSpectrum":
        if concentration == 0:
            return cls("uniform", center=center)
        return cls("von_mises", center=center, concentration=concentration)

    @property
    def has_closed_form(self) -> bool:
        return self.kind != "custom_pdf"

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "uniform":
            return np.full_like(theta, 1.0 / (2 * np.pi))
        if self.kind == "von_mises":
            k = self.concentration
            # exp(k cos - k) / (2 pi ive(0, k)) is the overflow-safe form
            return np.exp(k * (np.cos(theta - self.center) - 1.0)) / (2 * np.pi * special.ive(0, k))
        return np.asarray(self.pdf(theta), dtype=float)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(-np.pi, np.pi, size)
        if self.kind == "von_mises":
            return rng.vonmises(self.center, self.concentration, size)
        grid = np.linspace(-np.pi, np.pi, 8193)
        cdf = integrate.cumulative_trapezoid(self.density(grid), grid, initial=0.0)
        cdf /= cdf[-1]
        return np.interp(rng.uniform(0.0, 1.0, size), cdf, grid)


@dataclass(frozen=True)
class MobilityModel:
    """User motion and scattering environment.

    ``velocity``, ``heading`` and ``scatterers`` are constants or callables
    of the slot index. ``carrier_wavelength`` shares the length unit of
    ``velocity`` so ``velocity / carrier_wavelength`` is a Doppler in
    cycles per slot.
    """

    velocity: TimeFunction = 0.0
    heading: TimeFunction = 0.0
    scatterers: TimeFunction = 1
    aoa_spectrum: AngularSpectrum = field(default_factory=AngularSpectrum.uniform)
    aod_spectrum: AngularSpectrum = field(default_factory=AngularSpectrum.uniform)
    carrier_wavelength: float = 1.0

    def __post_init__(self):
        if self.carrier_wavelength <= 0:
            raise ValueError("carrier wavelength must be positive")
        if not callable(self.velocity) and self.velocity < 0:
            raise ValueError("velocity must be nonnegative")
        if not callable(self.scatterers) and self.scatterers < 1:
            raise ValueError("at least one scatterer is required")

    def velocity_at(self, t) -> float:
        v = _at(self.velocity, t)
        if v < 0:
            raise ValueError(f"negative velocity at t={t}")
        return v

    def heading_at(self, t) -> float:
        return _at(self.heading, t)

    def scatterers_at(self, t) -> int:
        n = int(round(_at(self.scatterers, t)))
        if n < 1:
            raise ValueError(f"no scatterers at t={t}")
        return n

    @property
    def stationary(self) -> bool:
        return not any(callable(v) for v in (self.velocity, self.heading, self.scatterers))

    def doppler_phase(self, t):
        """Phase slope ``2 pi nu(t) t / lambda`` multiplying ``cos(eta - theta)``."""
        return 2 * np.pi * self.velocity_at(t) * t / self.carrier_wavelength


@dataclass(frozen=True)
class RayRealization:
    """Ray parameters drawn for one trial."""

    phases: np.ndarray
    aoas: np.ndarray
    aods: np.ndarray

    def dopplers(self, mobility: MobilityModel, t) -> np.ndarray:
        """Per-ray Doppler shifts ``nu(t) cos(eta(t) - aod) / lambda``."""
        return (mobility.velocity_at(t) * np.cos(mobility.heading_at(t) - self.aods)
                / mobility.carrier_wavelength)


# ---------------------------------------------------------------------------
# Steering vectors and sampling
# ---------------------------------------------------------------------------

def steering_vector(geometry: ArrayGeometry, angle, side: str, tx_orientation: float = 0.0):
    """ULA response ``exp(j 2 pi d p cos(ref - angle))`` for ``p = 0..n-1``.

    ``angle`` may be an array; the antenna index is the last axis.
    """
    if side == "rx":
        n, d, ref = geometry.n_rx, geometry.d_rx, geometry.rx_orientation
    elif side == "tx":
        n, d, ref = geometry.n_tx, geometry.d_tx, tx_orientation
    else:
        raise ValueError("side must be 'tx' or 'rx'")
    angle = np.asarray(angle, dtype=float)
    p = np.arange(n)
    return np.exp(2j * np.pi * d * np.cos(ref - angle)[..., None] * p)


def draw_rays(mobility: MobilityModel, n_rays: int, rng: np.random.Generator) -> RayRealization:
    return RayRealization(
        phases=rng.uniform(-np.pi, np.pi, n_rays),
        aoas=mobility.aoa_spectrum.sample(rng, n_rays),
        aods=mobility.aod_spectrum.sample(rng, n_rays),
    )


def sample_channel(geometry: ArrayGeometry, mobility: MobilityModel, times: Sequence[float],
                   rng_seed, mode: str = "persistent") -> list[np.ndarray]:
    """Ray-sum channel matrices ``H(t)`` of shape ``(n_rx, n_tx)``.

    Ray phases are drawn once and held across ``times``. The first
    ``L(t)`` rays are active at slot ``t``, so rays persist with matched
    indices when the scatterer count changes.
    """
    times = list(times)
    if not times:
        raise ValueError("times must not be empty")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    rng = np.random.default_rng(rng_seed)
    l_max = max(mobility.scatterers_at(t) for t in times)
    rays = draw_rays(mobility, l_max, rng)
    out = []
    drawn = {}
    for t in times:
        if mode == "independent":
            if t not in drawn:
                drawn[t] = RayRealization(rays.phases, mobility.aoa_spectrum.sample(rng, l_max),
                                          mobility.aod_spectrum.sample(rng, l_max))
            r = drawn[t]
        else:
            r = rays
        n_active = mobility.scatterers_at(t)
        sl = slice(0, n_active)
        phase = 2 * np.pi * r.dopplers(mobility, t)[sl] * t + r.phases[sl]
        a_r = steering_vector(geometry, r.aoas[sl], "rx")
        a_t = steering_vector(geometry, r.aods[sl], "tx", mobility.heading_at(t))
        out.append(np.einsum("i,ip,iq->pq", np.exp(1j * phase), a_r, a_t))
    return out


def sample_gaussian(stats: "SecondOrderStats", times: Sequence[float], n_samples: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Jointly Gaussian channel vectors at ``times``.

    Returns an array of shape ``(n_samples, len(times), N)`` drawn from
    ``CN(0, [cross_cov(ti, tj)])``.
    """
    times = list(times)
    n = stats.n
    big = np.block([[stats.cross_cov(a, b) for b in times] for a in times])
    root = psd_sqrt(big)
    z = (rng.standard_normal((n_samples, big.shape[0]))
         + 1j * rng.standard_normal((n_samples, big.shape[0]))) / np.sqrt(2)
    return (z @ root.T).reshape(n_samples, len(times), n)


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------

def hermitize(a):
    return 0.5 * (a + a.conj().T)


def psd_sqrt(a):
    """Hermitian square root with negative eigenvalues clipped to zero."""
    w, v = np.linalg.eigh(hermitize(a))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def inv_sqrt_psd(a, regularize: bool = True, floor: float = EIG_FLOOR):
    """``a^{-1/2}`` with eigenvalues floored at ``floor * max eigenvalue``."""
    w, v = np.linalg.eigh(hermitize(a))
    lo = floor * max(w.max(), 0.0)
    if lo <= 0:
        raise SingularNormalizationError("normalizer is not positive definite")
    if np.any(w < lo):
        if not regularize:
            raise SingularNormalizationError(
                f"normalizer eigenvalue {w.min():.3g} below floor {lo:.3g}")
        w = np.maximum(w, lo)
    return (v / np.sqrt(w)) @ v.conj().T


def uniform_correlation(n: int, rho: float) -> np.ndarray:
    """Equicorrelated matrix ``rho * 1 1^T + (1 - rho) I``."""
    if not 0 <= rho <= 1:
        raise ValueError("correlation coefficient must lie in [0, 1]")
    return rho * np.ones((n, n)) + (1 - rho) * np.eye(n)


# ---------------------------------------------------------------------------
# Angular kernels
# ---------------------------------------------------------------------------

def _combine(a1, eta1, a2, eta2):
    """Write ``a1 cos(eta1 - x) - a2 cos(eta2 - x)`` as ``r cos(phi - x)``."""
    xs = a1 * np.cos(eta1) - a2 * np.cos(eta2)
    ys = a1 * np.sin(eta1) - a2 * np.sin(eta2)
    return np.hypot(xs, ys), np.arctan2(ys, xs)


def tx_kernel(geometry, mobility, t1, t2, mode="persistent", method="closed_form"):
    """Transmit-side factor ``E[a_T(t1) e^{j...} (a_T(t2) e^{j...})^H]``.

    Entry ``(q1, q2)`` is the angle average of
    ``exp(j[(k q1 + psi(t1)) cos(eta(t1) - th) - (k q2 + psi(t2)) cos(eta(t2) - th)])``
    with ``k = 2 pi d_tx`` and ``psi(t) = 2 pi nu(t) t / lambda``.
    """
    spec = mobility.aod_spectrum
    q = np.arange(geometry.n_tx, dtype=float)
    k = 2 * np.pi * geometry.d_tx
    a1 = k * q + mobility.doppler_phase(t1)
    a2 = k * q + mobility.doppler_phase(t2)
    e1, e2 = mobility.heading_at(t1), mobility.heading_at(t2)
    if method == "closed_form" and not spec.has_closed_form:
        method = "quadrature"
    if mode == "independent" and t1 != t2:
        if method == "closed_form":
            m1, m2 = angle_mean(spec, a1, e1), angle_mean(spec, a2, e2)
        else:
            m1 = angle_mean_quad(spec, lambda th: a1 * np.cos(e1 - th))
            m2 = angle_mean_quad(spec, lambda th: a2 * np.cos(e2 - th))
        return np.outer(m1, m2.conj())
    if method == "closed_form":
        r, phi = _combine(a1[:, None], e1, a2[None, :], e2)
        return angle_mean(spec, r, phi)
    return angle_mean_quad(
        spec, lambda th: a1[:, None] * np.cos(e1 - th) - a2[None, :] * np.cos(e2 - th))


def rx_kernel(geometry, mobility, t1, t2, mode="persistent", method="closed_form"):
    """Receive-side factor ``E[a_R(t1) a_R(t2)^H]``."""
    spec = mobility.aoa_spectrum
    p = np.arange(geometry.n_rx, dtype=float)
    k = 2 * np.pi * geometry.d_rx
    z = geometry.rx_orientation
    if method == "closed_form" and not spec.has_closed_form:
        method = "quadrature"
    if mode == "independent" and t1 != t2:
        if method == "closed_form":
            m = angle_mean(spec, k * p, z)
        else:
            m = angle_mean_quad(spec, lambda th: k * p * np.cos(z - th))
        return np.outer(m, m.conj())
    dp = k * (p[:, None] - p[None, :])
    if method == "closed_form":
        return angle_mean(spec, dp, z)
    return angle_mean_quad(spec, lambda th: dp * np.cos(z - th))


def scatterer_ratio(mobility, t1, t2) -> float:
    """``min(L1, L2) / sqrt(L1 L2)``."""
    l1, l2 = mobility.scatterers_at(t1), mobility.scatterers_at(t2)
    return min(l1, l2) / math.sqrt(l1 * l2)


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")


def covariance(geometry: ArrayGeometry, mobility: MobilityModel, t1, t2,
               mode: str = "persistent", method: str = "closed_form") -> np.ndarray:
    """Cross-covariance ``E[h(t1) h(t2)^H]`` in the column-stacked layout.

    ``method="closed_form"`` uses Bessel expressions when the spectra allow
    it and falls back to quadrature otherwise; ``method="quadrature"``
    always integrates numerically.
    """
    _check_mode(mode)
    l_min = min(mobility.scatterers_at(t1), mobility.scatterers_at(t2))
    tt = tx_kernel(geometry, mobility, t1, t2, mode, method)
    rr = rx_kernel(geometry, mobility, t1, t2, mode, method)
    c = l_min * np.kron(tt, rr)
    return hermitize(c) if t1 == t2 else c


def _whiten(cross, left, right, regularize):
    return inv_sqrt_psd(left, regularize) @ cross @ inv_sqrt_psd(right, regularize)


def correlation_from_kernels(geometry, mobility, t1, t2, mode, method, regularize=True):
    tt = tx_kernel(geometry, mobility, t1, t2, mode, method)
    rr = rx_kernel(geometry, mobility, t1, t2, mode, method)
    t11 = tx_kernel(geometry, mobility, t1, t1, mode, method)
    t22 = t11 if t1 == t2 else tx_kernel(geometry, mobility, t2, t2, mode, method)
    r11 = rx_kernel(geometry, mobility, t1, t1, mode, method)
    r22 = r11 if t1 == t2 else rx_kernel(geometry, mobility, t2, t2, mode, method)
    tx_block = _whiten(tt, t11, t22, regularize)
    rx_block = _whiten(rr, r11, r22, regularize)
    return scatterer_ratio(mobility, t1, t2) * np.kron(tx_block, rx_block)


def correlation_numeric(geometry: ArrayGeometry, mobility: MobilityModel, t1, t2,
                        mode: str = "persistent", regularize: bool = True) -> np.ndarray:
    """Whitened correlation ``P_h(t1, t2)`` with angle averages by quadrature."""
    _check_mode(mode)
    return correlation_from_kernels(geometry, mobility, t1, t2, mode, "quadrature", regularize)


def _stationary_tx_corr(geometry, mean_fn, k_t, psi, regularize):
    q = np.arange(geometry.n_tx, dtype=float)
    lag = q[None, :] - q[:, None]  # q2 - q1
    r_at = mean_fn(-k_t * lag)
    t_t = mean_fn(-(k_t * lag + psi))
    w = inv_sqrt_psd(r_at, regularize)
    return w @ t_t @ w


def correlation_vonmises(geometry: ArrayGeometry, velocity: float, heading: float,
                         spectrum: AngularSpectrum, tau: float, wavelength: float = 1.0,
                         regularize: bool = True) -> np.ndarray:
    """Stationary correlation ``P_h(tau)`` for von Mises departure angles.

    The receive block is the identity; the transmit block is
    ``R^{-1/2} T(tau) R^{-1/2}`` with Bessel-ratio entries.
    """
    if spectrum.kind not in ("von_mises", "uniform"):
        raise ValueError("correlation_vonmises needs a von Mises or uniform spectrum")
    k_t = 2 * np.pi * geometry.d_tx
    psi = 2 * np.pi * velocity * tau / wavelength
    tx_block = _stationary_tx_corr(geometry, lambda c: angle_mean(spectrum, c, heading),
                                   k_t, psi, regularize)
    return np.kron(tx_block, np.eye(geometry.n_rx))


def correlation_uniform(geometry: ArrayGeometry, velocity: float, tau: float,
                        wavelength: float = 1.0, regularize: bool = True) -> np.ndarray:
    """Stationary correlation for uniform angles: ``T(tau)[q1, q2] = J0(k (q2 - q1) + psi)``."""
    k_t = 2 * np.pi * geometry.d_tx
    psi = 2 * np.pi * velocity * tau / wavelength
    tx_block = _stationary_tx_corr(geometry, special.j0, k_t, psi, regularize)
    return np.kron(tx_block, np.eye(geometry.n_rx))


# ---------------------------------------------------------------------------
# Statistics objects
# ---------------------------------------------------------------------------

class SecondOrderStats:
    """Second-order description of one user's channel process.

    Subclasses implement :meth:`_cross_cov`; results are memoized per time
    pair, so instances must be treated as immutable.
    """

    n_tx: int
    n_rx: int

    def __init__(self):
        self._cache = {}

    @property
    def n(self) -> int:
        return self.n_tx * self.n_rx

    def _cross_cov(self, t1, t2):
        raise NotImplementedError

    def cross_cov(self, t1, t2) -> np.ndarray:
        """``E[h(t1) h(t2)^H]``."""
        key = (float(t1), float(t2))
        if key not in self._cache:
            if (key[1], key[0]) in self._cache:
                self._cache[key] = self._cache[(key[1], key[0])].conj().T
            else:
                c = self._cross_cov(key[0], key[1])
                self._cache[key] = hermitize(c) if key[0] == key[1] else c
        return self._cache[key]

    def cov(self, t) -> np.ndarray:
        return self.cross_cov(t, t)

    def corr(self, t1, t2) -> np.ndarray:
        """Whitened cross-covariance ``C(t1)^{-1/2} C(t1, t2) C(t2)^{-1/2}``."""
        return _whiten(self.cross_cov(t1, t2), self.cov(t1), self.cov(t2), True)


class RayStats(SecondOrderStats):
    """Statistics of the ray-sum channel of :func:`sample_channel`."""

    def __init__(self, geometry: ArrayGeometry, mobility: MobilityModel,
                 mode: str = "persistent", method: str = "closed_form"):
        super().__init__()
        _check_mode(mode)
        self.geometry = geometry
        self.mobility = mobility
        self.mode = mode
        self.method = method
        self.n_tx = geometry.n_tx
        self.n_rx = geometry.n_rx

    def _cross_cov(self, t1, t2):
        return covariance(self.geometry, self.mobility, t1, t2, self.mode, self.method)

    def corr(self, t1, t2):
        c = correlation_from_kernels(self.geometry, self.mobility, t1, t2, self.mode, self.method)
        if not self.mobility.stationary:
            cond = np.linalg.cond(self.cov(t1))
            if cond > 1e8:
                log.warning("correlation normalizer is ill-conditioned (cond %.3g)", cond)
        return c


class KroneckerStats(SecondOrderStats):
    """Separable model ``sqrt(v1 v2) J0(2 pi (f1 t1 - f2 t2)) kron(P_tx, P_rx)``.

    ``doppler`` is a normalized Doppler in cycles per slot and ``variance``
    the channel power; either may depend on the slot index.
    """

    def __init__(self, tx_corr, rx_corr, doppler: TimeFunction = 0.0,
                 variance: TimeFunction = 1.0):
        super().__init__()
        self.tx_corr = np.asarray(tx_corr, dtype=complex)
        self.rx_corr = np.asarray(rx_corr, dtype=complex)
        self.doppler = doppler
        self.variance = variance
        self.n_tx = self.tx_corr.shape[0]
        self.n_rx = self.rx_corr.shape[0]
        self._spatial = np.kron(self.tx_corr, self.rx_corr)

    def temporal(self, t1, t2) -> float:
        arg = 2 * np.pi * (_at(self.doppler, t1) * t1 - _at(self.doppler, t2) * t2)
        return math.sqrt(_at(self.variance, t1) * _at(self.variance, t2)) * float(special.j0(arg))

    def _cross_cov(self, t1, t2):
        return self.temporal(t1, t2) * self._spatial
