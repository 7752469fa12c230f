"""Quick invariant checks run by ``aging-mimo selftest``.

Each check draws a handful of random cases from a fixed seed and returns
``(name, passed, detail)``. The pytest suite covers the same properties
more thoroughly; this module gives an installed copy a cheap sanity run.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .channel import ArrayGeometry, correlation_uniform, hermitize
from .combining import (apply_A, apply_A_adjoint, combiner_context, commutation,
                        instantaneous_sinr, mmse_combiner, sinr_ratio_form, vec)
from .detequiv import fixed_point
from .estimation import SlotStats, UserSlot
from .optimizer import project_power

TOL = 1e-8


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _psd(rng, n, rank=None):
    a = _crandn(rng, n, rank or n)
    return hermitize(a @ a.conj().T)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_commutation(rng):
    worst = 0.0
    for _ in range(20):
        nt, nr = rng.integers(1, 5), rng.integers(1, 9)
        k = commutation(nt, nr)
        x = _crandn(rng, nr, nt)
        worst = max(worst, _rel(k.apply(vec(x)), vec(x.T)))
        p = k.matrix()
        worst = max(worst, _rel(p.T @ p, np.eye(nt * nr)))
        a, b = _crandn(rng, nt, nt), _crandn(rng, nr, nr)
        # K (A kron B) K^T = B kron A
        worst = max(worst, _rel(p @ np.kron(a, b) @ p.T, np.kron(b, a)))
    return "commutation", worst < TOL, f"max rel err {worst:.2e}"


def check_operator_identity(rng):
    worst = 0.0
    for _ in range(20):
        nt, nr = rng.integers(1, 5), rng.integers(1, 9)
        h = _crandn(rng, nr, nt)
        cx = _psd(rng, nt)
        v = vec(h)
        worst = max(worst, _rel(apply_A(np.outer(v, v.conj()), cx), h @ cx @ h.conj().T))
    return "operator identity", worst < TOL, f"max rel err {worst:.2e}"


def check_adjoint(rng):
    worst = 0.0
    for _ in range(20):
        nt, nr = rng.integers(1, 5), rng.integers(1, 9)
        d = _crandn(rng, nt * nr, nt * nr)
        y = _crandn(rng, nr, nr)
        cx = _crandn(rng, nt, nt)
        lhs = np.vdot(y, apply_A(d, cx))
        rhs = np.vdot(apply_A_adjoint(y, cx), d)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return "adjoint identity", worst < TOL, f"max rel err {worst:.2e}"


def random_slot(rng, n_users, n_tx, n_rx, noise_var=0.5):
    users = []
    for _ in range(n_users):
        n = n_tx * n_rx
        c_true = _psd(rng, n)
        c_est = 0.6 * c_true
        w = _crandn(rng, n_tx)
        users.append(UserSlot(float(rng.uniform(0.5, 2.0)), c_est, c_true - c_est, c_true,
                              float(rng.uniform(0.5, 2.0)), n_tx, w / np.linalg.norm(w)))
    return SlotStats(tuple(users), noise_var)


def check_sinr_equivalence(rng):
    worst = 0.0
    for _ in range(20):
        nt, nr = int(rng.integers(1, 5)), int(rng.integers(1, 9))
        slot = random_slot(rng, int(rng.integers(1, 4)), nt, nr)
        ests = [psd_draw(rng, u.cov_est) for u in slot.users]
        ctx = combiner_context(slot, ests)
        g = mmse_combiner(slot, ests, ctx)
        a, b = instantaneous_sinr(slot, ests, ctx), sinr_ratio_form(g, ctx)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    return "SINR equivalence", worst < TOL, f"max rel err {worst:.2e}"


def psd_draw(rng, cov):
    w, v = np.linalg.eigh(cov)
    return (v * np.sqrt(np.clip(w, 0, None))) @ _crandn(rng, cov.shape[0])


def check_jakes(rng):
    geo = ArrayGeometry(1, 3)
    taus = np.linspace(0, 5, 50)
    worst = max(np.max(np.abs(correlation_uniform(geo, 0.3, tau) - special.j0(2 * np.pi * 0.3 * tau) * np.eye(3)))
                for tau in taus)
    return "Jakes reduction", worst < 1e-12, f"max abs err {worst:.2e}"


def check_projection(rng):
    worst = 0.0
    grid = np.linspace(0, 2, 401)
    gx, gy = np.meshgrid(grid, grid)
    feas = gx + gy <= 2 + 1e-12
    for _ in range(20):
        v = rng.uniform(-1, 3, 2)
        p = project_power(v, 2.0)
        d = np.where(feas, (gx - v[0]) ** 2 + (gy - v[1]) ** 2, np.inf)
        i = np.unravel_index(np.argmin(d), d.shape)
        worst = max(worst, float(np.hypot(p[0] - gx[i], p[1] - gy[i])))
    return "projection oracle", worst <= 5e-3 * np.sqrt(2), f"max distance to grid optimum {worst:.2e}"


def check_fixed_point(rng):
    worst = 0
    for _ in range(10):
        n = int(rng.integers(2, 9))
        rs = [_psd(rng, n) / n for _ in range(int(rng.integers(1, 4)))]
        st = fixed_point(rs, 0.1 * _psd(rng, n) / n, 1.5)
        worst = max(worst, st.iterations)
    return "fixed-point contraction", worst <= 200, f"max iterations {worst}"


CHECKS = (check_commutation, check_operator_identity, check_adjoint, check_sinr_equivalence,
          check_jakes, check_projection, check_fixed_point)


def run(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(seed)
    return [(name, bool(ok), detail) for name, ok, detail in (c(rng) for c in CHECKS)]


__all__ = ["run", "CHECKS", "random_slot"]
