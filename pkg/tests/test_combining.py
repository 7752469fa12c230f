import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aging_mimo.combining import (apply_A, apply_A_adjoint, combiner_context, commutation, inner,
                                  instantaneous_se, instantaneous_sinr, mmse_combiner,
                                  sinr_ratio_form, theta_matrix, unvec, vec)
from aging_mimo.selftest import psd_draw, random_slot
from conftest import crandn, rand_psd

dims = st.tuples(st.integers(1, 4), st.integers(1, 8))


@settings(max_examples=50, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_commutation_transposes(d, seed):
    nt, nr = d
    rng = np.random.default_rng(seed)
    k = commutation(nt, nr)
    x = crandn(rng, nr, nt)
    np.testing.assert_array_equal(k.apply(vec(x)), vec(x.T))
    np.testing.assert_array_equal(k.inverse.apply(k.apply(vec(x))), vec(x))
    p = k.matrix()
    np.testing.assert_array_equal(p @ p.T, np.eye(nt * nr))
    a, b = crandn(rng, nt, nt), crandn(rng, nr, nr)
    np.testing.assert_allclose(p @ np.kron(a, b) @ p.T, np.kron(b, a), atol=1e-12)


def test_vec_roundtrip(rng):
    x = crandn(rng, 3, 2)
    np.testing.assert_array_equal(unvec(vec(x), 3), x)
    assert vec(x)[1] == x[1, 0]  # receive index runs fastest


@settings(max_examples=50, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_operator_identity(d, seed):
    nt, nr = d
    rng = np.random.default_rng(seed)
    h = crandn(rng, nr, nt)
    cx = crandn(rng, nt, nt)  # the identity holds for any complex C_x
    v = vec(h)
    np.testing.assert_allclose(apply_A(np.outer(v, v.conj()), cx), h @ cx @ h.conj().T,
                               atol=1e-12 * max(1, np.abs(h).max() ** 2 * np.abs(cx).max()))


@settings(max_examples=50, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_adjoint_identity(d, seed):
    nt, nr = d
    rng = np.random.default_rng(seed)
    dm = crandn(rng, nt * nr, nt * nr)
    y = crandn(rng, nr, nr)
    cx = crandn(rng, nt, nt)
    assert abs(inner(apply_A(dm, cx), y) - inner(dm, apply_A_adjoint(y, cx))) < 1e-10 * (1 + abs(inner(dm, dm)))


def test_operator_of_kronecker(rng):
    tx, rx = rand_psd(rng, 3), rand_psd(rng, 4)
    cx = rand_psd(rng, 3)
    # A(T kron R) = tr(T C_x^T) R
    np.testing.assert_allclose(apply_A(np.kron(tx, rx), cx), np.trace(tx @ cx.T) * rx, atol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        apply_A(np.eye(6), np.eye(4))


def test_theta_from_errors(rng):
    slot = random_slot(rng, 2, 2, 3)
    ref = sum(u.gain**2 * apply_A(u.cov_err, u.tx_cov) for u in slot.users)
    np.testing.assert_allclose(theta_matrix(slot), ref, atol=1e-12)


class TestSinr:
    def test_ratio_form_equals_closed_form(self, rng):
        for _ in range(30):
            nt, nr = int(rng.integers(1, 5)), int(rng.integers(1, 9))
            slot = random_slot(rng, int(rng.integers(1, 4)), nt, nr)
            ests = [psd_draw(rng, u.cov_est) for u in slot.users]
            ctx = combiner_context(slot, ests)
            g = mmse_combiner(slot, ests, ctx)
            a = instantaneous_sinr(slot, ests, ctx)
            assert abs(a - sinr_ratio_form(g, ctx)) <= 1e-8 * a

    def test_mmse_maximizes_ratio(self, rng):
        slot = random_slot(rng, 3, 2, 5)
        ests = [psd_draw(rng, u.cov_est) for u in slot.users]
        ctx = combiner_context(slot, ests)
        best = sinr_ratio_form(mmse_combiner(slot, ests, ctx), ctx)
        for _ in range(200):
            assert sinr_ratio_form(crandn(rng, 5), ctx) <= best * (1 + 1e-10)

    def test_single_user_no_error_is_matched_filter(self, rng):
        slot = random_slot(rng, 1, 1, 4, noise_var=0.3)
        u = slot.users[0]
        slot = slot.with_user(0, cov_err=0 * u.cov_err)
        h = crandn(rng, 4)
        gamma = instantaneous_sinr(slot, [h])
        assert gamma == pytest.approx(u.gain**2 * u.data_power * np.vdot(h, h).real / 0.3, rel=1e-12)

    def test_se(self):
        assert instantaneous_se(3.0) == 2.0
        with pytest.raises(ValueError):
            instantaneous_se(-1.0)
