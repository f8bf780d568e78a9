import math

import numpy as np
import pytest

import permlim.permanent as permanent_module
from permlim import (CapExceededError, RuntimeBudgetWarning, balance_fixed_point,
                     compute_Dn, compute_Dn_hat, compute_Ln, permanent_brute,
                     permanent_exact, quadratic_cost, sample_kernel)


def test_identity_and_ones():
    assert permanent_exact(np.eye(4)).value == pytest.approx(1.0, abs=1e-14)
    assert permanent_exact(np.ones((3, 3))).value == pytest.approx(6.0, abs=1e-12)
    assert permanent_brute(np.ones((4, 4))).value == pytest.approx(24.0, abs=1e-12)
    assert permanent_brute(np.eye(5)).value == pytest.approx(1.0, abs=1e-14)


def test_two_by_two():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    for method in ("ryser", "glynn"):
        assert permanent_exact(M, method).value == pytest.approx(10.0, abs=1e-12)
    assert permanent_brute(M).value == pytest.approx(10.0, abs=1e-12)


def test_methods_agree_with_brute_force():
    rng = np.random.default_rng(2024)
    for n in range(3, 9):
        for _ in range(5):
            M = rng.uniform(0.0, 2.0, (n, n))
            ref = permanent_brute(M).value
            for method in ("ryser", "glynn"):
                val = permanent_exact(M, method).value
                assert abs(val - ref) <= 1e-12 * ref


def test_row_scaling_multilinearity():
    rng = np.random.default_rng(99)
    for n in (3, 5, 7):
        M = rng.uniform(0.0, 2.0, (n, n))
        d1 = rng.uniform(0.5, 1.5, n)
        d2 = rng.uniform(0.5, 1.5, n)
        scaled = permanent_exact(np.diag(d1) @ M @ np.diag(d2)).value
        expected = permanent_exact(M).value * np.prod(d1) * np.prod(d2)
        assert scaled == pytest.approx(expected, rel=1e-12)


def test_permutation_invariance():
    rng = np.random.default_rng(7)
    M = rng.uniform(0.0, 2.0, (6, 6))
    base = permanent_exact(M).value
    for _ in range(5):
        p = rng.permutation(6)
        assert permanent_exact(M[p][:, p]).value == pytest.approx(base,
                                                                  rel=1e-12)


def test_value_log_consistency():
    M = np.random.default_rng(3).uniform(0.5, 2.0, (6, 6))
    pv = permanent_exact(M)
    assert pv.value == pytest.approx(math.exp(pv.log_value), rel=1e-12)
    zero = permanent_exact(np.zeros((3, 3)))
    assert zero.value == 0.0 and zero.log_value == -math.inf


def test_caps_and_validation():
    with pytest.raises(CapExceededError):
        permanent_exact(np.ones((5, 5)), cap=4)
    with pytest.raises(CapExceededError):
        permanent_brute(np.ones((10, 10)))
    with pytest.raises(ValueError, match="non-finite"):
        permanent_exact(np.array([[1.0, np.nan], [1.0, 1.0]]))
    with pytest.raises(ValueError, match="method"):
        permanent_exact(np.ones((3, 3)), method="laplace")
    with pytest.raises(ValueError):
        permanent_exact(np.ones((3, 3)), workers=0)


def test_runtime_warning_threshold(monkeypatch):
    monkeypatch.setattr(permanent_module, "_WARN_ABOVE", 4)
    with pytest.warns(RuntimeBudgetWarning):
        permanent_exact(np.ones((5, 5)))


def test_worker_count_does_not_change_bits(cosine_half):
    K = sample_kernel(cosine_half, 12)
    for method in ("ryser", "glynn"):
        vals = [compute_Dn(K, method=method, workers=w).value
                for w in (1, 2, 5)]
        assert len({v.hex() for v in vals}) == 1


def test_compute_Dn_constant_is_one(const_source):
    for n in (1, 5, 12):
        pv = compute_Dn(sample_kernel(const_source, n))
        assert abs(pv.value - 1.0) <= 1e-11
        assert pv.normalized


def test_compute_Dn_small_cases(cosine_half):
    assert compute_Dn(sample_kernel(cosine_half, 1)).value == pytest.approx(
        2.0, abs=1e-14)  # the density at (1, 1)
    assert compute_Dn(sample_kernel(cosine_half, 2)).value == pytest.approx(
        1.5, abs=1e-14)


def test_normalized_mode_consistency(cosine_half):
    K = sample_kernel(cosine_half, 7)
    raw = permanent_exact(K.entries).value
    norm = compute_Dn(K).value
    assert norm * math.factorial(7) == pytest.approx(raw, rel=1e-10)


def test_Dn_hat_equals_Dn_times_scaling(cosine_half):
    K = sample_kernel(cosine_half, 10)
    res = balance_fixed_point(K)
    Dn = compute_Dn(K).value
    Dh = compute_Dn_hat(res).value
    prod_u_sq = float(np.prod(res.u * res.u))
    assert abs(Dh / (Dn * prod_u_sq) - 1.0) <= 1e-10


def test_Dn_hat_trivial_when_unperturbed(const_source):
    K = sample_kernel(const_source, 6)
    res = balance_fixed_point(K)
    assert compute_Dn_hat(res).value == compute_Dn(K).value


def test_compute_Ln_values():
    zero = quadratic_cost(0.0)
    for n in (1, 4):
        assert compute_Ln(zero, n).value == pytest.approx(1.0, abs=1e-12)
    quad = quadratic_cost(1.0)
    assert compute_Ln(quad, 1).value == pytest.approx(1.0, abs=1e-15)
    expected = (1.0 + math.exp(-0.5)) / 2.0
    assert compute_Ln(quad, 2).value == pytest.approx(expected, abs=1e-14)
    with pytest.raises(ValueError):
        compute_Ln(quad, 0)
