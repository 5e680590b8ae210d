import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize, minimize_scalar

from slocal.gmm import sample_exact
from slocal.metrics import (
    _phi4_energy,
    entropic_w2,
    gaussian_w2,
    mode_weight,
    phi4_laplace_ratio,
    phi4_mode_weights,
    phi4_modes,
    predictive_ll,
    sliced_ks,
    sliced_w2,
)
from slocal.targets import LabeledDataset, benchmark_gmm

from conftest import fd_grad


class TestSliced:
    def test_identical_sets(self):
        A = np.random.default_rng(0).normal(size=(50, 3))
        assert sliced_w2(A, A) == 0.0
        assert sliced_ks(A, A) == 0.0

    def test_one_dimensional_shift(self):
        assert sliced_w2(np.zeros((1, 1)), np.full((1, 1), 3.0)) == pytest.approx(3.0, rel=1e-14)

    def test_translation_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            A = rng.normal(size=(40, 4))
            v = rng.normal(size=4)
            assert sliced_w2(A, A + v) <= np.linalg.norm(v) * (1 + 1e-12)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(2)
        A, B, C = (rng.normal(size=(30, 3)) + rng.normal(size=3) for _ in range(3))
        assert sliced_w2(A, C) <= sliced_w2(A, B) + sliced_w2(B, C) + 1e-12

    def test_ks_disjoint(self):
        assert sliced_ks(np.array([[0.0], [1.0]]), np.array([[5.0], [6.0]])) == 1.0

    def test_ks_interleaved(self):
        assert sliced_ks(np.array([[0.0], [2.0]]), np.array([[1.0], [3.0]])) == pytest.approx(0.5)

    def test_ks_range_and_symmetry(self):
        rng = np.random.default_rng(3)
        A, B = rng.normal(size=(60, 2)), rng.normal(0.5, 1, size=(45, 2))
        v = sliced_ks(A, B)
        assert 0 <= v <= 1
        assert v == pytest.approx(sliced_ks(B, A), abs=1e-15)

    def test_tracks_gaussian_w2(self):
        rng = np.random.default_rng(4)
        shifts = [0.0, 0.3, 0.8, 1.5, 3.0]
        sliced = [sliced_w2(rng.normal(size=(10_000, 2)), rng.normal(size=(10_000, 2)) + s) for s in shifts]
        exact = [gaussian_w2(np.zeros(2), 1.0, np.full(2, s), 1.0) for s in shifts]
        assert np.all(np.diff(sliced) > 0) and np.all(np.diff(exact) >= 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sliced_w2(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_seeded(self):
        rng = np.random.default_rng(5)
        A, B = rng.normal(size=(20, 5)), rng.normal(size=(20, 5))
        assert sliced_w2(A, B, seed=3) == sliced_w2(A, B, seed=3)


def brute_force_entropic(A, B, eps):
    """Regularized objective <C, P> - eps H(P) from a dense BFGS solve of the full dual."""
    n, m = len(A), len(B)
    C = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    a, b = np.full(n, 1 / n), np.full(m, 1 / m)

    # exact dual: maximize f.a + g.b - eps sum exp((f_i + g_j - C_ij)/eps) + eps
    def neg_dual(x):
        f, g = x[:n], x[n:]
        K = np.exp((f[:, None] + g[None, :] - C) / eps)
        val = f @ a + g @ b - eps * K.sum() + eps
        grad = np.concatenate([a - K.sum(1), b - K.sum(0)])
        return -val, -grad

    res = minimize(neg_dual, np.zeros(n + m), jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 10_000})
    f, g = res.x[:n], res.x[n:]
    P = np.exp((f[:, None] + g[None, :] - C) / eps)
    P /= P.sum()
    obj = float(np.sum(P * C) + eps * np.sum(P * np.log(P)))
    return math.sqrt(max(obj, 0.0)), obj


class TestEntropic:
    def test_single_atoms(self):
        assert entropic_w2(np.array([[1.0, 2.0]]), np.array([[4.0, 6.0]]), 0.05) == pytest.approx(5.0, rel=1e-12)

    def test_two_by_two_large_eps(self):
        # identical two-point sets: as eps grows the plan tends to the product coupling
        A = np.array([[0.0], [1.0]])
        eps = 1e4
        info = entropic_w2(A, A, eps, return_info=True)
        # product coupling: cost 1/2, entropy log 4
        assert info.transport_cost == pytest.approx(0.5, rel=1e-4)
        assert info.entropy == pytest.approx(math.log(4), rel=1e-6)
        assert info.value == 0.0  # objective negative, clamped

    def test_two_by_two_closed_form(self):
        # plans on 2x2 with uniform marginals are [[p, 1/2 - p], [1/2 - p, p]]
        A, B = np.array([[0.0], [1.0]]), np.array([[0.2], [1.5]])
        eps = 0.3
        C = (A - B.T) ** 2

        def obj(p):
            P = np.array([[p, 0.5 - p], [0.5 - p, p]])
            return float(np.sum(P * C) + eps * np.sum(P * np.log(P)))

        best = minimize_scalar(obj, bounds=(1e-12, 0.5 - 1e-12), method="bounded", options={"xatol": 1e-12}).fun
        info = entropic_w2(A, B, eps, return_info=True)
        assert info.objective == pytest.approx(best, abs=1e-8)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_dense_dual_solve(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        A, B = rng.normal(size=(n, 2)), rng.normal(1.0, 1.0, size=(m, 2))
        eps = float(rng.choice([0.05, 0.2, 1.0]))
        value, obj = brute_force_entropic(A, B, eps)
        info = entropic_w2(A, B, eps, return_info=True)
        assert info.objective == pytest.approx(obj, abs=1e-4)
        assert info.value == pytest.approx(value, abs=1e-4)

    def test_symmetric(self):
        rng = np.random.default_rng(7)
        A, B = rng.normal(size=(60, 2)), rng.normal(1, 1, size=(40, 2))
        assert entropic_w2(A, B) == pytest.approx(entropic_w2(B, A), abs=1e-8)

    def test_converges(self):
        rng = np.random.default_rng(8)
        info = entropic_w2(rng.normal(size=(200, 2)), rng.normal(2, 1, size=(300, 2)), return_info=True)
        assert info.converged and info.residual <= 1e-6

    def test_non_negative(self):
        rng = np.random.default_rng(9)
        A = rng.normal(size=(30, 2))
        assert entropic_w2(A, A) >= 0.0

    def test_size_cap(self):
        with pytest.raises(ValueError):
            entropic_w2(np.zeros((4097, 1)), np.zeros((2, 1)))


class TestGaussianW2:
    def test_examples(self):
        assert gaussian_w2(np.zeros(2), 1.0, np.zeros(2), 1.0) == 0.0
        assert gaussian_w2(np.zeros(2), 1.0, np.array([3.0, 4.0]), 1.0) == pytest.approx(5.0)
        assert gaussian_w2(np.zeros(4), 1.0, np.zeros(4), 2.0) == pytest.approx(2.0)

    def test_positive_std(self):
        with pytest.raises(ValueError):
            gaussian_w2(0.0, 0.0, 0.0, 1.0)


class TestModeWeight:
    def test_examples(self):
        assert mode_weight(-np.ones((5, 3))) == 1.0
        assert mode_weight(np.zeros((1, 3))) == 0.0

    def test_exact_gmm_samples(self):
        x = sample_exact(benchmark_gmm(2).mixture, 100_000, 0)
        assert abs(mode_weight(x) - 2 / 3) < 0.01

    def test_empty(self):
        with pytest.raises(ValueError):
            mode_weight(np.zeros((0, 2)))

    def test_phi4_mode_weights(self):
        x = np.zeros((4, 6))
        x[:3, 2] = -1.0
        x[3, 2] = 1.0
        assert phi4_mode_weights(x) == (0.75, 0.25)


class TestPredictiveLL:
    def _data(self):
        X = np.array([[1.0, -1.0], [2.0, 0.5], [-1.0, 3.0]])
        return LabeledDataset(X, np.array([1, 0, 1]))

    def test_zero_parameters(self):
        assert predictive_ll(np.zeros((4, 3)), self._data()) == pytest.approx(math.log(0.5), rel=1e-14)

    def test_separating_limit(self):
        X = np.array([[1.0], [-1.0]])
        test = LabeledDataset(X, np.array([1, 0]))
        assert -1e-12 < predictive_ll(np.array([[1e3, 0.0]]), test) <= 0.0

    def test_duplication_invariant(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=(5, 3))
        assert predictive_ll(s, self._data()) == pytest.approx(predictive_ll(np.vstack([s, s]), self._data()))

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            predictive_ll(np.zeros((2, 2)), self._data())


class TestPhi4Laplace:
    @pytest.mark.parametrize("order", [0, 2])
    def test_symmetric_at_zero_field(self, order):
        assert phi4_laplace_ratio(0.0, order) == 1.0

    def test_modes_mirror_at_zero_field(self):
        minus, plus = phi4_modes(0.0)
        np.testing.assert_allclose(minus, -plus, atol=1e-12)

    def test_monotone_while_both_modes_exist(self):
        hs = [0.0, 0.005, 0.01, 0.015, 0.02, 0.025]
        for order in (0, 2):
            r = [phi4_laplace_ratio(h, order) for h in hs]
            assert np.all(np.diff(r) > 0)

    @pytest.mark.parametrize("h", [0.05, 0.075, 0.1])
    def test_positive_mode_vanishes_at_large_field(self, h):
        with pytest.raises(ArithmeticError):
            phi4_laplace_ratio(h, 0)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            phi4_laplace_ratio(0.0, 1)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), h=st.floats(-0.1, 0.1))
    def test_gradient_and_hessian_match_finite_differences(self, seed, h):
        rng = np.random.default_rng(seed)
        d = 12
        phi = rng.normal(0, 0.7, size=d)
        U, grad, diag, off = _phi4_energy(phi, h, 0.1, 20.0)
        num = fd_grad(lambda z: _phi4_energy(z, h, 0.1, 20.0)[0], phi, h=1e-6)
        np.testing.assert_allclose(grad, num, rtol=1e-5, atol=1e-5 * np.abs(grad).max())
        H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        H_fd = np.empty((d, d))
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1e-5
            H_fd[:, i] = (_phi4_energy(phi + e, h, 0.1, 20.0)[1] - _phi4_energy(phi - e, h, 0.1, 20.0)[1]) / 2e-5
        np.testing.assert_allclose(H, H_fd, rtol=1e-5, atol=1e-5 * np.abs(H).max())
