import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slocal.schedule import (
    ScheduleError,
    ScheduleSpec,
    parse_schedule,
    sigma_from_a0,
    snr_grid,
    uniform_grid,
)

STD = ScheduleSpec.standard()
G11 = ScheduleSpec("geom", 1, 1)
G21 = ScheduleSpec("geom", 2, 1)
G12 = ScheduleSpec("geom", 1, 2)
GI2 = ScheduleSpec("geom-inf", 2)
ALL = [STD, GI2, G11, G21, G12, ScheduleSpec("geom", 1.5, 0.7), ScheduleSpec("geom-inf", 3.5)]


def _interior(spec, u):
    """Map u in (0, 1) into the schedule's domain."""
    return u if spec.t_gen == 1 else u / (1 - u) * 5


class TestG:
    def test_examples(self):
        assert STD.g(4.0) == pytest.approx(2.0, rel=1e-15)
        assert G11.g(0.5) == pytest.approx(1.0, rel=1e-15)
        assert G21.g(0.5) == pytest.approx(0.5 * 0.5**-0.5, rel=1e-15)
        assert G21.g(0.5) == pytest.approx(0.7071067811865476, rel=1e-15)

    @pytest.mark.parametrize("t", [0.0, -1.0, 1.0, 1.5])
    def test_geom_domain(self, t):
        with pytest.raises(ScheduleError):
            G11.g(t)

    def test_geom_inf_domain(self):
        with pytest.raises(ScheduleError):
            STD.g(0.0)
        assert STD.g(1e6) == pytest.approx(1e3)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_small_t_asymptotics(self, spec):
        t = 1e-8
        assert spec.g(t) / t ** (spec.alpha1 / 2) == pytest.approx(1.0, rel=1e-4)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_monotone_random_pairs(self, spec):
        rng = np.random.default_rng(0)
        u = np.sort(rng.uniform(1e-6, 1 - 1e-6, size=(1000, 2)), axis=1)
        u = u[u[:, 0] < u[:, 1]]
        t = _interior(spec, u)
        assert np.all(spec.g(t[:, 0]) < spec.g(t[:, 1]))
        assert np.all(spec.log_snr(t[:, 0]) < spec.log_snr(t[:, 1]))


class TestAlpha:
    def test_standard_identity(self):
        for t in (0.1, 1.0, 7.3):
            a, ad = STD.alpha_and_dot(t)
            assert a == pytest.approx(t)
            assert ad == pytest.approx(1.0)

    def test_geom11_dot_near_zero(self):
        _, ad = G11.alpha_and_dot(1e-10)
        assert ad == pytest.approx(1.0, rel=1e-8)

    def test_geom_inf2_at_one(self):
        a, ad = GI2.alpha_and_dot(1.0)
        assert a == pytest.approx(1.0)
        assert ad == pytest.approx(1.5)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    def test_dot_matches_finite_difference(self, spec):
        for t in (0.05, 0.3, 0.7):
            h = 1e-6
            fd = (spec.alpha(t + h) - spec.alpha(t - h)) / (2 * h)
            assert spec.alpha_and_dot(t)[1] == pytest.approx(fd, rel=1e-7)

    def test_alpha_is_sqrt_t_g(self):
        for spec in ALL:
            t = 0.37
            assert spec.alpha(t) == pytest.approx(math.sqrt(t) * spec.g(t), rel=1e-14)


class TestLogSnr:
    def test_examples(self):
        assert STD.log_snr(1.0) == 0.0
        assert G11.log_snr(0.5) == pytest.approx(0.0, abs=1e-15)
        assert GI2.log_snr(math.e) == pytest.approx(2.0, rel=1e-15)

    def test_inverse_examples(self):
        assert STD.t_of_log_snr(5.0) == pytest.approx(148.4131591025766, rel=1e-14)
        assert G11.t_of_log_snr(5.0) == pytest.approx(0.9933071490757153, rel=1e-14)
        assert GI2.t_of_log_snr(0.0) == 1.0

    def test_geom_inf_closed_form_agrees_with_bisection_residual(self):
        t = STD.t_of_log_snr(5.0)
        assert STD.log_snr(t) == pytest.approx(5.0, abs=1e-12)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    @settings(max_examples=60, deadline=None)
    @given(u=st.floats(1e-4, 1 - 1e-4))
    def test_round_trip(self, spec, u):
        t = _interior(spec, u)
        assert spec.t_of_log_snr(spec.log_snr(t)) == pytest.approx(t, rel=1e-10)

    def test_bisection_residual(self):
        for eta in (-20.0, -3.5, 0.0, 4.0, 12.0):
            t = G21.t_of_log_snr(eta)
            assert abs(G21.log_snr(t) - eta) <= 1e-12 * max(1, abs(eta)) + 1e-12

    def test_g_inv(self):
        for spec in ALL:
            assert spec.g(spec.g_inv(0.8)) == pytest.approx(0.8, rel=1e-10)


class TestGrid:
    def test_standard_geometric(self):
        eta = STD.log_snr(10.0)
        grid = snr_grid(STD, 0.1, eta, 2)
        np.testing.assert_allclose(grid.times, [0.1, 1.0, 10.0], rtol=1e-12)

    def test_single_step(self):
        grid = snr_grid(G11, 0.2, 3.0, 1)
        assert grid.K == 1
        assert grid.times[0] == 0.2
        assert grid.times[1] == pytest.approx(G11.t_of_log_snr(3.0))

    def test_geom_inf2(self):
        grid = snr_grid(GI2, 1.0, 4.0, 2)
        np.testing.assert_allclose(grid.times, [1.0, math.e, math.e**2], rtol=1e-12)

    def test_coefficients(self):
        grid = snr_grid(G21, 0.1, 5.0, 16)
        np.testing.assert_allclose(grid.deltas, np.diff(grid.times))
        np.testing.assert_allclose(grid.weights, np.diff(G21.alpha(grid.times)))
        # standard scheme: alpha(t) = t so weights equal deltas
        std = snr_grid(STD, 0.1, 5.0, 8)
        np.testing.assert_allclose(std.weights, std.deltas, rtol=1e-12)

    @pytest.mark.parametrize("spec", ALL, ids=lambda s: s.name)
    @settings(max_examples=25, deadline=None)
    @given(u=st.floats(0.01, 0.6), eta=st.floats(0.5, 8.0), K=st.integers(1, 300))
    def test_equal_log_snr_increments(self, spec, u, eta, K):
        t0 = float(spec.t_of_log_snr(eta)) * u
        grid = snr_grid(spec, t0, eta, K)
        steps = np.diff(spec.log_snr(grid.times))
        delta = (eta - spec.log_snr(t0)) / K
        assert np.max(np.abs(steps - delta)) <= 1e-10
        assert np.all(np.diff(grid.times) > 0)
        assert grid.times[-1] == pytest.approx(spec.t_of_log_snr(eta))

    def test_t0_beyond_T_rejected(self):
        with pytest.raises(ScheduleError):
            snr_grid(STD, 200.0, 5.0, 4)
        with pytest.raises(ScheduleError):
            snr_grid(G11, 0.999, 2.0, 4)

    def test_uniform_grid_is_uniform(self):
        grid = uniform_grid(STD, 0.1, 5.0, 10)
        np.testing.assert_allclose(np.diff(grid.times), grid.deltas[0])
        assert grid.times[-1] == pytest.approx(math.exp(5.0))


class TestParsing:
    def test_aliases(self):
        assert parse_schedule("standard") == STD
        assert parse_schedule("geom-inf:1") == STD
        assert parse_schedule("geom:1,1") == G11
        assert parse_schedule("geom:2,1").name == "geom:2,1"

    @pytest.mark.parametrize("bad", ["geom:0.5,1", "geom:1", "geom:1,0", "cosine", "geom-inf:0.9", "geom:a,b"])
    def test_rejects(self, bad):
        with pytest.raises(ScheduleError):
            parse_schedule(bad)


class TestSigma:
    def test_examples(self):
        assert sigma_from_a0(1.0, 0.0) == 1.0
        assert sigma_from_a0(4 / 3, math.sqrt(0.05)) == pytest.approx(1.3519533, rel=1e-6)
        assert sigma_from_a0(3.0, 4.0) == 5.0

    def test_both_zero_rejected(self):
        with pytest.raises(ValueError):
            sigma_from_a0(0.0, 0.0)
