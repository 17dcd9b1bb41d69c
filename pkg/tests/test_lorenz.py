import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflaser.lindblad import DESK_PARAMS, LaserParams
from mflaser.lorenz import (LORENZ_CSV_COLUMNS, LorenzState, Stability, classify_equilibrium, decay_rate,
                            drive_from_lorenz, integrate_lorenz, inverse_rotating_frame, lorenz_rhs,
                            lyapunov_value, rotating_frame, write_lorenz_csv)

P0 = DESK_PARAMS.replace(omega=0.0)
P_POS = DESK_PARAMS.replace(d=0.3, g=0.5)
P_UNCERT = DESK_PARAMS.replace(d=0.9, g=3.0)


def as_array(s: LorenzState):
    return np.array([s.A, s.S, s.D], dtype=complex)


class TestRHS:
    def test_fixed_point(self):
        d = DESK_PARAMS.d
        out = lorenz_rhs(DESK_PARAMS, LorenzState(0, 0, d))
        assert (out.A, out.S, out.D) == (0, 0, 0)

    def test_unit_field(self):
        # -2γ(D - d) with γ = 2 and D - d = 0.2 gives -0.8
        out = lorenz_rhs(P0, LorenzState(1, 0, 0))
        np.testing.assert_allclose(as_array(out), [-1, 0, -0.8], atol=1e-15)

    def test_unit_polarization(self):
        p = DESK_PARAMS
        out = lorenz_rhs(p, LorenzState(0, 1, p.d))
        np.testing.assert_allclose(as_array(out), [p.g, -(p.gamma + 1j * p.omega), 0], atol=1e-15)

    def test_inversion_coupling_factor(self):
        out = lorenz_rhs(P0, LorenzState(1, 1, P0.d))
        assert out.D == pytest.approx(-4 * P0.g)


class TestIntegration:
    def test_fixed_point_series_constant(self):
        s = integrate_lorenz(DESK_PARAMS, LorenzState(0, 0, DESK_PARAMS.d), 0.01, 1.0)
        assert np.all(s.A == 0) and np.all(s.S == 0) and np.all(s.D == DESK_PARAMS.d)

    def test_last_step_lands_on_final_time(self):
        s = integrate_lorenz(DESK_PARAMS, LorenzState(0.1, 0, 0), 0.3, 1.0)
        assert s.times[-1] == 1.0 and len(s) == 5

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            integrate_lorenz(DESK_PARAMS, LorenzState(0, 0, 0), 0.0, 1.0)

    @pytest.mark.parametrize("params", [DESK_PARAMS, P_POS])
    def test_certified_contraction(self, params):
        s0 = LorenzState(0.7 - 0.2j, 0.4j, 0.5)
        t_final = 5 / decay_rate(params)
        s = integrate_lorenz(params, s0, 0.01, t_final)
        norm = lambda i: np.sqrt(abs(s.A[i]) ** 2 + abs(s.S[i]) ** 2 + (s.D[i] - params.d) ** 2)
        assert norm(-1) < norm(0)

    def test_reference_refinement(self):
        s0 = LorenzState(1, 0.5j, 0.1)
        coarse = integrate_lorenz(DESK_PARAMS, s0, 1e-2, 1.0)
        fine = integrate_lorenz(DESK_PARAMS, s0, 1e-4, 1.0)
        err = max(abs(coarse.A[-1] - fine.A[-1]), abs(coarse.S[-1] - fine.S[-1]), abs(coarse.D[-1] - fine.D[-1]))
        assert err <= 1e-8

    def test_step_halving_order(self):
        s0 = LorenzState(1, 0.5j, 0.1)

        def final(dt):
            s = integrate_lorenz(DESK_PARAMS, s0, dt, 1.0)
            return np.array([s.A[-1], s.S[-1], s.D[-1]])

        dts = [1e-2, 5e-3, 2.5e-3]
        errs = [np.max(np.abs(final(dt) - final(dt / 2))) for dt in dts]
        for e_coarse, e_fine in zip(errs, errs[1:]):
            assert 16 / 4 <= e_coarse / e_fine <= 16 * 4

    def test_rotating_frame_equivariance(self):
        """Solutions with frequency ω become ω = 0 solutions in the rotating frame."""
        s0 = LorenzState(0.6 + 0.1j, -0.3j, 0.2)
        rot = integrate_lorenz(DESK_PARAMS, s0, 1e-3, 1.0)
        still = integrate_lorenz(P0, s0, 1e-3, 1.0)
        for i in (250, 600, len(rot) - 1):
            X, Y, Z = rotating_frame(rot.state(i), rot.times[i], DESK_PARAMS)
            assert X == pytest.approx(still.A[i], abs=1e-10)
            assert Y == pytest.approx(still.S[i], abs=1e-10)
            assert Z == pytest.approx(still.D[i] - P0.d, abs=1e-10)


class TestLyapunov:
    def test_zero_at_equilibrium(self):
        assert lyapunov_value(DESK_PARAMS, LorenzState(0, 0, DESK_PARAMS.d)) == 0

    def test_negative_inversion_value(self):
        assert lyapunov_value(DESK_PARAMS, LorenzState(1, 1, DESK_PARAMS.d)) == pytest.approx(4.8)

    def test_positive_inversion_value(self):
        c = 0.25 / 2
        v = lyapunov_value(P_POS, LorenzState(1, 1, P_POS.d + 1))
        assert v == pytest.approx(1 + c + c / 4)

    @pytest.mark.parametrize("params,rate", [(DESK_PARAMS, 2.0), (P_POS, 0.9625)])
    def test_rates(self, params, rate):
        assert decay_rate(params) == pytest.approx(rate)

    @pytest.mark.parametrize("params,expected", [
        (DESK_PARAMS, Stability.CERTIFIED),
        (P_POS, Stability.CERTIFIED),
        (P_UNCERT, Stability.UNCERTIFIED),
    ])
    def test_classification(self, params, expected):
        assert classify_equilibrium(params) is expected

    @pytest.mark.parametrize("params", [DESK_PARAMS, P_POS])
    def test_decay_certificate_along_trajectory(self, params):
        s = integrate_lorenz(params, LorenzState(1 - 0.5j, 0.3 + 0.2j, -0.6), 1e-3, 10.0)
        V = s.lyapunov()
        assert np.all(V <= V[0] * np.exp(-decay_rate(params) * s.times) * (1 + 1e-6))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-0.95, 0.95), st.floats(0.1, 2.0), st.floats(0.2, 3.0), st.floats(0.2, 3.0),
           st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_certificate_property(self, d, g, kappa, gamma, ar, si, D0):
        params = LaserParams.from_gamma_d(0.4, g, kappa, gamma, d)
        if classify_equilibrium(params) is not Stability.CERTIFIED or decay_rate(params) <= 1e-3:
            return
        s = integrate_lorenz(params, LorenzState(ar, 1j * si, D0), 2e-3, 3.0)
        V = s.lyapunov()
        assert np.all(V <= V[0] * np.exp(-decay_rate(params) * s.times) * (1 + 1e-6) + 1e-14)


class TestRotatingFrame:
    def test_identity_at_zero(self):
        s = LorenzState(0.3 + 0.1j, 0.2j, 0.5)
        assert rotating_frame(s, 0.0, DESK_PARAMS) == (s.A, s.S, pytest.approx(s.D - DESK_PARAMS.d))

    @settings(max_examples=50, deadline=None)
    @given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
           st.floats(-1, 1), st.floats(0, 100))
    def test_round_trip_and_modulus(self, A, S, D, t):
        s = LorenzState(A, S, D)
        X, Y, Z = rotating_frame(s, t, DESK_PARAMS)
        assert abs(X) == pytest.approx(abs(A), rel=1e-14, abs=1e-300)
        back = inverse_rotating_frame(X, Y, Z, t, DESK_PARAMS)
        np.testing.assert_allclose(as_array(back), as_array(s), atol=1e-14 * (1 + abs(A) + abs(S)))


def test_drive_from_series_hits_grid_values():
    s = integrate_lorenz(DESK_PARAMS, LorenzState(0.5, 0.3, 0.4), 1e-2, 1.0)
    drive = drive_from_lorenz(s)
    for i in (0, 37, len(s) - 1):
        alpha, beta = drive(s.times[i])
        assert alpha == pytest.approx(DESK_PARAMS.g * s.S[i], abs=1e-15)
        assert beta == pytest.approx(DESK_PARAMS.g * s.A[i], abs=1e-15)


def test_csv_layout(tmp_path):
    s = integrate_lorenz(DESK_PARAMS, LorenzState(0.5, 0.3, 0.4), 0.1, 0.5)
    path = tmp_path / "lorenz.csv"
    write_lorenz_csv(s, path)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == LORENZ_CSV_COLUMNS
    assert len(rows) == len(s) + 1
    assert float(rows[-1][0]) == 0.5
    assert float(rows[1][-1]) == 2.0
