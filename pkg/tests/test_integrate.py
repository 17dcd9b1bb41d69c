import numpy as np
import pytest

from mflaser.integrate import rk4, rk4_step, time_grid


class TestTimeGrid:
    def test_exact_multiple(self):
        t = time_grid(0.25, 1.0)
        np.testing.assert_allclose(t, [0, 0.25, 0.5, 0.75, 1.0])

    def test_short_last_step(self):
        t = time_grid(0.3, 1.0)
        assert len(t) == 5 and t[-1] == 1.0 and t[-2] == pytest.approx(0.9)

    def test_rounding_does_not_add_a_sliver(self):
        assert len(time_grid(1e-3, 2.0)) == 2001

    @pytest.mark.parametrize("dt,T", [(0, 1), (-1, 1), (0.1, -1)])
    def test_rejects(self, dt, T):
        with pytest.raises(ValueError):
            time_grid(dt, T)


def test_rk4_exponential_order():
    f = lambda t, y: -1j * y
    errs = []
    for dt in (0.1, 0.05, 0.025):
        t = time_grid(dt, 1.0)
        y = rk4(f, np.array([1.0 + 0j]), t)
        errs.append(abs(y[-1, 0] - np.exp(-1j)))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    np.testing.assert_allclose(orders, 4, atol=0.1)


def test_rk4_step_time_dependent():
    # y' = 3t^2 is integrated exactly by RK4 (Simpson weights)
    y = rk4_step(lambda t, y: 3 * t ** 2, 0.5, 0.0, 0.5)
    assert y == pytest.approx(1 - 0.125)
