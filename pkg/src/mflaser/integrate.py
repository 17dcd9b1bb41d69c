"""Fixed-step classical Runge–Kutta shared by the ODE integrators."""

from __future__ import annotations

import numpy as np


def time_grid(dt: float, t_final: float) -> np.ndarray:
    """Uniform grid with step ``dt``; the last step is shortened to end on ``t_final``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_final < 0:
        raise ValueError(f"t_final must be >= 0, got {t_final}")
    n = int(np.ceil(t_final / dt - 1e-9))
    times = np.arange(n + 1) * dt
    times[-1] = t_final
    return times


def rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4(f, y0, times):
    """Integrate ``y' = f(t, y)`` on a given grid; returns array of shape (len(times), *y0.shape)."""
    y = np.asarray(y0)
    out = np.empty((len(times),) + y.shape, dtype=y.dtype)
    out[0] = y
    for i in range(len(times) - 1):
        y = rk4_step(f, times[i], y, times[i + 1] - times[i])
        out[i + 1] = y
    return out
