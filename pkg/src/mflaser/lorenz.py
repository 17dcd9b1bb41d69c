"""Maxwell–Bloch (complex Lorenz) equations for the field mean A,
polarisation S and inversion D, with their Lyapunov certificates."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .integrate import rk4, time_grid
from .lindblad import LaserParams, MeanFieldDrive


@dataclass(frozen=True)
class LorenzState:
    A: complex
    S: complex
    D: float

    def to_real(self) -> np.ndarray:
        return np.array([self.A.real, self.A.imag, self.S.real, self.S.imag, self.D])

    @classmethod
    def from_real(cls, y) -> "LorenzState":
        return cls(complex(y[0], y[1]), complex(y[2], y[3]), float(y[4]))

    @classmethod
    def from_density(cls, rho, ops) -> "LorenzState":
        """(tr aρ, tr σ⁻ρ, tr σ³ρ)."""
        tr = lambda op: np.einsum("ij,ji->", op, rho)
        return cls(complex(tr(ops.a)), complex(tr(ops.sigma_minus)), float(tr(ops.sigma_3).real))


class Stability(str, enum.Enum):
    CERTIFIED = "certified-stable"
    UNCERTIFIED = "uncertified"


def _rhs_complex(p: LaserParams, A, S, D):
    dA = -(p.kappa + 1j * p.omega) * A + p.g * S
    dS = -(p.gamma + 1j * p.omega) * S + p.g * A * D
    dD = -4 * p.g * (np.conj(A) * S).real - 2 * p.gamma * (D - p.d)
    return dA, dS, dD


def lorenz_rhs(params: LaserParams, state: LorenzState) -> LorenzState:
    """Time derivative (dA/dt, dS/dt, dD/dt) packed as a LorenzState."""
    dA, dS, dD = _rhs_complex(params, state.A, state.S, state.D)
    return LorenzState(complex(dA), complex(dS), float(dD))


def _rhs_real(params):
    def f(t, y):
        dA, dS, dD = _rhs_complex(params, complex(y[0], y[1]), complex(y[2], y[3]), y[4])
        return np.array([dA.real, dA.imag, dS.real, dS.imag, dD])
    return f


@dataclass(frozen=True)
class LorenzSeries:
    params: LaserParams
    times: np.ndarray
    A: np.ndarray
    S: np.ndarray
    D: np.ndarray

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> LorenzState:
        return LorenzState(complex(self.A[i]), complex(self.S[i]), float(self.D[i]))

    def derivatives(self):
        return _rhs_complex(self.params, self.A, self.S, self.D)

    def lyapunov(self) -> np.ndarray:
        return lyapunov_value(self.params, self.A, self.S, self.D)


def integrate_lorenz(params: LaserParams, state0: LorenzState, dt: float, t_final: float) -> LorenzSeries:
    """Classical RK4 with fixed step ``dt``; every step is emitted."""
    times = time_grid(dt, t_final)
    y = rk4(_rhs_real(params), state0.to_real(), times)
    return LorenzSeries(params, times, y[:, 0] + 1j * y[:, 1], y[:, 2] + 1j * y[:, 3], y[:, 4].copy())


def lyapunov_value(params: LaserParams, A, S=None, D=None):
    """Lyapunov functional matching the sign of d.

    Accepts either a LorenzState or arrays ``A, S, D``.
    """
    if isinstance(A, LorenzState):
        A, S, D = A.A, A.S, A.D
    d = params.d
    if d < 0:
        return 4 * abs(d) * np.abs(A) ** 2 + 4 * np.abs(S) ** 2 + (D - d) ** 2
    c = params.g ** 2 / (params.gamma * params.kappa)
    return np.abs(A) ** 2 + c * np.abs(S) ** 2 + 0.25 * c * (D - d) ** 2


def decay_rate(params: LaserParams) -> float:
    """Exponential rate λ with V(t) ≤ V(0) e^{-λt}; may be ≤ 0 when d ≥ 0."""
    p = params
    if p.d < 0:
        return 2 * min(p.kappa, p.gamma)
    return min(p.kappa - p.g ** 2 * p.d / p.gamma, p.gamma - p.g ** 2 * p.d / p.kappa)


def classify_equilibrium(params: LaserParams) -> Stability:
    p = params
    if p.d < 0 or p.g ** 2 * p.d < p.kappa * p.gamma:
        return Stability.CERTIFIED
    return Stability.UNCERTIFIED


def rotating_frame(state: LorenzState, t: float, params: LaserParams):
    ph = np.exp(1j * params.omega * t)
    return complex(ph * state.A), complex(ph * state.S), float(state.D - params.d)


def inverse_rotating_frame(X, Y, Z, t: float, params: LaserParams) -> LorenzState:
    ph = np.exp(-1j * params.omega * t)
    return LorenzState(complex(ph * X), complex(ph * Y), float(Z + params.d))


def drive_from_lorenz(series: LorenzSeries) -> MeanFieldDrive:
    """α(t) = g S(t), β(t) = g A(t), cubic Hermite between grid points."""
    g = series.params.g
    dA, dS, _ = series.derivatives()
    return MeanFieldDrive.from_samples(series.times, g * series.S, g * series.A, g * dS, g * dA)


LORENZ_CSV_COLUMNS = ("t", "ReA", "ImA", "ReS", "ImS", "D", "V", "certified_rate")


def write_lorenz_csv(series: LorenzSeries, path) -> None:
    V = series.lyapunov()
    certified = classify_equilibrium(series.params) is Stability.CERTIFIED
    rate = decay_rate(series.params) if certified else float("nan")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LORENZ_CSV_COLUMNS)
        for i, t in enumerate(series.times):
            row = (t, series.A[i].real, series.A[i].imag, series.S[i].real, series.S[i].imag,
                   series.D[i], V[i], rate)
            w.writerow([f"{x:.17g}" for x in row])
