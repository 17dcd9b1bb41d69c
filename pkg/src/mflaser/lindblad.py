"""GKSL pieces of the laser master equation and their action on ρ.

The drive functions α, β already carry the coupling constant g: the
mean-field equation is recovered with ``α = g tr(σ⁻ρ)`` and
``β = g tr(aρ)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicHermiteSpline

from .errors import DimensionError, InvalidDensityError, InvalidParamsError
from .hilbert import OperatorSet, SpaceDescriptor, build_operators, hermiticity_error


@dataclass(frozen=True)
class LaserParams:
    """Physical constants of the mean-field laser.

    Build from pump/decay rates directly, or with :meth:`from_gamma_d`.
    """

    omega: float
    g: float
    kappa: float
    kappa_plus: float
    kappa_minus: float

    def __post_init__(self):
        vals = (self.omega, self.g, self.kappa, self.kappa_plus, self.kappa_minus)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidParamsError("parameters must be finite")
        if self.g == 0:
            raise InvalidParamsError("g must be non-zero")
        for name in ("kappa", "kappa_plus", "kappa_minus"):
            if getattr(self, name) <= 0:
                raise InvalidParamsError(f"{name} must be > 0")

    @classmethod
    def from_gamma_d(cls, omega, g, kappa, gamma, d):
        if not gamma > 0:
            raise InvalidParamsError("gamma must be > 0")
        if not -1 < d < 1:
            raise InvalidParamsError("d must lie in (-1,1)")
        return cls(omega=float(omega), g=float(g), kappa=float(kappa),
                   kappa_plus=float(gamma * (1 + d)), kappa_minus=float(gamma * (1 - d)))

    @property
    def gamma(self) -> float:
        return 0.5 * (self.kappa_plus + self.kappa_minus)

    @property
    def d(self) -> float:
        return (self.kappa_plus - self.kappa_minus) / (self.kappa_plus + self.kappa_minus)

    def replace(self, **changes) -> "LaserParams":
        """Copy with some fields changed; accepts ``gamma``/``d`` as well."""
        if "gamma" in changes or "d" in changes:
            base = dict(omega=self.omega, g=self.g, kappa=self.kappa, gamma=self.gamma, d=self.d)
            base.update(changes)
            return LaserParams.from_gamma_d(**base)
        base = dict(omega=self.omega, g=self.g, kappa=self.kappa,
                    kappa_plus=self.kappa_plus, kappa_minus=self.kappa_minus)
        base.update(changes)
        return LaserParams(**base)

    def as_dict(self) -> dict:
        return dict(omega=self.omega, g=self.g, kappa=self.kappa,
                    kappa_plus=self.kappa_plus, kappa_minus=self.kappa_minus,
                    gamma=self.gamma, d=self.d)


DESK_PARAMS = LaserParams.from_gamma_d(omega=0.5, g=0.8, kappa=1.0, gamma=2.0, d=-0.2)


@dataclass(frozen=True)
class MeanFieldDrive:
    """Time-dependent complex drives α(t), β(t)."""

    alpha: Callable[[float], complex]
    beta: Callable[[float], complex]

    @classmethod
    def zero(cls) -> "MeanFieldDrive":
        return cls.constant(0.0, 0.0)

    @classmethod
    def constant(cls, alpha: complex, beta: complex) -> "MeanFieldDrive":
        alpha, beta = complex(alpha), complex(beta)
        return cls(lambda t: alpha, lambda t: beta)

    @classmethod
    def from_samples(cls, times, alpha, beta, dalpha, dbeta) -> "MeanFieldDrive":
        """Cubic Hermite interpolation of sampled drives and their derivatives."""
        sa = CubicHermiteSpline(times, np.asarray(alpha, complex), np.asarray(dalpha, complex))
        sb = CubicHermiteSpline(times, np.asarray(beta, complex), np.asarray(dbeta, complex))
        return cls(lambda t: complex(sa(t)), lambda t: complex(sb(t)))

    def __call__(self, t: float) -> tuple[complex, complex]:
        return complex(self.alpha(t)), complex(self.beta(t))


def _csr(m):
    return sp.csr_matrix(m)


@dataclass(frozen=True)
class GKSLOperators:
    """Jump operators L1..L3 plus the time-dependent H(t) and G(t).

    Dense matrices are the public surface; sparse copies are kept for
    the hot loops of the integrators.
    """

    ops: OperatorSet
    params: LaserParams
    drive: MeanFieldDrive
    L1: np.ndarray
    L2: np.ndarray
    L3: np.ndarray
    h0: np.ndarray
    g0: np.ndarray
    _sparse: dict = field(repr=False, compare=False)

    @property
    def space(self) -> SpaceDescriptor:
        return self.ops.space

    @property
    def jumps(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.L1, self.L2, self.L3)

    def drive_term(self, alpha: complex, beta: complex) -> np.ndarray:
        """α a† − ᾱ a + β̄ σ⁻ − β σ⁺ (anti-Hermitian)."""
        o = self.ops
        return (alpha * o.a_dag - np.conj(alpha) * o.a
                + np.conj(beta) * o.sigma_minus - beta * o.sigma_plus)

    def hamiltonian(self, t: float) -> np.ndarray:
        alpha, beta = self.drive(t)
        return self.h0 + 1j * self.drive_term(alpha, beta)

    def g_op(self, t: float) -> np.ndarray:
        alpha, beta = self.drive(t)
        return self.g0 + self.drive_term(alpha, beta)

    def with_drive(self, drive: MeanFieldDrive) -> "GKSLOperators":
        return GKSLOperators(self.ops, self.params, drive, self.L1, self.L2, self.L3,
                             self.h0, self.g0, self._sparse)


def build_gksl(params: LaserParams, drive: MeanFieldDrive | None, space: SpaceDescriptor) -> GKSLOperators:
    if not isinstance(params, LaserParams):
        raise InvalidParamsError("params must be a LaserParams")
    drive = MeanFieldDrive.zero() if drive is None else drive
    ops = build_operators(space)
    gamma, d = params.gamma, params.d
    L1 = np.sqrt(2 * params.kappa) * ops.a
    L2 = np.sqrt(gamma * (1 - d)) * ops.sigma_minus
    L3 = np.sqrt(gamma * (1 + d)) * ops.sigma_plus
    h0 = 0.5 * params.omega * (2 * ops.n_op + ops.sigma_3)
    ltl = sum(L.conj().T @ L for L in (L1, L2, L3))
    g0 = -1j * h0 - 0.5 * ltl
    sparse = dict(
        g0=_csr(g0), a=_csr(ops.a), a_dag=_csr(ops.a_dag),
        sigma_plus=_csr(ops.sigma_plus), sigma_minus=_csr(ops.sigma_minus),
        jumps=tuple(_csr(L) for L in (L1, L2, L3)),
    )
    return GKSLOperators(ops, params, drive, L1, L2, L3, h0, g0, sparse)


def _rhs(gk: GKSLOperators, alpha: complex, beta: complex, rho: np.ndarray) -> np.ndarray:
    """G ρ + ρ G† + Σ L ρ L† for Hermitian ρ, symmetrised."""
    s = gk._sparse
    g_rho = (s["g0"] @ rho
             + alpha * (s["a_dag"] @ rho) - np.conj(alpha) * (s["a"] @ rho)
             + np.conj(beta) * (s["sigma_minus"] @ rho) - beta * (s["sigma_plus"] @ rho))
    out = g_rho + g_rho.conj().T
    for L in s["jumps"]:
        l_rho = L @ rho
        out += L @ l_rho.conj().T
    return 0.5 * (out + out.conj().T)


def _check_rho(gk, rho):
    rho = np.asarray(rho)
    if rho.shape != (gk.space.dim, gk.space.dim):
        raise DimensionError(f"rho has shape {rho.shape}, space dim is {gk.space.dim}")
    return rho


def linear_generator_apply(ops: GKSLOperators, params: LaserParams | None, t: float, rho) -> np.ndarray:
    """Right-hand side of the linear master equation with the drives at time ``t``.

    ``params`` is accepted for interface symmetry; the rates are taken
    from ``ops``.
    """
    rho = _check_rho(ops, rho)
    alpha, beta = ops.drive(t)
    return _rhs(ops, alpha, beta, rho)


def meanfield_drives(ops: GKSLOperators, rho) -> tuple[complex, complex]:
    """α = g tr(σ⁻ρ), β = g tr(aρ)."""
    o, g = ops.ops, ops.params.g
    alpha = g * np.einsum("ij,ji->", o.sigma_minus, rho)
    beta = g * np.einsum("ij,ji->", o.a, rho)
    return complex(alpha), complex(beta)


def meanfield_generator_apply(ops: GKSLOperators, params: LaserParams | None, rho,
                              trace_tol: float = 1e-8, herm_tol: float = 1e-10):
    """Nonlinear mean-field generator; returns ``(value, alpha, beta)``."""
    rho = _check_rho(ops, rho)
    if hermiticity_error(rho) > herm_tol:
        raise InvalidDensityError("rho is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise InvalidDensityError(f"rho has trace {tr:.12g}, expected 1")
    alpha, beta = meanfield_drives(ops, rho)
    return _rhs(ops, alpha, beta, rho), alpha, beta


def conservativity_residual(ops: GKSLOperators, t: float, x) -> float:
    """|2 Re⟨x, G(t)x⟩ + Σ‖L_ℓ x‖²|; zero up to rounding."""
    x = np.asarray(x)
    if x.shape != (ops.space.dim,):
        raise DimensionError(f"vector of length {x.shape} on space of dim {ops.space.dim}")
    gx = ops.g_op(t) @ x
    total = 2 * np.vdot(x, gx).real
    for L in ops.jumps:
        total += np.vdot(L @ x, L @ x).real
    return float(abs(total))


def generator_identity_matrix(ops: GKSLOperators, t: float) -> np.ndarray:
    """G + G† + Σ L†L, which vanishes identically."""
    G = ops.g_op(t)
    return G + G.conj().T + sum(L.conj().T @ L for L in ops.jumps)


def atom_steady_state(params: LaserParams, space: SpaceDescriptor) -> np.ndarray:
    """Vacuum ⊗ diag((1+d)/2, (1−d)/2), the fixed point of the undriven flow."""
    d = params.d
    field_vac = np.zeros((space.n_max + 1, space.n_max + 1))
    field_vac[0, 0] = 1
    return space.embed(field_vac, np.diag([(1 + d) / 2, (1 - d) / 2]))
