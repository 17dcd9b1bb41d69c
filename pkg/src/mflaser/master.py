"""Deterministic density-matrix integrators.

Three drivers share one RK4 kernel:

* :func:`integrate_linear`: linear equation under prescribed drives;
* :func:`integrate_meanfield_direct`: nonlinear equation, drives
  recomputed from ρ at every RK stage;
* :func:`integrate_meanfield_via_lorenz`: solve the Lorenz system
  first and feed its drives to the linear equation.

No trace renormalisation is applied while stepping.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDensityError, LeakageError
from .hilbert import SpaceDescriptor, hermiticity_error, trace_distance
from .integrate import rk4_step, time_grid
from .lindblad import (
    GKSLOperators,
    LaserParams,
    MeanFieldDrive,
    _rhs,
    build_gksl,
    meanfield_drives,
)
from .lorenz import LorenzState, drive_from_lorenz, integrate_lorenz

log = logging.getLogger(__name__)

DEFAULT_LEAKAGE_BOUND = 1e-6

ROUTE_LINEAR = "linear"
ROUTE_DIRECT = "self-consistent"
ROUTE_LORENZ = "lorenz-precomputed"


def check_density(rho, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidDensityError(f"density matrix must be square, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidDensityError("density matrix has non-finite entries")
    herm = hermiticity_error(rho)
    if herm > herm_tol:
        raise InvalidDensityError(f"density matrix not Hermitian (max |ρ-ρ†| = {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise InvalidDensityError(f"density matrix trace is {tr:.12g}")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -eig_tol:
        raise InvalidDensityError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def truncation_leakage(rho, space: SpaceDescriptor) -> float:
    """Population on the two highest retained Fock levels."""
    diag = np.real(np.diagonal(rho))
    return float(diag[2 * (space.n_max - 1):].sum())


@dataclass
class Observables:
    """Per-grid-point expectation values of a run."""

    times: np.ndarray
    a: np.ndarray
    sigma_minus: np.ndarray
    sigma_3: np.ndarray
    number: np.ndarray
    purity: np.ndarray
    trace_error: np.ndarray
    hermiticity: np.ndarray
    min_eig: np.ndarray
    leakage: np.ndarray

    @classmethod
    def allocate(cls, times):
        n = len(times)
        z = lambda dt=float: np.zeros(n, dtype=dt)
        return cls(times, z(complex), z(complex), z(), z(), z(), z(), z(), z(), z())

    def record(self, i, rho, gk: GKSLOperators, eigs=True):
        o = gk.ops
        diag = np.real(np.diagonal(rho))
        self.a[i] = np.einsum("ij,ji->", o.a, rho)
        self.sigma_minus[i] = np.einsum("ij,ji->", o.sigma_minus, rho)
        self.sigma_3[i] = diag[0::2].sum() - diag[1::2].sum()
        self.number[i] = diag @ gk.space.photon_numbers()
        self.purity[i] = np.real(np.vdot(rho, rho))
        self.trace_error[i] = abs(np.trace(rho) - 1)
        self.hermiticity[i] = hermiticity_error(rho)
        self.min_eig[i] = np.linalg.eigvalsh(rho)[0] if eigs else np.nan
        self.leakage[i] = truncation_leakage(rho, gk.space)


@dataclass
class MasterRun:
    params: LaserParams
    space: SpaceDescriptor
    route: str
    dt: float
    times: np.ndarray
    obs: Observables
    alpha: np.ndarray
    beta: np.ndarray
    state_index: np.ndarray
    states: np.ndarray
    leakage_bound: float
    meta: dict = field(default_factory=dict)

    def state_at(self, i: int) -> np.ndarray:
        """Stored density matrix at grid index ``i``."""
        pos = np.searchsorted(self.state_index, i)
        if pos >= len(self.state_index) or self.state_index[pos] != i:
            raise KeyError(f"grid point {i} was not stored (store_every={self.meta.get('store_every')})")
        return self.states[pos]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def invariant_maxima(self) -> dict:
        o = self.obs
        return dict(
            max_trace_error=float(o.trace_error.max()),
            max_hermiticity_error=float(o.hermiticity.max()),
            min_eigenvalue=float(np.nanmin(o.min_eig)),
            max_leakage=float(o.leakage.max()),
        )


def _run(gk: GKSLOperators, rho0, dt, t_final, route, drive_of, leakage_bound, store_every,
         check_eigs=True) -> MasterRun:
    rho = check_density(rho0).copy()
    if rho.shape != (gk.space.dim, gk.space.dim):
        raise InvalidDensityError(f"rho0 has shape {rho.shape}, space dim is {gk.space.dim}")
    times = time_grid(dt, t_final)
    n = len(times)
    store_every = int(store_every)
    stored = sorted(set(range(0, n, store_every) if store_every > 0 else [0]) | {n - 1})
    states = np.empty((len(stored), gk.space.dim, gk.space.dim), dtype=complex)
    obs = Observables.allocate(times)
    alpha = np.zeros(n, dtype=complex)
    beta = np.zeros(n, dtype=complex)

    def f(t, r):
        a, b = drive_of(t, r)
        return _rhs(gk, a, b, r)

    slot = 0
    for i in range(n):
        if i > 0:
            rho = rk4_step(f, times[i - 1], rho, times[i] - times[i - 1])
            rho = 0.5 * (rho + rho.conj().T)
        alpha[i], beta[i] = drive_of(times[i], rho)
        obs.record(i, rho, gk, eigs=check_eigs)
        if slot < len(stored) and stored[slot] == i:
            states[slot] = rho
            slot += 1
        if obs.leakage[i] > leakage_bound:
            raise LeakageError(
                f"truncation leakage {obs.leakage[i]:.3e} exceeds bound {leakage_bound:.1e} "
                f"at t={times[i]:.6g} (n_max={gk.space.n_max}); increase n_max",
                t=float(times[i]), leakage=float(obs.leakage[i]))
    return MasterRun(gk.params, gk.space, route, dt, times, obs, alpha, beta,
                     np.array(stored), states, leakage_bound, meta=dict(store_every=store_every))


def integrate_linear(params: LaserParams, rho0, drive: MeanFieldDrive, dt: float, t_final: float,
                     space: SpaceDescriptor, leakage_bound: float = DEFAULT_LEAKAGE_BOUND,
                     store_every: int = 1, check_eigs: bool = True) -> MasterRun:
    """RK4 for the linear master equation with drives evaluated at stage times."""
    gk = build_gksl(params, drive, space)
    return _run(gk, rho0, dt, t_final, ROUTE_LINEAR, lambda t, r: drive(t),
                leakage_bound, store_every, check_eigs)


def integrate_meanfield_direct(params: LaserParams, rho0, dt: float, t_final: float,
                               space: SpaceDescriptor, leakage_bound: float = DEFAULT_LEAKAGE_BOUND,
                               store_every: int = 1, check_eigs: bool = True) -> MasterRun:
    """RK4 for the mean-field equation; every stage recomputes α, β from its own ρ."""
    gk = build_gksl(params, None, space)
    return _run(gk, rho0, dt, t_final, ROUTE_DIRECT, lambda t, r: meanfield_drives(gk, r),
                leakage_bound, store_every, check_eigs)


def integrate_meanfield_via_lorenz(params: LaserParams, rho0, dt: float, t_final: float,
                                   space: SpaceDescriptor, leakage_bound: float = DEFAULT_LEAKAGE_BOUND,
                                   store_every: int = 1, check_eigs: bool = True,
                                   lorenz_params: LaserParams | None = None) -> MasterRun:
    """Lorenz system first, then the linear equation with α = gS, β = gA.

    ``lorenz_params`` (default ``params``) exists for negative controls
    where the two stages deliberately disagree.
    """
    rho0 = check_density(rho0)
    gk = build_gksl(params, None, space)
    state0 = LorenzState.from_density(rho0, gk.ops)
    series = integrate_lorenz(lorenz_params or params, state0, dt, t_final)
    drive = drive_from_lorenz(series)
    run = _run(gk.with_drive(drive), rho0, dt, t_final, ROUTE_LORENZ, lambda t, r: drive(t),
               leakage_bound, store_every, check_eigs)
    run.meta["lorenz"] = series
    return run


def observables(run: MasterRun) -> Observables:
    return run.obs


def route_trace_distances(run1: MasterRun, run2: MasterRun) -> np.ndarray:
    """Trace distance at every grid point stored by both runs."""
    if len(run1.times) != len(run2.times) or not np.allclose(run1.times, run2.times, rtol=0, atol=1e-12):
        raise ValueError("runs are on different grids")
    common = np.intersect1d(run1.state_index, run2.state_index)
    return np.array([trace_distance(run1.state_at(i), run2.state_at(i)) for i in common])


MASTER_CSV_COLUMNS = ("t", "Re_tr_a_rho", "Im_tr_a_rho", "Re_tr_sm_rho", "Im_tr_sm_rho",
                      "tr_s3_rho", "tr_N_rho", "purity", "trace_error", "min_eig", "leakage")


def write_master_csv(run: MasterRun, path) -> None:
    o = run.obs
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MASTER_CSV_COLUMNS)
        for i, t in enumerate(run.times):
            row = (t, o.a[i].real, o.a[i].imag, o.sigma_minus[i].real, o.sigma_minus[i].imag,
                   o.sigma_3[i], o.number[i], o.purity[i], o.trace_error[i], o.min_eig[i], o.leakage[i])
            w.writerow([f"{x:.17g}" for x in row])


def run_summary(run: MasterRun) -> dict:
    return dict(
        params=run.params.as_dict(),
        route=run.route,
        grid=dict(dt=run.dt, t_final=float(run.times[-1]), points=len(run.times), n_max=run.space.n_max),
        leakage_bound=run.leakage_bound,
        invariants=run.invariant_maxima(),
    )


def write_master_json(run: MasterRun, path, extra: dict | None = None) -> None:
    doc = run_summary(run)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
