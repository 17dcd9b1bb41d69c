"""Linear and mean-field stochastic Schrödinger equations.

Trajectories are advanced with Euler–Maruyama and kept as the rows of
an ``(M, dim)`` array. The density matrix is represented by the
unnormalised second moment ``E|Z⟩⟨Z|``; nothing is renormalised.

Random numbers come from a counter-based generator (Philox). The
increment of trajectory ``j``, channel ``l`` at step ``k`` depends only
on ``(seed, j, l, k)``, so results do not depend on how trajectories
are split into chunks or scheduled on threads.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import EnsembleCollapseError, InvalidDensityError, NonFiniteStateError
from .hilbert import SpaceDescriptor, hermitian_eigen
from .integrate import time_grid
from .lindblad import GKSLOperators, LaserParams, MeanFieldDrive, build_gksl
from .master import check_density

log = logging.getLogger(__name__)

N_CHANNELS = 3
_UNIFORMS_PER_TRAJ = 8  # two Philox blocks; 6 used for three Box–Muller draws
_TAG_INITIAL = 0
COLLAPSE_WINDOW = (0.2, 5.0)
EIG_CLIP = -1e-12

# Observables tracked on every step, as ⟨Z, A Z⟩ quadratic forms.
OBSERVABLE_NAMES = ("norm2", "a", "sigma_minus", "sigma_3", "number")


@dataclass(frozen=True)
class NoisePlan:
    """Seed, ensemble size and step of a stochastic run.

    ``noise=False`` forces every increment to zero (diagnostic mode).
    """

    seed: int
    M: int
    dt: float
    noise: bool = True
    chunk_size: int = 1024

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")

    def uniforms(self, tag: int, j0: int, j1: int) -> np.ndarray:
        """Uniforms in [0, 1) of shape (j1 - j0, 8) for stream ``tag``."""
        bitgen = np.random.Philox(key=self.seed + (tag << 64), counter=2 * j0)
        u = np.random.Generator(bitgen).random(_UNIFORMS_PER_TRAJ * (j1 - j0))
        return u.reshape(j1 - j0, _UNIFORMS_PER_TRAJ)

    def increments(self, step: int, j0: int, j1: int) -> np.ndarray:
        """Wiener increments ΔW ~ N(0, dt), shape (j1 - j0, 3), for step ``step``."""
        if not self.noise:
            return np.zeros((j1 - j0, N_CHANNELS))
        u = self.uniforms(step + 1, j0, j1)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0:6:2]))
        return np.sqrt(self.dt) * r * np.cos(2 * np.pi * u[:, 1:6:2])

    def chunks(self):
        return [(j0, min(j0 + self.chunk_size, self.M)) for j0 in range(0, self.M, self.chunk_size)]


@dataclass
class TrajectoryEnsemble:
    space: SpaceDescriptor
    states: np.ndarray  # (M, dim), trajectory-major
    t: float
    plan: NoisePlan
    step: int = 0

    @property
    def M(self) -> int:
        return self.states.shape[0]

    def mean_norm2(self) -> float:
        return float(np.mean(np.sum(np.abs(self.states) ** 2, axis=1)))


@dataclass(frozen=True)
class InitialSampler:
    weights: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    @classmethod
    def from_density(cls, rho0) -> "InitialSampler":
        rho0 = check_density(rho0)
        lam, vecs = hermitian_eigen(rho0)
        if np.any(lam < EIG_CLIP - 1e-8):
            raise InvalidDensityError(f"negative eigenvalue {lam.min():.3e}")
        lam = np.where(lam < 0, 0.0, lam)
        if abs(lam.sum() - 1) > 1e-8:
            raise InvalidDensityError(f"eigenvalues sum to {lam.sum():.12g}")
        return cls(lam, vecs)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.weights) @ self.vectors.conj().T

    def draw(self, u: np.ndarray) -> np.ndarray:
        """Eigenvector indices for uniforms ``u`` by inverse CDF."""
        cdf = np.cumsum(self.weights)
        idx = np.searchsorted(cdf, u * cdf[-1], side="right")
        return np.minimum(idx, len(self.weights) - 1)


def sample_initial(rho0, plan: NoisePlan, space: SpaceDescriptor | None = None) -> TrajectoryEnsemble:
    """Draw ``plan.M`` eigenvectors of ρ₀ with probabilities given by its eigenvalues."""
    rho0 = np.asarray(rho0, dtype=complex)
    if space is None:
        space = SpaceDescriptor(rho0.shape[0] // 2 - 1)
    sampler = InitialSampler.from_density(rho0)
    u = plan.uniforms(_TAG_INITIAL, 0, plan.M)[:, 0]
    idx = sampler.draw(u)
    return TrajectoryEnsemble(space, np.ascontiguousarray(sampler.vectors[:, idx].T), 0.0, plan)


@numba.njit(cache=True)
def _fused_step(Z, out, forms, g0, alpha, beta, dt, dW, c1, c2, c3):
    """Quadratic forms of Z and one Euler–Maruyama step, in a single pass.

    Uses the index convention 2n+q: ``a`` shifts by -2 with weight
    sqrt(n+1), σ⁻ maps q=0 to q=1, σ⁺ maps q=1 to q=0.
    """
    m, dim = Z.shape
    nf = dim // 2
    root = np.sqrt(np.arange(nf + 1) * 1.0)
    ca = np.conj(alpha)
    cb = np.conj(beta)
    for j in range(m):
        f0 = 0.0
        f1 = 0j
        f2 = 0j
        f3 = 0.0
        f4 = 0.0
        w0 = dW[j, 0]
        w1 = dW[j, 1]
        w2 = dW[j, 2]
        for n in range(nf):
            zp = Z[j, 2 * n]
            zm = Z[j, 2 * n + 1]
            if n + 1 < nf:
                azp = root[n + 1] * Z[j, 2 * n + 2]
                azm = root[n + 1] * Z[j, 2 * n + 3]
            else:
                azp = 0j
                azm = 0j
            if n > 0:
                adzp = root[n] * Z[j, 2 * n - 2]
                adzm = root[n] * Z[j, 2 * n - 1]
            else:
                adzp = 0j
                adzm = 0j
            pp = zp.real * zp.real + zp.imag * zp.imag
            pm = zm.real * zm.real + zm.imag * zm.imag
            f0 += pp + pm
            f1 += np.conj(zp) * azp + np.conj(zm) * azm
            f2 += np.conj(zm) * zp
            f3 += pp - pm
            f4 += n * (pp + pm)
            # q = 0 row: σ⁻Z vanishes, σ⁺Z = zm; q = 1 row: σ⁻Z = zp, σ⁺Z vanishes
            gzp = g0[2 * n] * zp + alpha * adzp - ca * azp - beta * zm
            gzm = g0[2 * n + 1] * zm + alpha * adzm - ca * azm + cb * zp
            out[j, 2 * n] = zp + dt * gzp + c1 * w0 * azp + c3 * w2 * zm
            out[j, 2 * n + 1] = zm + dt * gzm + c1 * w0 * azm + c2 * w1 * zp
        forms[j, 0] = f0
        forms[j, 1] = f1
        forms[j, 2] = f2
        forms[j, 3] = f3
        forms[j, 4] = f4


@numba.njit(cache=True)
def _forms_only(Z, forms):
    m, dim = Z.shape
    nf = dim // 2
    root = np.sqrt(np.arange(nf + 1) * 1.0)
    for j in range(m):
        f0 = 0.0
        f1 = 0j
        f2 = 0j
        f3 = 0.0
        f4 = 0.0
        for n in range(nf):
            zp = Z[j, 2 * n]
            zm = Z[j, 2 * n + 1]
            pp = zp.real * zp.real + zp.imag * zp.imag
            pm = zm.real * zm.real + zm.imag * zm.imag
            if n + 1 < nf:
                f1 += root[n + 1] * (np.conj(zp) * Z[j, 2 * n + 2] + np.conj(zm) * Z[j, 2 * n + 3])
            f0 += pp + pm
            f2 += np.conj(zm) * zp
            f3 += pp - pm
            f4 += n * (pp + pm)
        forms[j, 0] = f0
        forms[j, 1] = f1
        forms[j, 2] = f2
        forms[j, 3] = f3
        forms[j, 4] = f4


class _Kernel:
    """Fused Euler–Maruyama step specialised to the laser operators."""

    def __init__(self, gk: GKSLOperators):
        g0 = gk.g0
        if np.count_nonzero(g0 - np.diag(np.diagonal(g0))):
            raise AssertionError("static part of G expected diagonal")
        self.g0 = np.ascontiguousarray(np.diagonal(g0))
        p = gk.params
        self.c = (np.sqrt(2 * p.kappa), np.sqrt(p.gamma * (1 - p.d)), np.sqrt(p.gamma * (1 + p.d)))

    def step(self, Z, alpha, beta, dt, dW):
        """Returns (forms of Z with shape (m, 5), updated Z)."""
        out = np.empty_like(Z)
        forms = np.empty((Z.shape[0], len(OBSERVABLE_NAMES)), dtype=complex)
        _fused_step(Z, out, forms, self.g0, complex(alpha), complex(beta), float(dt),
                    np.ascontiguousarray(dW, dtype=float), *self.c)
        return forms, out

    def forms(self, Z):
        forms = np.empty((Z.shape[0], len(OBSERVABLE_NAMES)), dtype=complex)
        _forms_only(np.ascontiguousarray(Z), forms)
        return forms


def _em_update(gk: GKSLOperators, Z, alpha, beta, dt, dW):
    """Reference Euler–Maruyama step with dense matrix products; Z is (m, dim)."""
    G = gk.g0 + gk.drive_term(alpha, beta)
    out = Z + dt * Z @ G.T
    for ch, L in enumerate(gk.jumps):
        out += (Z @ L.T) * dW[:, ch:ch + 1]
    return out


def _check_finite(Z, j0, step):
    bad = ~np.isfinite(np.einsum("ij,ij->i", Z.real, Z.real) + np.einsum("ij,ij->i", Z.imag, Z.imag))
    if bad.any():
        j = j0 + int(np.argmax(bad))
        raise NonFiniteStateError(f"trajectory {j} became non-finite at step {step}", trajectory=j, step=step)


def step_linear(ensemble: TrajectoryEnsemble, ops: GKSLOperators, t: float | None = None,
                drives: tuple[complex, complex] | None = None) -> TrajectoryEnsemble:
    """One Euler–Maruyama step ``Z ← Z + G Z dt + Σ L_ℓ Z ΔW_ℓ``.

    Drives are taken from ``ops.drive(t)`` unless frozen values are given.
    """
    t = ensemble.t if t is None else t
    plan = ensemble.plan
    alpha, beta = ops.drive(t) if drives is None else drives
    kern = _Kernel(ops)
    new = np.empty_like(ensemble.states)
    for j0, j1 in plan.chunks():
        dW = plan.increments(ensemble.step, j0, j1)
        new[j0:j1] = kern.step(ensemble.states[j0:j1], alpha, beta, plan.dt, dW)[1]
        _check_finite(new[j0:j1], j0, ensemble.step)
    return TrajectoryEnsemble(ensemble.space, new, t + plan.dt, plan, ensemble.step + 1)


def _chunk_sums(forms):
    """Sum, sum of squared real parts, sum of squared imaginary parts; shape (3, n_obs)."""
    return np.stack([forms.sum(axis=0), (forms.real ** 2).sum(axis=0) + 0j,
                     (forms.imag ** 2).sum(axis=0) + 0j])


@dataclass
class SSERun:
    """Per-grid-point ensemble statistics of a stochastic run.

    ``mean[name]`` is the ensemble mean of ⟨Z, A Z⟩; ``se_re``/``se_im``
    are the standard errors of its real and imaginary parts.
    """

    params: LaserParams
    space: SpaceDescriptor
    plan: NoisePlan
    route: str
    times: np.ndarray
    mean: dict
    se_re: dict
    se_im: dict
    alpha: np.ndarray
    beta: np.ndarray
    snapshots: dict = field(default_factory=dict)
    final: TrajectoryEnsemble | None = None

    def snapshot(self, t: float) -> np.ndarray:
        """Trajectory states (M, dim) stored at the grid point nearest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[i]

    @property
    def mean_norm2(self) -> np.ndarray:
        return self.mean["norm2"].real


def _finish_stats(sums, M):
    """sums: (n_steps, 3, n_obs) accumulated over chunks."""
    s1, sre, sim = sums[:, 0], sums[:, 1].real, sums[:, 2].real
    mean = s1 / M
    if M > 1:
        var_re = np.maximum(sre - M * mean.real ** 2, 0) / (M - 1)
        var_im = np.maximum(sim - M * mean.imag ** 2, 0) / (M - 1)
        se_re, se_im = np.sqrt(var_re / M), np.sqrt(var_im / M)
    else:
        se_re = se_im = np.full(mean.shape, np.nan)
    pack = lambda arr: {name: arr[:, k] for k, name in enumerate(OBSERVABLE_NAMES)}
    return pack(mean), pack(se_re), pack(se_im)


def _snapshot_indices(times, snapshot_times):
    return {int(np.argmin(np.abs(times - s))) for s in (snapshot_times or ())}


def _scaled_increments(plan, step, j0, j1, h, dt):
    dW = plan.increments(step, j0, j1)
    return dW if h == dt else dW * np.sqrt(h / dt)


def _with_dt(plan, dt):
    return plan if plan.dt == dt else NoisePlan(plan.seed, plan.M, dt, plan.noise, plan.chunk_size)


def simulate_linear_sse(params: LaserParams, rho0, drive: MeanFieldDrive, dt: float, t_final: float,
                        plan: NoisePlan, space: SpaceDescriptor, snapshot_times=(),
                        workers: int = 1) -> SSERun:
    """Linear SSE under prescribed drives; trajectories are independent.

    Chunks of trajectories may run on ``workers`` threads; the chunk
    layout is fixed by ``plan.chunk_size`` so the output does not depend
    on ``workers``.
    """
    plan = _with_dt(plan, dt)
    gk = build_gksl(params, drive, space)
    kern = _Kernel(gk)
    ens = sample_initial(rho0, plan, space)
    times = time_grid(dt, t_final)
    snap_idx = _snapshot_indices(times, snapshot_times)
    drives = np.array([drive(t) for t in times])
    last = len(times) - 1

    def run_chunk(bounds):
        j0, j1 = bounds
        Z = ens.states[j0:j1].copy()
        sums = np.empty((len(times), 3, len(OBSERVABLE_NAMES)), dtype=complex)
        snaps = {}
        for k in range(len(times)):
            if k in snap_idx:
                snaps[k] = Z.copy()
            if k < last:
                h = times[k + 1] - times[k]
                dW = _scaled_increments(plan, k, j0, j1, h, dt)
                forms, Z = kern.step(Z, drives[k, 0], drives[k, 1], h, dW)
                _check_finite(Z, j0, k)
            else:
                forms = kern.forms(Z)
            sums[k] = _chunk_sums(forms)
        return sums, snaps, Z

    chunks = plan.chunks()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]

    total = results[0][0].copy()
    for r in results[1:]:
        total += r[0]
    mean, se_re, se_im = _finish_stats(total, plan.M)
    snapshots = {k: np.concatenate([r[1][k] for r in results]) for k in sorted(snap_idx)}
    final = TrajectoryEnsemble(space, np.concatenate([r[2] for r in results]), float(times[-1]), plan, last)
    return SSERun(params, space, plan, "sse-linear", times, mean, se_re, se_im,
                  drives[:, 0].copy(), drives[:, 1].copy(), snapshots, final)


def simulate_meanfield_sse(params: LaserParams, rho0, dt: float, t_final: float, plan: NoisePlan,
                           space: SpaceDescriptor, snapshot_times=(), workers: int = 1) -> SSERun:
    """Mean-field SSE in lockstep.

    At each step the drives α = g·mean⟨Z, σ⁻Z⟩ and β = g·mean⟨Z, aZ⟩ are
    estimated from the whole ensemble and held fixed for the step. The
    per-chunk partial sums are combined in chunk order, so serial and
    threaded runs agree bit for bit.
    """
    plan = _with_dt(plan, dt)
    gk = build_gksl(params, None, space)
    kern = _Kernel(gk)
    ens = sample_initial(rho0, plan, space)
    times = time_grid(dt, t_final)
    snap_idx = _snapshot_indices(times, snapshot_times)
    chunks = plan.chunks()
    Z = ens.states.copy()
    sums = np.empty((len(times), 3, len(OBSERVABLE_NAMES)), dtype=complex)
    alpha = np.zeros(len(times), dtype=complex)
    beta = np.zeros(len(times), dtype=complex)
    snapshots = {}
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    mapper = pool.map if pool else map

    def record(k, parts):
        total = parts[0].copy()
        for part in parts[1:]:
            total += part
        sums[k] = total
        m = total[0] / plan.M
        alpha[k] = params.g * m[2]
        beta[k] = params.g * m[1]
        if not COLLAPSE_WINDOW[0] <= m[0].real <= COLLAPSE_WINDOW[1]:
            raise EnsembleCollapseError(f"mean squared norm {m[0].real:.4g} at t={times[k]:.6g} "
                                        f"left {COLLAPSE_WINDOW}")

    try:
        # the reduction at step k must finish before any trajectory takes step k
        record(0, [_chunk_sums(kern.forms(Z[j0:j1])) for j0, j1 in chunks])
        for k in range(len(times) - 1):
            if k in snap_idx:
                snapshots[k] = Z.copy()
            h = times[k + 1] - times[k]

            def advance(bounds, k=k, h=h, Z=Z):
                j0, j1 = bounds
                dW = _scaled_increments(plan, k, j0, j1, h, dt)
                _, out = kern.step(Z[j0:j1], alpha[k], beta[k], h, dW)
                _check_finite(out, j0, k)
                return out, _chunk_sums(kern.forms(out))

            results = list(mapper(advance, chunks))
            Z = np.concatenate([r[0] for r in results])
            record(k + 1, [r[1] for r in results])
        if len(times) - 1 in snap_idx:
            snapshots[len(times) - 1] = Z.copy()
    finally:
        if pool:
            pool.shutdown()
    mean, se_re, se_im = _finish_stats(sums, plan.M)
    final = TrajectoryEnsemble(space, Z, float(times[-1]), plan, len(times) - 1)
    return SSERun(params, space, plan, "sse-meanfield", times, mean, se_re, se_im,
                  alpha, beta, snapshots, final)


def reconstruct_density(ensemble) -> np.ndarray:
    """(1/M) Σ |Z_j⟩⟨Z_j| from an ensemble or an (M, dim) array of states."""
    Z = ensemble.states if isinstance(ensemble, TrajectoryEnsemble) else np.asarray(ensemble)
    rho = (Z.T @ Z.conj()) / Z.shape[0]
    return 0.5 * (rho + rho.conj().T)


SSE_CSV_COLUMNS = (
    "t", "mean_norm2", "se_norm2",
    "Re_a", "Im_a", "se_Re_a", "se_Im_a",
    "Re_sm", "Im_sm", "se_Re_sm", "se_Im_sm",
    "s3", "se_s3", "N", "se_N",
    "Re_alpha", "Im_alpha", "Re_beta", "Im_beta",
)


def write_sse_csv(run: SSERun, path) -> None:
    m, sr, si = run.mean, run.se_re, run.se_im
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SSE_CSV_COLUMNS)
        for i, t in enumerate(run.times):
            row = (t, m["norm2"][i].real, sr["norm2"][i],
                   m["a"][i].real, m["a"][i].imag, sr["a"][i], si["a"][i],
                   m["sigma_minus"][i].real, m["sigma_minus"][i].imag, sr["sigma_minus"][i], si["sigma_minus"][i],
                   m["sigma_3"][i].real, sr["sigma_3"][i], m["number"][i].real, sr["number"][i],
                   run.alpha[i].real, run.alpha[i].imag, run.beta[i].real, run.beta[i].imag)
            w.writerow([f"{x:.17g}" for x in row])


def dump_ensemble(ensemble: TrajectoryEnsemble, path) -> None:
    """Little-endian interleaved Re/Im float64, trajectory-major (M, dim)."""
    arr = np.ascontiguousarray(ensemble.states, dtype="<c16")
    arr.tofile(path)


def load_ensemble(path, space: SpaceDescriptor) -> np.ndarray:
    """Inverse of :func:`dump_ensemble`; returns states of shape (M, dim)."""
    return np.fromfile(path, dtype="<c16").reshape(-1, space.dim)
