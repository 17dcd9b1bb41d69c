"""Cross-checks between the deterministic, Lorenz and stochastic routes.

Each check returns a :class:`VerificationReport` whose entries carry the
measured residual, the tolerance and the identity being tested.

Two forms of the inversion equation appear below. With drives α, β the
linear equation gives

    d/dt tr(σ³ρ) = -2 (β̄ tr(σ⁻ρ) + β conj(tr(σ⁻ρ))) - 2γ (tr(σ³ρ) - d),

and substituting the mean-field value β = g tr(aρ) turns the bracket into
2 g Re(conj(tr(aρ)) tr(σ⁻ρ)), which is the -4g form of the Maxwell–Bloch
system. Both are evaluated from the same helper.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .hilbert import SpaceDescriptor, build_operators
from .lindblad import GKSLOperators, LaserParams, conservativity_residual, generator_identity_matrix
from .lorenz import LorenzSeries, Stability, classify_equilibrium, decay_rate
from .master import ROUTE_DIRECT, MasterRun

# Standard errors below this are rounding noise (e.g. an observable that is
# constant across the sampled eigenvectors); z-scores use it as a floor.
SE_FLOOR = 1e-10

INVERSION_ALGEBRA = (
    "-2(conj(beta) S + beta conj(S)) = -4 Re(conj(beta) S); with beta = g A this is -4 g Re(conj(A) S)"
)


@dataclass
class CheckResult:
    name: str
    anchor: str
    residual: float
    tolerance: float
    passed: bool | None  # None: not applicable
    context: dict = field(default_factory=dict)
    heuristic: bool = False

    @property
    def status(self) -> str:
        if self.passed is None:
            return "n/a"
        return "pass" if self.passed else "FAIL"


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, name, anchor, residual, tolerance, passed=None, context=None, heuristic=False,
            applicable=True):
        residual = float(residual)
        if not applicable:
            ok = None
        elif passed is None:
            ok = bool(np.isfinite(residual) and residual <= tolerance)
        else:
            ok = bool(passed)
        self.checks.append(CheckResult(name, anchor, residual, float(tolerance), ok, context or {}, heuristic))
        return self

    def extend(self, other: "VerificationReport") -> "VerificationReport":
        self.checks.extend(other.checks)
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return dict(passed=self.passed, checks=[asdict(c) | {"status": c.status} for c in self.checks])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            tag = " (heuristic)" if c.heuristic else ""
            lines.append(f"[{c.status:>4}] {c.name}: residual {c.residual:.3e} (tol {c.tolerance:.1e})"
                         f"  -- {c.anchor}{tag}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(type(obj))


def maxwell_bloch_rhs(params: LaserParams, A, S, D, alpha=None, beta=None):
    """Right-hand sides for (tr aρ, tr σ⁻ρ, tr σ³ρ).

    With ``alpha``/``beta`` given, the linear-equation form is used;
    otherwise the mean-field drives α = gS, β = gA are substituted.
    """
    p = params
    if alpha is None:
        alpha, beta = p.g * S, p.g * A
    dA = -(p.kappa + 1j * p.omega) * A + alpha
    dS = -(p.gamma + 1j * p.omega) * S + beta * D
    dD = -2 * (np.conj(beta) * S + beta * np.conj(S)).real - 2 * p.gamma * (D - p.d)
    return dA, dS, dD


def ehrenfest_residuals(run: MasterRun, params: LaserParams | None = None, form: str = "auto"):
    """Max |centered difference − right-hand side| for the three mean values.

    Only interior points with equal spacing on both sides are used.
    """
    params = params or run.params
    if len(run.times) < 3:
        raise ValueError("run needs at least 3 grid points")
    if form == "auto":
        form = "meanfield" if run.route == ROUTE_DIRECT else "linear"
    t = run.times
    h_left, h_right = np.diff(t)[:-1], np.diff(t)[1:]
    ok = np.abs(h_left - h_right) <= 1e-12 * np.maximum(h_left, 1)
    idx = np.nonzero(ok)[0] + 1
    o = run.obs
    A, S, D = o.a, o.sigma_minus, o.sigma_3
    if form == "linear":
        rhs = maxwell_bloch_rhs(params, A[idx], S[idx], D[idx], run.alpha[idx], run.beta[idx])
    elif form == "meanfield":
        rhs = maxwell_bloch_rhs(params, A[idx], S[idx], D[idx])
    else:
        raise ValueError(form)
    out = {}
    for name, x, r in zip(("field", "polarization", "inversion"), (A, S, D), rhs):
        fd = (x[idx + 1] - x[idx - 1]) / (t[idx + 1] - t[idx - 1])
        out[name] = float(np.max(np.abs(fd - r))) if len(idx) else 0.0
    return out, form


def check_ehrenfest(run: MasterRun, params: LaserParams | None = None, tol: float = 1e-4,
                    form: str = "auto") -> VerificationReport:
    res, form = ehrenfest_residuals(run, params, form)
    anchor = ("Maxwell-Bloch equations for the mean-field flow" if form == "meanfield"
              else "Ehrenfest relations of the linear equation")
    rep = VerificationReport()
    for name, r in res.items():
        ctx = dict(dt=run.dt, form=form)
        if name == "inversion":
            ctx["algebra"] = INVERSION_ALGEBRA
        rep.add(f"ehrenfest[{run.route}]/{name}", anchor, r, tol, context=ctx)
    return rep


def check_lorenz_master_agreement(run_master: MasterRun, run_lorenz: LorenzSeries,
                                  tol: float = 1e-5) -> VerificationReport:
    if len(run_master.times) != len(run_lorenz.times) or np.max(np.abs(run_master.times - run_lorenz.times)) > 1e-12:
        raise ValueError("master run and Lorenz series are on different grids")
    o = run_master.obs
    rep = VerificationReport()
    anchor = "mean values of the master solution solve the Lorenz system"
    ctx = dict(max_leakage=float(o.leakage.max()))
    rep.add("lorenz-master/field", anchor, np.max(np.abs(o.a - run_lorenz.A)), tol, context=ctx)
    rep.add("lorenz-master/polarization", anchor, np.max(np.abs(o.sigma_minus - run_lorenz.S)), tol, context=ctx)
    rep.add("lorenz-master/inversion", anchor, np.max(np.abs(o.sigma_3 - run_lorenz.D)), tol, context=ctx)
    return rep


def check_route_equivalence(run_direct: MasterRun, run_lorenz: MasterRun, tol: float = 1e-6) -> VerificationReport:
    from .master import route_trace_distances

    td = route_trace_distances(run_direct, run_lorenz)
    return VerificationReport().add(
        "route-equivalence/trace-distance",
        "self-consistent and Lorenz-precomputed solutions coincide",
        td.max(), tol, context=dict(points=len(td)))


def check_lyapunov(run_lorenz: LorenzSeries, params: LaserParams | None = None,
                   slack: float = 1e-6) -> VerificationReport:
    params = params or run_lorenz.params
    rep = VerificationReport()
    anchor = "Lyapunov decay bound (d<0)" if params.d < 0 else "Lyapunov decay bound (d>=0)"
    if classify_equilibrium(params) is not Stability.CERTIFIED:
        return rep.add("lyapunov/decay", anchor, np.nan, np.nan, applicable=False,
                       context=dict(reason="no positive certified rate"))
    lam = decay_rate(params)
    V = run_lorenz.lyapunov()
    envelope = V[0] * np.exp(-lam * run_lorenz.times)
    passed = bool(np.all(V <= envelope * (1 + slack)))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(envelope > 0, V / envelope, np.where(V > 0, np.inf, 1.0))
    return rep.add("lyapunov/decay", anchor, max(np.max(ratio) - 1, 0.0), slack, passed=passed,
                   context=dict(rate=lam, V0=float(V[0]), V_end=float(V[-1])))


DEFAULT_PAIRING_NAMES = ("a+a_dag", "sigma_minus+sigma_plus", "sigma_3", "N")


def default_pairing_observables(space: SpaceDescriptor) -> dict:
    o = build_operators(space)
    return {
        "a+a_dag": o.a + o.a_dag,
        "sigma_minus+sigma_plus": o.sigma_minus + o.sigma_plus,
        "sigma_3": o.sigma_3,
        "N": o.n_op,
    }


def check_duality_pairing(run_master: MasterRun, sse_run, observables: dict | None = None,
                          times=None, n_sigma: float = 3.0) -> VerificationReport:
    """tr(A ρ_t) against the ensemble mean of ⟨Z_t, A Z_t⟩ at snapshot times."""
    observables = observables or default_pairing_observables(run_master.space)
    if times is None:
        times = [sse_run.times[k] for k in sorted(sse_run.snapshots)]
    rep = VerificationReport()
    for t in times:
        i = int(np.argmin(np.abs(run_master.times - t)))
        rho = run_master.state_at(i)
        Z = sse_run.snapshot(t)
        for name, A in observables.items():
            exact = np.einsum("ij,ji->", A, rho)
            q = np.einsum("ji,ik,jk->j", Z.conj(), A, Z)
            mean = q.mean()
            se = np.hypot(q.real.std(ddof=1), q.imag.std(ddof=1)) / np.sqrt(len(q)) if len(q) > 1 else np.inf
            dev = abs(mean - exact)
            rep.add(f"pairing/{name}@t={t:g}", "trace pairing with the stochastic representation",
                    dev / max(se, SE_FLOOR), n_sigma,
                    context=dict(exact=complex(exact), estimate=complex(mean), se=float(se)))
    return rep


def regularity_series(run_master: MasterRun, p: int) -> tuple[np.ndarray, np.ndarray]:
    """tr(N^p ρ N^p) at stored grid points; clipped at zero."""
    n = run_master.space.photon_numbers().astype(float)
    w = n ** (2 * p)
    vals = np.array([w @ np.real(np.diagonal(r)) for r in run_master.states])
    return run_master.times[run_master.state_index], np.maximum(vals, 0.0)


def check_regularity(run_master: MasterRun, p: int = 1, factor: float = 10.0) -> VerificationReport:
    """Non-blow-up of the N^p moment: value ≤ factor·(1 + initial value). Heuristic bound."""
    if p < 1:
        raise ValueError("p must be a positive integer")
    _, vals = regularity_series(run_master, p)
    bound = factor * (1 + vals[0])
    return VerificationReport().add(
        f"regularity/p={p}", "moment bound for N^p-regular solutions", vals.max() / bound, 1.0,
        context=dict(initial=float(vals[0]), max=float(vals.max()), factor=factor,
                     finite=bool(np.all(np.isfinite(vals)))),
        heuristic=True)


def check_generator_identities(ops: GKSLOperators, space: SpaceDescriptor | None = None,
                               n_random: int = 100, times=None, seed: int = 0,
                               tol: float = 1e-12) -> VerificationReport:
    space = space or ops.space
    if times is None:
        times = np.linspace(0.0, 2.0, 10)
    rng = np.random.default_rng(seed)
    n = space.photon_numbers()
    rep = VerificationReport()
    ltl = sum(L.conj().T @ L for L in ops.jumps)
    scale = np.max(np.abs(ltl))
    worst_matrix = max(np.max(np.abs(generator_identity_matrix(ops, t))) for t in times)
    rep.add("generator/G+G^dag+sum L^dag L", "conservativity of the generator", worst_matrix / scale, tol,
            context=dict(scale=float(scale)))
    worst_basis = 0.0
    worst_random = 0.0
    for t in times:
        for i in range(space.dim):
            e = np.zeros(space.dim, dtype=complex)
            e[i] = 1
            worst_basis = max(worst_basis, conservativity_residual(ops, t, e) / (1 + n[i]))
        for _ in range(n_random):
            x = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
            x /= np.linalg.norm(x)
            weight = 1 + float(n @ np.abs(x) ** 2)
            worst_random = max(worst_random, conservativity_residual(ops, t, x) / weight)
    anchor = "2Re<x,Gx> + sum |L x|^2 = 0"
    rep.add("generator/conservativity-basis", anchor, worst_basis, tol, context=dict(times=len(times)))
    rep.add("generator/conservativity-random", anchor, worst_random, tol,
            context=dict(vectors=n_random, times=len(times)))
    return rep


def check_master_invariants(run: MasterRun, trace_tol=None, herm_tol=1e-10, eig_tol=1e-8) -> VerificationReport:
    """Trace, Hermiticity and positivity along a master run."""
    m = run.invariant_maxima()
    steps = len(run.times) - 1
    trace_tol = 1e-9 * (1 + steps) if trace_tol is None else trace_tol
    rep = VerificationReport()
    tag = run.route
    rep.add(f"invariants[{tag}]/trace", "density operators keep unit trace", m["max_trace_error"], trace_tol)
    rep.add(f"invariants[{tag}]/hermiticity", "density operators are self-adjoint", m["max_hermiticity_error"], herm_tol)
    rep.add(f"invariants[{tag}]/positivity", "density operators are non-negative", -m["min_eigenvalue"], eig_tol)
    rep.add(f"invariants[{tag}]/leakage", "truncation stays below the cutoff", m["max_leakage"], run.leakage_bound)
    return rep


def check_sse_norm(sse_run, n_sigma: float = 3.0) -> VerificationReport:
    """Mean squared norm against 1 in units of its own standard error."""
    z = np.abs(sse_run.mean_norm2 - 1) / np.maximum(sse_run.se_re["norm2"], SE_FLOOR)
    return VerificationReport().add(
        f"sse[{sse_run.route}]/mean-norm2", "E|Z_t|^2 = 1", float(np.max(z)), n_sigma,
        context=dict(max_abs_dev=float(np.max(np.abs(sse_run.mean_norm2 - 1))), M=sse_run.plan.M))


def check_representation(run_master: MasterRun, sse_run, tol: float | None = None) -> VerificationReport:
    """Trace distance between the reconstructed and deterministic ρ at snapshot times."""
    from .hilbert import trace_distance
    from .sse import reconstruct_density

    M = sse_run.plan.M
    tol = max(0.05, 6 / np.sqrt(M)) if tol is None else tol
    rep = VerificationReport()
    for k in sorted(sse_run.snapshots):
        t = sse_run.times[k]
        i = int(np.argmin(np.abs(run_master.times - t)))
        td = trace_distance(reconstruct_density(sse_run.snapshots[k]), run_master.state_at(i))
        rep.add(f"representation@t={t:g}", "rho_t = E|Z_t><Z_t|", td, tol, context=dict(M=M))
    return rep


PERTURBABLE = ("omega", "g", "kappa", "gamma", "d")


def perturbed(params: LaserParams, name: str, rel: float = 0.1) -> LaserParams:
    return params.replace(**{name: getattr(params, name) * (1 + rel)})


def negative_controls(run_direct: MasterRun, rho0, rel: float = 0.1, names=PERTURBABLE,
                      route_names=("g",), tol_agreement: float = 1e-5,
                      tol_route: float = 1e-6) -> VerificationReport:
    """Perturb one parameter of the comparison route and require the agreement check to fail."""
    from .lorenz import LorenzState, integrate_lorenz
    from .master import integrate_meanfield_via_lorenz

    params, space = run_direct.params, run_direct.space
    ops = build_operators(space)
    state0 = LorenzState.from_density(rho0, ops)
    rep = VerificationReport()
    t_final = float(run_direct.times[-1])
    for name in names:
        series = integrate_lorenz(perturbed(params, name, rel), state0, run_direct.dt, t_final)
        inner = check_lorenz_master_agreement(run_direct, series, tol_agreement)
        worst = max(c.residual for c in inner.checks)
        rep.add(f"negative-control/lorenz-master/{name}+{rel:.0%}", "agreement check must detect the mismatch",
                worst, tol_agreement, passed=not inner.passed)
    for name in route_names:
        other = integrate_meanfield_via_lorenz(params, rho0, run_direct.dt, t_final, space,
                                               leakage_bound=run_direct.leakage_bound,
                                               store_every=run_direct.meta.get("store_every", 1),
                                               check_eigs=False, lorenz_params=perturbed(params, name, rel))
        inner = check_route_equivalence(run_direct, other, tol_route)
        rep.add(f"negative-control/route-equivalence/{name}+{rel:.0%}", "route check must detect the mismatch",
                inner.checks[0].residual, tol_route, passed=not inner.passed)
    return rep


def run_all(config, log=None) -> tuple[VerificationReport, dict]:
    """Full oracle suite for one configuration; returns the report and the runs."""
    from .config import initial_density
    from .lindblad import build_gksl
    from .lorenz import LorenzState, drive_from_lorenz, integrate_lorenz
    from .master import integrate_meanfield_direct, integrate_meanfield_via_lorenz
    from .sse import NoisePlan, simulate_linear_sse, simulate_meanfield_sse

    say = log or (lambda msg: None)
    params, space, dt, T = config.params, config.space, config.dt, config.t_final
    rho0 = initial_density(config.initial_state, space, params)
    rep = VerificationReport()
    runs = {}

    say("master equation: self-consistent route")
    direct = integrate_meanfield_direct(params, rho0, dt, T, space, config.leakage_threshold)
    say("master equation: Lorenz-precomputed route")
    via = integrate_meanfield_via_lorenz(params, rho0, dt, T, space, config.leakage_threshold)
    lorenz = via.meta["lorenz"]
    runs.update(direct=direct, via_lorenz=via, lorenz=lorenz)

    rep.extend(check_generator_identities(build_gksl(params, drive_from_lorenz(lorenz), space),
                                          times=np.linspace(0, T, 10)))
    rep.extend(check_master_invariants(direct)).extend(check_master_invariants(via))
    rep.extend(check_route_equivalence(direct, via))
    rep.extend(check_lorenz_master_agreement(direct, lorenz))
    rep.extend(check_ehrenfest(direct)).extend(check_ehrenfest(via))
    rep.extend(check_regularity(direct, 1)).extend(check_regularity(direct, 2))

    say("Lorenz system: long-time Lyapunov certificate")
    state0 = LorenzState.from_density(rho0, build_operators(space))
    long = integrate_lorenz(params, state0, dt, max(T, 25.0))
    rep.extend(check_lyapunov(long))

    def stochastic(seed):
        say(f"linear SSE with Lorenz drives, M={config.trajectories}, seed={seed}")
        snaps = [t for t in (0.0, 0.5, 1.0, 2.0) if t <= T]
        plan = NoisePlan(seed, config.trajectories, dt)
        lin = simulate_linear_sse(params, rho0, drive_from_lorenz(lorenz), dt, T, plan, space,
                                  snapshot_times=snaps, workers=config.workers)
        sub = VerificationReport()
        sub.extend(check_sse_norm(lin)).extend(check_representation(via, lin)).extend(check_duality_pairing(via, lin))
        say(f"mean-field SSE, M={config.trajectories}, seed={seed}")
        mf = simulate_meanfield_sse(params, rho0, dt, T, plan, space, workers=config.workers)
        sub.extend(check_sse_norm(mf)).extend(check_meanfield_drives(mf, lorenz))
        return sub, lin, mf

    sub, lin, mf = stochastic(config.seed)
    if not sub.passed:
        retry_seed = independent_seed(config.seed)
        sub2, lin, mf = stochastic(retry_seed)
        sub = merge_seed_reports(sub, sub2, config.seed, retry_seed)
    runs.update(sse_linear=lin, sse_meanfield=mf)
    rep.extend(sub)

    say("negative controls")
    rep.extend(negative_controls(direct, rho0))
    return rep, runs


def independent_seed(seed: int) -> int:
    """Seed for the repeat run of a failed stochastic check."""
    return (seed + 0x9E3779B97F4A7C15) % 2 ** 64


def merge_seed_reports(first: VerificationReport, second: VerificationReport, seed1: int,
                       seed2: int) -> VerificationReport:
    """A stochastic check fails only if it fails on both seeds."""
    earlier = {c.name: c for c in first.checks}
    merged = VerificationReport()
    for c in second.checks:
        prev = earlier.get(c.name)
        ctx = dict(c.context, seeds=[seed1, seed2],
                   first_seed_residual=None if prev is None else prev.residual)
        passed = c.passed if prev is None or c.passed is None else (c.passed or prev.passed)
        merged.checks.append(CheckResult(c.name, c.anchor, c.residual, c.tolerance, passed, ctx, c.heuristic))
    return merged


def check_meanfield_drives(sse_run, lorenz: LorenzSeries, n_sigma: float = 3.0) -> VerificationReport:
    """Ensemble drive estimates against g·S(t), g·A(t) in standard-error units."""
    g = lorenz.params.g
    rep = VerificationReport()
    for label, est, ref, key in (("alpha", sse_run.alpha, g * lorenz.S, "sigma_minus"),
                                 ("beta", sse_run.beta, g * lorenz.A, "a")):
        se_re = abs(g) * sse_run.se_re[key]
        se_im = abs(g) * sse_run.se_im[key]
        z = _z_scores(est, ref, se_re, se_im)
        rep.add(f"sse-meanfield/{label}", "mean-field drives of the nonlinear SSE follow the Lorenz solution",
                float(np.max(z)), n_sigma,
                context=dict(max_abs_dev=float(np.max(np.abs(est - ref))), M=sse_run.plan.M))
    return rep


def _z_scores(est, ref, se_re, se_im):
    z_re = np.abs(est.real - ref.real) / np.maximum(se_re, SE_FLOOR)
    z_im = np.abs(est.imag - ref.imag) / np.maximum(se_im, SE_FLOOR)
    return np.maximum(z_re, z_im)
