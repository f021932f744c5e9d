"""Backward-Euler time integration of the viscous Cahn-Hilliard system
with a dynamic Cahn-Hilliard-type boundary condition on the unit disk.

Unknowns per time level are the sextuplet (u, mu, xi, v, w, eta): bulk
state and chemical potential with the graph selection xi = beta_lam(u),
and their boundary counterparts.  One step solves

    (u' - u)/dt = Lap mu',                         zero flux on mu',
    mu' = lam*(u'-u)/dt + s*(u'-u) - Lap u' + beta_lam(u') + pi(u) - f(t'),
    (v' - v)/dt = Lap_Gamma w',
    w'  = lam*(v'-v)/dt + s*(v'-v) + dnu u' - delta*Lap_Gamma v'
          + beta_Gamma_lam(v') + pi_Gamma(v) - g(t'),

with u'|_Gamma = v' by unknown identification.  Monotone terms are
implicit, the Lipschitz perturbations explicit (convex-concave
splitting), which makes the discrete energy nonincreasing for autonomous
data and conserves both means exactly (conservative stencils).

Newton uses the a.e. derivative of the Yosida terms.  The sparse LU of
the 4-block Jacobian is reused across iterations and steps and only
refreshed when the residual stalls; convergence is always judged on the
true nonlinear residual, so the reuse is a pure economy.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from . import disk_grid as dg
from . import monotone_graphs as mg
from .errors import (LinearSolveFailure, NewtonDivergence, ShapeMismatch,
                     ValidationFailure)

__all__ = (
    'SolverConfig', 'ProblemData', 'StepSolution', 'DiagnosticsRow',
    'Diagnostics', 'RunResult', 'ValidationReport', 'NewtonStepper',
    'validate', 'step', 'run', 'energy', 'initial_state',
    'bulk_profile', 'trace_profile', 'make_bulk_source', 'make_trace_source',
    'preset_problem', 'PRESET_NAMES', 'DIAGNOSTIC_COLUMNS',
)

DIAGNOSTIC_COLUMNS = ('t', 'mass_bulk', 'mass_trace', 'energy', 'd_energy',
                      'grad_mu', 'grad_w', 'overshoot', 'delta_h1v',
                      'newton_iters')


# ---------------------------------------------------------------------------
# sources and analytic profiles

def bulk_profile(grid: dg.DiskGrid, spec: dict) -> np.ndarray:
    """Materialize an analytic bulk profile from its JSON spec."""
    kind = spec.get('kind', 'constant')
    if kind == 'constant':
        return np.full((grid.n_r, grid.n_theta), float(spec.get('value', 0.0)))
    if kind == 'harmonic':
        a = float(spec.get('amplitude', 1.0))
        m = int(spec.get('mode', 1))
        phase = float(spec.get('phase', 0.0))
        off = float(spec.get('offset', 0.0))
        rm = grid.r[:, None] ** m
        return off + a * rm * np.cos(m * grid.theta[None, :] + phase)
    if kind == 'tabulated':
        return np.array(spec['values'], dtype=float).reshape(grid.n_r, grid.n_theta)
    raise ValueError(f'unknown bulk profile kind {kind!r}')


def trace_profile(grid: dg.DiskGrid, spec: dict) -> np.ndarray:
    kind = spec.get('kind', 'constant')
    if kind == 'constant':
        return np.full(grid.n_theta, float(spec.get('value', 0.0)))
    if kind in ('mode', 'harmonic'):
        a = float(spec.get('amplitude', 1.0))
        m = int(spec.get('mode', 1))
        phase = float(spec.get('phase', 0.0))
        off = float(spec.get('offset', 0.0))
        return off + a * np.cos(m * grid.theta + phase)
    if kind == 'tabulated':
        return np.array(spec['values'], dtype=float).reshape(grid.n_theta)
    raise ValueError(f'unknown trace profile kind {kind!r}')


@dataclass(frozen=True)
class _Source:
    """Time-dependent source: zero, separable profile*T(t), or tabulated frames.

    Picklable (plain data only) so runs can be farmed out to worker
    processes by the harness.
    """

    shape: tuple
    kind: str = 'zero'
    spatial: np.ndarray | None = None
    time_kind: str = 'constant'
    rate: float = 0.0
    omega: float = 0.0
    times: tuple = ()
    frames: np.ndarray | None = None

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == 'zero':
            return np.zeros(self.shape)
        if self.kind == 'separable':
            if self.time_kind == 'constant':
                factor = 1.0
            elif self.time_kind == 'exp':
                factor = math.exp(self.rate * t)
            elif self.time_kind == 'cos':
                factor = math.cos(self.omega * t)
            else:
                raise ValueError(f'unknown time profile {self.time_kind!r}')
            return factor * self.spatial
        # tabulated: linear interpolation in t, constant continuation
        ts = np.asarray(self.times)
        idx = np.searchsorted(ts, t)
        if idx == 0:
            return self.frames[0].copy()
        if idx >= ts.size:
            return self.frames[-1].copy()
        t0, t1 = ts[idx - 1], ts[idx]
        lam = (t - t0) / (t1 - t0)
        return (1.0 - lam) * self.frames[idx - 1] + lam * self.frames[idx]

    def scaled(self, factor: float) -> '_Source':
        if self.kind == 'zero':
            return self
        if self.kind == 'separable':
            return _Source(self.shape, 'separable', factor * self.spatial,
                           self.time_kind, self.rate, self.omega)
        return _Source(self.shape, 'tabulated', times=self.times,
                       frames=factor * self.frames)


def _source_from_spec(shape, profile_fn, grid, spec: dict | None) -> _Source:
    if spec is None or spec.get('kind', 'zero') == 'zero':
        return _Source(shape)
    kind = spec['kind']
    if kind == 'separable':
        spatial = profile_fn(grid, spec.get('spatial', {'kind': 'constant', 'value': 1.0}))
        tspec = spec.get('time', {'kind': 'constant'})
        return _Source(shape, 'separable', spatial, tspec.get('kind', 'constant'),
                       float(tspec.get('rate', 0.0)), float(tspec.get('omega', 0.0)))
    if kind == 'tabulated':
        times = tuple(float(t) for t in spec['times'])
        frames = np.array([np.asarray(fr, float).reshape(shape) for fr in spec['frames']])
        if sorted(times) != list(times):
            raise ValueError('tabulated source times must be increasing')
        return _Source(shape, 'tabulated', times=times, frames=frames)
    raise ValueError(f'unknown source kind {kind!r}')


def make_bulk_source(grid: dg.DiskGrid, spec: dict | None) -> _Source:
    return _source_from_spec((grid.n_r, grid.n_theta), bulk_profile, grid, spec)


def make_trace_source(grid: dg.DiskGrid, spec: dict | None) -> _Source:
    return _source_from_spec((grid.n_theta,), trace_profile, grid, spec)


# ---------------------------------------------------------------------------
# problem data and configuration

@dataclass
class ProblemData:
    """Sources, initial data, graphs, and perturbations for one run."""

    grid: dg.DiskGrid
    bulk_graph: mg.GraphSpec
    boundary_graph: mg.GraphSpec
    pi: mg.Perturbation
    pi_gamma: mg.Perturbation
    f: _Source
    g: _Source
    u0: np.ndarray
    v0: np.ndarray
    compat_tol: float | None = None

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float)
        g = self.grid
        if self.u0.shape != (g.n_r, g.n_theta):
            raise ShapeMismatch('u0 shape does not match the grid')
        if self.v0.shape != (g.n_theta,):
            raise ShapeMismatch('v0 shape does not match the grid')

    @property
    def m0(self) -> float:
        return dg.mean_bulk(dg.BulkField(self.grid, self.u0))

    @property
    def m_gamma0(self) -> float:
        return dg.mean_trace(dg.TraceField(self.grid, self.v0))


@dataclass
class SolverConfig:
    delta: float
    lam: float
    dt: float
    t_end: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    stabilization: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError('delta must lie in [0, 1]')
        if not 0.0 < self.lam <= 1.0:
            raise ValueError('lambda must lie in (0, 1]')
        if not self.dt > 0:
            raise ValueError('dt must be positive')
        if not self.t_end > 0:
            raise ValueError('t_end must be positive')
        if not self.newton_tol > 0:
            raise ValueError('newton_tol must be positive')
        if self.stabilization < 0:
            raise ValueError('stabilization must be nonnegative')


PRESET_NAMES = ('cubic', 'logarithmic', 'obstacle', 'backward')


def preset_problem(name: str, grid: dg.DiskGrid, amplitude: float = 0.2,
                   mode: int = 2, offset: float = 0.05, log_scale: float = 0.5,
                   anti_slope_c: float = 1.0) -> ProblemData:
    """Named problem families with compatible smooth initial data.

    u0 = offset + amplitude*r^mode*cos(mode*theta) with the matching trace
    ring; f = g = 0.  The logarithmic family exposes the potential scale
    and the anti-monotone slope c (pi = -2c r) as parameters.
    """
    u0 = bulk_profile(grid, {'kind': 'harmonic', 'amplitude': amplitude,
                             'mode': mode, 'offset': offset})
    v0 = trace_profile(grid, {'kind': 'mode', 'amplitude': amplitude,
                              'mode': mode, 'offset': offset})
    zero_f = make_bulk_source(grid, None)
    zero_g = make_trace_source(grid, None)
    if name == 'cubic':
        graph = mg.power_odd(3, 1.0)
        pi = mg.Perturbation.linear(-1.0)
        return ProblemData(grid, graph, graph, pi, pi, zero_f, zero_g, u0, v0)
    if name == 'logarithmic':
        graph = mg.logarithmic(log_scale)
        pi = mg.Perturbation.linear(-2.0 * anti_slope_c)
        return ProblemData(grid, graph, graph, pi, pi, zero_f, zero_g, u0, v0)
    if name == 'obstacle':
        graph = mg.double_obstacle(-1.0, 1.0)
        pi = mg.Perturbation.linear(-1.0)
        return ProblemData(grid, graph, graph, pi, pi, zero_f, zero_g, u0, v0)
    if name == 'backward':
        graph = mg.zero()
        pi = mg.Perturbation.linear(-1.0)
        return ProblemData(grid, graph, graph, pi, pi, zero_f, zero_g, u0, v0)
    raise ValueError(f'unknown preset {name!r}; choose from {PRESET_NAMES}')


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    ok: bool
    failures: list
    domination: mg.DominationReport | None
    same_growth: mg.SameGrowthReport | None
    compat_error: float
    compat_tol: float
    dt_lipschitz: float


def _range_inside(values: np.ndarray, spec: mg.GraphSpec, margin: float = 1e-12) -> bool:
    lo, hi = float(np.min(values)), float(np.max(values))
    return lo > spec.domain_lower + margin and hi < spec.domain_upper - margin


def _default_sample_grid(problem: ProblemData, n: int = 201) -> np.ndarray:
    """Samples spanning the initial-data ranges widened by 50%, inside D(beta_Gamma)."""
    radius = 1.5 * max(float(np.max(np.abs(problem.u0))),
                       float(np.max(np.abs(problem.v0))), 1e-6)
    pts = np.linspace(-radius, radius, n)
    b = problem.boundary_graph
    lo = b.domain_lower if b.lower_closed else b.domain_lower + 1e-12
    hi = b.domain_upper if b.upper_closed else b.domain_upper - 1e-12
    return np.unique(np.clip(pts, lo, hi))


def validate(problem: ProblemData, config: SolverConfig) -> ValidationReport:
    """Check the admissibility assumptions; returns a report, never raises.

    Verifies trace compatibility of (u0, v0) with the one-sided boundary
    stencil, initial ranges strictly inside the graph domains, and
    bulk-by-boundary domination on a default sample grid.  The same-growth
    status is informational (required only for rate claims).
    """
    failures = []
    g = problem.grid
    u0, v0 = problem.u0, problem.v0

    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(v0))):
        failures.append('NonFiniteData: initial data contains non-finite values')

    # trace compatibility: linear extrapolation from the last two rings to r=1
    ext = u0[-1, :] + 0.5 * (u0[-1, :] - u0[-2, :])
    compat_error = float(np.max(np.abs(ext - v0)))
    scale = max(1.0, float(np.max(np.abs(u0))), float(np.max(np.abs(v0))))
    compat_tol = problem.compat_tol if problem.compat_tol is not None \
        else 25.0 * g.dr ** 2 * scale
    if compat_error > compat_tol:
        failures.append(f'TraceIncompatibility: |u0 ring extrapolation - v0| = '
                        f'{compat_error:.3e} exceeds {compat_tol:.3e}')

    if not _range_inside(u0, problem.bulk_graph):
        failures.append('IncompatibleRange: essential range of u0 not inside int D(beta)')
    if not _range_inside(v0, problem.boundary_graph):
        failures.append('IncompatibleRange: range of v0 not inside int D(beta_Gamma)')

    domination = None
    same_growth = None
    try:
        samples = _default_sample_grid(problem)
        domination = mg.check_domination(problem.bulk_graph, problem.boundary_graph, samples)
        if not domination.feasible:
            failures.append(f'DominationViolation: {domination.message} '
                            f'(witness {domination.witness})')
        same_growth = mg.check_same_growth(problem.bulk_graph, problem.boundary_graph, samples)
    except Exception as exc:  # pragma: no cover - defensive; samples are in-domain
        failures.append(f'GrowthCheckError: {exc}')

    dt_lip = config.dt * (problem.pi.lipschitz_constant
                          + problem.pi_gamma.lipschitz_constant)
    if dt_lip > 0.5:
        warnings.warn(f'dt*(L + L_Gamma) = {dt_lip:.3g} exceeds 0.5; the explicit '
                      'perturbation treatment may be inaccurate', stacklevel=2)

    return ValidationReport(not failures, failures, domination, same_growth,
                            compat_error, compat_tol, dt_lip)


# ---------------------------------------------------------------------------
# states, diagnostics

@dataclass
class StepSolution:
    """Discrete sextuplet at one time level plus Newton bookkeeping."""
    t: float
    u: dg.BulkField
    mu: dg.BulkField
    xi: dg.BulkField
    v: dg.TraceField
    w: dg.TraceField
    eta: dg.TraceField
    newton_iters: int
    residual: float


@dataclass
class DiagnosticsRow:
    t: float
    mass_bulk: float
    mass_trace: float
    energy: float
    d_energy: float
    grad_mu: float
    grad_w: float
    overshoot: float
    delta_h1v: float
    newton_iters: int


@dataclass
class Diagnostics:
    rows: list = field(default_factory=list)
    dt_lipschitz: float = 0.0


@dataclass
class RunResult:
    steps: list              # StepSolution at every time level, t=0 first
    diagnostics: Diagnostics
    error: NewtonDivergence | None
    wall_time: float


def _overshoot(values: np.ndarray, spec: mg.GraphSpec) -> float:
    """Max distance of the values beyond the (bounded) graph domain."""
    out = 0.0
    if np.isfinite(spec.domain_upper):
        out = max(out, float(np.max(values - spec.domain_upper)))
    if np.isfinite(spec.domain_lower):
        out = max(out, float(np.max(spec.domain_lower - values)))
    return max(out, 0.0)


def energy(state: StepSolution, problem: ProblemData, config: SolverConfig) -> float:
    """Discrete Lyapunov functional at a time level (sources at state.t)."""
    return _energy_arrays(problem, config, state.t, state.u.values, state.v.values)


def _energy_arrays(problem, config, t, u, v):
    g = problem.grid
    lam = config.lam
    uf = dg.BulkField(g, u)
    vf = dg.TraceField(g, v)
    grad2 = dg.h1_seminorm_bulk(uf, vf) ** 2
    wv = g.weights
    bw = g.boundary_weights
    bulk = np.sum(wv * (np.asarray(mg.yosida_primitive(problem.bulk_graph, u, lam))
                        + np.asarray(problem.pi.primitive(u))
                        - problem.f(t) * u))
    surf = np.sum(bw * (np.asarray(mg.yosida_primitive(problem.boundary_graph, v, lam))
                        + np.asarray(problem.pi_gamma.primitive(v))
                        - problem.g(t) * v))
    surf_grad2 = dg.h1_seminorm_trace(vf) ** 2
    return float(0.5 * grad2 + bulk + 0.5 * config.delta * surf_grad2 + surf)


# ---------------------------------------------------------------------------
# the Newton stepper

class NewtonStepper:
    """One backward-Euler step for fixed (problem, config, dt).

    The assembled Jacobian of the 4-block system is exposed through
    :meth:`jacobian_at`, so a different linear solver can be substituted;
    the built-in path factorizes it with SuperLU and reuses the
    factorization until the residual stalls.
    """

    def __init__(self, problem: ProblemData, config: SolverConfig, dt: float):
        self.problem = problem
        self.config = config
        self.dt = float(dt)
        g = problem.grid
        n, nt = g.size, g.n_theta
        self.n, self.nt = n, nt
        self.AN = dg.neumann_laplacian_matrix(g)
        self.AD, self.B = dg.dirichlet_laplacian_matrices(g)
        self.DG = dg.circle_laplacian_matrix(g)
        self.wv = g.weights.ravel()
        self.bw = g.boundary_weights
        visc = config.lam / self.dt + config.stabilization
        self.visc = visc
        eye_n = sps.identity(n, format='csr')
        eye_t = sps.identity(nt, format='csr')
        self.Cuu = (-visc * eye_n + self.AD).tocsr()
        self.Cvv = (-(visc + 2.0 / g.dr) * eye_t + config.delta * self.DG).tocsr()
        ring_cols = np.arange((g.n_r - 1) * nt, n)
        self.ring = sps.coo_matrix(
            (np.full(nt, 2.0 / g.dr), (np.arange(nt), ring_cols)),
            shape=(nt, n)).tocsr()
        self._eye_n, self._eye_t = eye_n, eye_t
        self._lu = None
        self._lu_key = None

    # -- assembly ----------------------------------------------------------

    def jacobian_at(self, u: np.ndarray, v: np.ndarray) -> sps.csc_matrix:
        """4-block Jacobian with the a.e. Yosida slopes at (u, v)."""
        du = np.asarray(mg.yosida_derivative(self.problem.bulk_graph,
                                             u.ravel(), self.config.lam))
        dv = np.asarray(mg.yosida_derivative(self.problem.boundary_graph,
                                             v, self.config.lam))
        return self._jacobian_from_diags(du, dv)

    def _jacobian_from_diags(self, du, dv):
        return sps.bmat(
            [[self._eye_n, -self.dt * self.AN, None, None],
             [self.Cuu - sps.diags(du), self._eye_n, self.B, None],
             [None, None, self._eye_t, -self.dt * self.DG],
             [self.ring, None, self.Cvv - sps.diags(dv), self._eye_t]],
            format='csc')

    def _refresh_lu(self, u, v):
        du = np.asarray(mg.yosida_derivative(self.problem.bulk_graph,
                                             u, self.config.lam))
        dv = np.asarray(mg.yosida_derivative(self.problem.boundary_graph,
                                             v, self.config.lam))
        key = (du, dv)
        if self._lu is not None and self._lu_key is not None \
                and np.array_equal(self._lu_key[0], du) \
                and np.array_equal(self._lu_key[1], dv):
            return False  # factorization already matches this iterate
        try:
            self._lu = splu(self._jacobian_from_diags(du, dv))
        except RuntimeError as exc:
            raise LinearSolveFailure(f'sparse factorization failed: {exc}') from exc
        self._lu_key = key
        return True

    # -- residual ------------------------------------------------------------

    def _residual(self, x, u0, v0, pi_u0, pig_v0, f1, g1):
        n, nt = self.n, self.nt
        u1 = x[:n]
        mu1 = x[n:2 * n]
        v1 = x[2 * n:2 * n + nt]
        w1 = x[2 * n + nt:]
        lam = self.config.lam
        r1 = u1 - u0 - self.dt * (self.AN @ mu1)
        r2 = (mu1 + self.Cuu @ u1 + self.visc * u0 + self.B @ v1
              - np.asarray(mg.yosida(self.problem.bulk_graph, u1, lam))
              - pi_u0 + f1)
        r3 = v1 - v0 - self.dt * (self.DG @ w1)
        r4 = (w1 + self.Cvv @ v1 + self.visc * v0 + self.ring @ u1
              - np.asarray(mg.yosida(self.problem.boundary_graph, v1, lam))
              - pig_v0 + g1)
        return np.concatenate([r1, r2, r3, r4])

    def _res_norm(self, r):
        n, nt = self.n, self.nt
        q = (self.wv @ (r[:n] ** 2) + self.wv @ (r[n:2 * n] ** 2)
             + self.bw @ (r[2 * n:2 * n + nt] ** 2) + self.bw @ (r[2 * n + nt:] ** 2))
        return math.sqrt(q)

    # -- the step ------------------------------------------------------------

    def step(self, t0: float, u0, v0, mu_prev, w_prev):
        """Advance from t0 to t0+dt; returns (u, mu, v, w, iters, residual)."""
        cfg = self.config
        prob = self.problem
        t1 = t0 + self.dt
        pi_u0 = np.asarray(prob.pi(u0))
        pig_v0 = np.asarray(prob.pi_gamma(v0))
        f1 = prob.f(t1).ravel()
        g1 = prob.g(t1)
        u0f = u0.ravel()
        pi_u0 = pi_u0.ravel()

        x = np.concatenate([u0f, mu_prev.ravel(), v0, w_prev])
        r = self._residual(x, u0f, v0, pi_u0, pig_v0, f1, g1)
        res = self._res_norm(r)
        iters = 0
        prev_res = math.inf
        best_res = res
        nm_left = 5   # budget of non-monotone kink-crossing steps
        n, nt = self.n, self.nt

        while res > cfg.newton_tol:
            if iters >= cfg.newton_max_iter:
                raise NewtonDivergence(
                    f'no convergence in {iters} iterations (residual {res:.3e})',
                    t=t1, iters=iters, residual=res)
            if self._lu is None or res > 0.25 * prev_res:
                self._refresh_lu(x[:n], x[2 * n:2 * n + nt])
            try:
                dx = self._lu.solve(-r)
            except RuntimeError as exc:
                raise LinearSolveFailure(f'triangular solve failed: {exc}') from exc
            accepted = False
            alpha = 1.0
            for _ in range(9):  # full step + 8 damped retries
                x_try = x + alpha * dx
                r_try = self._residual(x_try, u0f, v0, pi_u0, pig_v0, f1, g1)
                res_try = self._res_norm(r_try)
                if res_try <= cfg.newton_tol or res_try < res * (1.0 - 1e-4):
                    accepted = True
                    break
                alpha *= 0.5
            iters += 1
            if not accepted:
                if self._refresh_lu(x[:n], x[2 * n:2 * n + nt]):
                    continue  # retry with a fresh Jacobian at the same iterate
                # Fresh Jacobian and no damped step decreases the merit: the
                # Newton direction crosses an active-set kink where |R| rises
                # transiently.  Take the full step anyway (bounded budget);
                # for the piecewise-linear obstacle system the next fresh
                # solve is exact once the active set settles.
                if nm_left == 0:
                    raise NewtonDivergence(
                        f'damped Newton stalled at residual {res:.3e}',
                        t=t1, iters=iters, residual=res)
                nm_left -= 1
                x_try = x + dx
                r_try = self._residual(x_try, u0f, v0, pi_u0, pig_v0, f1, g1)
                res_try = self._res_norm(r_try)
            x, r, prev_res, res = x_try, r_try, res, res_try
            if res < best_res:
                best_res = res
                nm_left = 5

        return x[:n].reshape(u0.shape), x[n:2 * n].reshape(u0.shape), \
            x[2 * n:2 * n + nt], x[2 * n + nt:], iters, res


def step(state: StepSolution, problem: ProblemData, config: SolverConfig) -> StepSolution:
    """Single time step from an existing StepSolution (fresh stepper)."""
    stepper = NewtonStepper(problem, config, config.dt)
    return _advance(stepper, state, problem, config)


def _advance(stepper: NewtonStepper, state: StepSolution, problem, config) -> StepSolution:
    g = problem.grid
    u1, mu1, v1, w1, iters, res = stepper.step(
        state.t, state.u.values, state.v.values,
        state.mu.values, state.w.values)
    lam = config.lam
    xi = np.asarray(mg.yosida(problem.bulk_graph, u1, lam))
    eta = np.asarray(mg.yosida(problem.boundary_graph, v1, lam))
    return StepSolution(state.t + stepper.dt,
                        dg.BulkField(g, u1), dg.BulkField(g, mu1),
                        dg.BulkField(g, xi),
                        dg.TraceField(g, v1), dg.TraceField(g, w1),
                        dg.TraceField(g, eta), iters, res)


def initial_state(problem: ProblemData, config: SolverConfig) -> StepSolution:
    """Time-zero StepSolution; mu and w are not defined by the scheme at t=0
    and are stored as zeros."""
    g = problem.grid
    zeros_b = np.zeros((g.n_r, g.n_theta))
    zeros_t = np.zeros(g.n_theta)
    xi = np.asarray(mg.yosida(problem.bulk_graph, problem.u0, config.lam))
    eta = np.asarray(mg.yosida(problem.boundary_graph, problem.v0, config.lam))
    return StepSolution(0.0, dg.BulkField(g, problem.u0.copy()),
                        dg.BulkField(g, zeros_b), dg.BulkField(g, xi),
                        dg.TraceField(g, problem.v0.copy()),
                        dg.TraceField(g, zeros_t), dg.TraceField(g, eta), 0, 0.0)


def _diag_row(problem, config, state: StepSolution, prev_energy: float | None):
    g = problem.grid
    e = energy(state, problem, config)
    return DiagnosticsRow(
        t=state.t,
        mass_bulk=dg.mean_bulk(state.u),
        mass_trace=dg.mean_trace(state.v),
        energy=e,
        d_energy=0.0 if prev_energy is None else e - prev_energy,
        grad_mu=dg.h1_seminorm_bulk(state.mu),
        grad_w=dg.h1_seminorm_trace(state.w),
        overshoot=_overshoot(state.v.values, problem.boundary_graph),
        delta_h1v=config.delta * dg.h1_seminorm_trace(state.v),
        newton_iters=state.newton_iters,
    ), e


def run(problem: ProblemData, config: SolverConfig,
        check: bool = True) -> RunResult:
    """Integrate from 0 to t_end; returns every time level plus diagnostics.

    A trailing partial step is taken when t_end is not a multiple of dt.
    On NewtonDivergence the trajectory up to the last good step is
    returned together with the error.
    """
    if check:
        report = validate(problem, config)
        if not report.ok:
            raise ValidationFailure('; '.join(report.failures))

    t_start = time.perf_counter()
    n_full = int(math.floor(config.t_end / config.dt + 1e-9))
    remainder = config.t_end - n_full * config.dt
    if remainder < 1e-12 * config.t_end:
        remainder = 0.0

    diag = Diagnostics(dt_lipschitz=config.dt * (
        problem.pi.lipschitz_constant + problem.pi_gamma.lipschitz_constant))
    state = initial_state(problem, config)
    row, e_prev = _diag_row(problem, config, state, None)
    diag.rows.append(row)
    steps = [state]
    error = None

    stepper = NewtonStepper(problem, config, config.dt)
    plan = [config.dt] * n_full + ([remainder] if remainder else [])
    for dt_k in plan:
        if dt_k != stepper.dt:
            stepper = NewtonStepper(problem, config, dt_k)
        try:
            state = _advance(stepper, state, problem, config)
        except NewtonDivergence as exc:
            error = exc
            break
        row, e_prev = _diag_row(problem, config, state, e_prev)
        diag.rows.append(row)
        steps.append(state)

    return RunResult(steps, diag, error, time.perf_counter() - t_start)
