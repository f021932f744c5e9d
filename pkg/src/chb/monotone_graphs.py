"""Maximal monotone graphs, their resolvents and Yosida approximations.

The four supported graph kinds are

    Zero                beta(r) = 0
    PowerOdd(p, c)      beta(r) = c*r**p         (p odd >= 3, c > 0)
    Logarithmic(s)      beta(r) = s*ln((1+r)/(1-r))   on (-1, 1)
    DoubleObstacle(a,b) beta = subdifferential of the indicator of [a, b]

Every graph is the subdifferential of a convex primitive ``beta_hat`` with
``beta_hat(0) = 0``.  The resolvent is J_lam = (I + lam*beta)^{-1}, the
Yosida approximation is beta_lam = (I - J_lam)/lam, and the regularized
primitive is the Moreau envelope

    beta_hat_lam(r) = |r - J_lam(r)|^2 / (2*lam) + beta_hat(J_lam(r)).

All evaluation routines accept scalars or numpy arrays elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import EmptySampleGrid, NonFiniteInput, OutOfDomain, RootFindFailure

__all__ = (
    'GraphSpec', 'Perturbation', 'DominationReport', 'SameGrowthReport',
    'zero', 'power_odd', 'logarithmic', 'double_obstacle',
    'resolvent', 'yosida', 'yosida_derivative', 'minimal_section',
    'primitive', 'yosida_primitive', 'check_domination', 'check_same_growth',
    'graph_from_json', 'graph_to_json', 'perturbation_from_json',
    'perturbation_to_json',
)

_REL_TOL = 1e-13    # relative residual for the scalar resolvent solves
_MAX_ITER = 100


@dataclass(frozen=True)
class GraphSpec:
    """Immutable description of one maximal monotone graph.

    ``domain_lower``/``domain_upper`` describe D(beta) as an interval with
    the given closedness flags (the obstacle domain is closed, the
    logarithmic one is open, power/zero graphs live on all of R).
    """

    kind: str
    exponent: int = 3
    coefficient: float = 1.0
    scale: float = 1.0
    lower: float = -1.0
    upper: float = 1.0
    domain_lower: float = -math.inf
    domain_upper: float = math.inf
    lower_closed: bool = False
    upper_closed: bool = False

    def __post_init__(self):
        if self.kind not in ('zero', 'power_odd', 'logarithmic', 'double_obstacle'):
            raise ValueError(f'unknown graph kind {self.kind!r}')
        if self.kind == 'power_odd':
            if self.exponent < 3 or self.exponent % 2 == 0:
                raise ValueError('power_odd exponent must be an odd integer >= 3')
            if not self.coefficient > 0:
                raise ValueError('power_odd coefficient must be positive')
        if self.kind == 'logarithmic' and not self.scale > 0:
            raise ValueError('logarithmic scale must be positive')
        if self.kind == 'double_obstacle':
            if not self.lower < self.upper:
                raise ValueError('double_obstacle needs lower < upper')
            # beta_hat(0) = 0 requires 0 in D(beta)
            if not (self.lower <= 0.0 <= self.upper):
                raise ValueError('double_obstacle interval must contain 0')

    def contains(self, r, strict_margin=0.0):
        """Elementwise test r in D(beta), optionally shrunk by a margin."""
        r = np.asarray(r, dtype=float)
        lo, hi = self.domain_lower + strict_margin, self.domain_upper - strict_margin
        ok_lo = r >= lo if (self.lower_closed and strict_margin == 0.0) else r > lo
        ok_hi = r <= hi if (self.upper_closed and strict_margin == 0.0) else r < hi
        return ok_lo & ok_hi


def zero() -> GraphSpec:
    return GraphSpec('zero')


def power_odd(exponent: int, coefficient: float = 1.0) -> GraphSpec:
    return GraphSpec('power_odd', exponent=int(exponent), coefficient=float(coefficient))


def logarithmic(scale: float = 1.0) -> GraphSpec:
    return GraphSpec('logarithmic', scale=float(scale),
                     domain_lower=-1.0, domain_upper=1.0)


def double_obstacle(lower: float = -1.0, upper: float = 1.0) -> GraphSpec:
    return GraphSpec('double_obstacle', lower=float(lower), upper=float(upper),
                     domain_lower=float(lower), domain_upper=float(upper),
                     lower_closed=True, upper_closed=True)


def graph_to_json(spec: GraphSpec) -> dict:
    if spec.kind == 'zero':
        return {'kind': 'zero'}
    if spec.kind == 'power_odd':
        return {'kind': 'power_odd', 'exponent': spec.exponent,
                'coefficient': spec.coefficient}
    if spec.kind == 'logarithmic':
        return {'kind': 'logarithmic', 'scale': spec.scale}
    return {'kind': 'double_obstacle', 'lower': spec.lower, 'upper': spec.upper}


def graph_from_json(d: dict) -> GraphSpec:
    kind = d.get('kind')
    if kind == 'zero':
        return zero()
    if kind == 'power_odd':
        return power_odd(d.get('exponent', 3), d.get('coefficient', 1.0))
    if kind == 'logarithmic':
        return logarithmic(d.get('scale', 1.0))
    if kind == 'double_obstacle':
        return double_obstacle(d.get('lower', -1.0), d.get('upper', 1.0))
    raise ValueError(f'unknown graph kind {kind!r}')


def _as_array(r):
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput('non-finite graph argument')
    return arr


def _scalar_like(out, template):
    return float(out) if np.ndim(template) == 0 else out


def resolvent(spec: GraphSpec, r, lam: float):
    """Resolvent J_lam(r) = (I + lam*beta)^{-1}(r).

    Parameters
    ----------
    spec : GraphSpec
    r : float or array_like
    lam : float
        Must be positive.

    Returns
    -------
    float or ndarray
        The unique x with x + lam*beta(x) containing r.  Closed form for
        the zero and obstacle graphs; guarded Newton for the power and
        logarithmic graphs with relative residual <= 1e-13.

    Notes
    -----
    The map is monotone and nonexpansive in r.  For the logarithmic graph
    the scalar equation is solved in transformed coordinates x = tanh(y),
    where it reads tanh(y) + 2*lam*scale*y = r; this stays well
    conditioned arbitrarily close to the domain endpoints, where a direct
    bracket in x cannot represent the root.
    """
    if not lam > 0:
        raise ValueError('lam must be positive')
    arr = _as_array(r)
    if spec.kind == 'zero':
        out = arr.copy()
    elif spec.kind == 'double_obstacle':
        out = np.clip(arr, spec.lower, spec.upper)
    elif spec.kind == 'power_odd':
        out = _resolvent_power(spec, arr, lam)
    else:
        out = np.tanh(_log_resolvent_y(spec, arr, lam))
        # keep the output strictly inside the open domain
        out = np.clip(out, np.nextafter(-1.0, 0.0), np.nextafter(1.0, 0.0))
    return _scalar_like(out, r)


def _resolvent_power(spec, arr, lam):
    # Solve x + lam*c*x^p = a for a = |r| >= 0, then restore the sign.
    # g is convex increasing on [0, inf); Newton from an upper bound of the
    # root decreases monotonically onto it.
    p, c = spec.exponent, spec.coefficient
    a = np.abs(arr)
    lc = lam * c
    x = np.minimum(a, (a / lc) ** (1.0 / p))
    tol = _REL_TOL * np.maximum(1.0, a)
    for _ in range(_MAX_ITER):
        g = x + lc * x ** p - a
        if np.all(np.abs(g) <= tol):
            break
        x = x - g / (1.0 + lc * p * x ** (p - 1))
    else:
        raise RootFindFailure('power_odd resolvent did not converge')
    return np.sign(arr) * x


def _log_resolvent_y(spec, arr, lam):
    # tanh(y) + 2*lam*s*y = a, a = |r|; concave increasing in y >= 0, so
    # Newton from y=0 (where h = -a <= 0) increases monotonically to the root.
    two_ls = 2.0 * lam * spec.scale
    a = np.abs(arr)
    y = np.zeros_like(a)
    tol = _REL_TOL * np.maximum(1.0, a)
    for _ in range(_MAX_ITER):
        t = np.tanh(y)
        h = t + two_ls * y - a
        if np.all(np.abs(h) <= tol):
            break
        y = y - h / ((1.0 - t * t) + two_ls)
    else:
        raise RootFindFailure('logarithmic resolvent did not converge')
    return np.sign(arr) * y


def yosida(spec: GraphSpec, r, lam: float):
    """Yosida approximation beta_lam(r) = (r - J_lam(r))/lam.

    Monotone, Lipschitz with constant 1/lam, and |beta_lam(r)| <= |beta°(r)|
    on D(beta).
    """
    arr = _as_array(r)
    out = (arr - resolvent(spec, arr, lam)) / lam
    return _scalar_like(out, r)


def yosida_derivative(spec: GraphSpec, r, lam: float):
    """A.e. derivative of beta_lam, used as the Newton slope.

    Equals beta'(J_lam(r)) / (1 + lam*beta'(J_lam(r))) where beta is
    differentiable; for the obstacle graph the piecewise-constant slope is
    0 inside [lower, upper] and 1/lam outside, with the value 1/lam at the
    kinks (semismooth convention).
    """
    if not lam > 0:
        raise ValueError('lam must be positive')
    arr = _as_array(r)
    if spec.kind == 'zero':
        out = np.zeros_like(arr)
    elif spec.kind == 'double_obstacle':
        out = np.where((arr >= spec.upper) | (arr <= spec.lower), 1.0 / lam, 0.0)
    elif spec.kind == 'power_odd':
        x = _resolvent_power(spec, arr, lam)
        bp = spec.coefficient * spec.exponent * x ** (spec.exponent - 1)
        out = bp / (1.0 + lam * bp)
    else:
        x = np.tanh(_log_resolvent_y(spec, arr, lam))
        # 1/beta'(x) = (1 - x^2)/(2*s); stable even when x saturates
        out = 1.0 / ((1.0 - x * x) / (2.0 * spec.scale) + lam)
    return _scalar_like(out, r)


def minimal_section(spec: GraphSpec, r):
    """Minimal section beta°(r): the element of beta(r) of least modulus.

    Raises OutOfDomain when r is not in D(beta).  For the obstacle graph
    the minimal section is 0 on the whole closed interval (0 belongs to the
    normal cone at the endpoints too).
    """
    arr = _as_array(r)
    if not np.all(spec.contains(arr)):
        raise OutOfDomain(f'argument outside D(beta) of {spec.kind}')
    if spec.kind == 'zero' or spec.kind == 'double_obstacle':
        out = np.zeros_like(arr)
    elif spec.kind == 'power_odd':
        out = spec.coefficient * arr ** spec.exponent
    else:
        out = spec.scale * (np.log1p(arr) - np.log1p(-arr))
    return _scalar_like(out, r)


def primitive(spec: GraphSpec, r):
    """Convex primitive beta_hat(r), extended-real valued.

    Nonnegative, beta_hat(0) = 0, and +inf outside the closure of the
    domain of the primitive (which may include endpoints excluded from
    D(beta): the logarithmic primitive is finite on the closed interval).
    """
    arr = _as_array(r)
    if spec.kind == 'zero':
        out = np.zeros_like(arr)
    elif spec.kind == 'power_odd':
        q = spec.exponent + 1
        out = spec.coefficient * arr ** q / q
    elif spec.kind == 'logarithmic':
        inside = np.abs(arr) <= 1.0
        ar = np.where(inside, arr, 0.0)
        val = spec.scale * (xlogy(1.0 + ar, 1.0 + ar) + xlogy(1.0 - ar, 1.0 - ar))
        out = np.where(inside, val, np.inf)
    else:
        inside = (arr >= spec.lower) & (arr <= spec.upper)
        out = np.where(inside, 0.0, np.inf)
    return _scalar_like(out, r)


def yosida_primitive(spec: GraphSpec, r, lam: float):
    """Moreau envelope beta_hat_lam(r) = |r - J_lam(r)|^2/(2 lam) + beta_hat(J_lam(r)).

    Finite for every real r and squeezed between 0 and beta_hat(r).
    """
    arr = _as_array(r)
    x = np.asarray(resolvent(spec, arr, lam))
    out = (arr - x) ** 2 / (2.0 * lam) + primitive(spec, x)
    return _scalar_like(out, r)


# ---------------------------------------------------------------------------
# growth checks


@dataclass(frozen=True)
class DominationReport:
    """Outcome of the bulk-by-boundary domination check |beta°| <= rho1*|beta_Gamma°| + c1."""
    feasible: bool
    domain_contained: bool
    rho1: float
    c1: float
    witness: float | None
    n_samples: int
    message: str = ''


@dataclass(frozen=True)
class SameGrowthReport:
    """Outcome of the two-sided growth comparison (1/M)|beta_Gamma°| - M <= |beta°| <= M(|beta_Gamma°| + 1)."""
    feasible: bool
    domains_equal: bool
    m_value: float
    witness: float | None
    n_samples: int
    message: str = ''


def _domain_contains(outer: GraphSpec, inner: GraphSpec) -> bool:
    """Structural interval check D(inner) subseteq D(outer)."""
    lo_ok = outer.domain_lower < inner.domain_lower or (
        outer.domain_lower == inner.domain_lower
        and (outer.lower_closed or not inner.lower_closed))
    hi_ok = outer.domain_upper > inner.domain_upper or (
        outer.domain_upper == inner.domain_upper
        and (outer.upper_closed or not inner.upper_closed))
    return lo_ok and hi_ok


def _extension_grid(boundary: GraphSpec, grid: np.ndarray, n: int = 64) -> np.ndarray:
    """Points beyond the sampled range (widened 50%), clipped to D(beta_Gamma)."""
    radius = float(np.max(np.abs(grid)))
    if radius == 0.0:
        radius = 1.0
    ext = np.linspace(radius, 1.5 * radius, n + 1)[1:]
    pts = np.concatenate([ext, -ext])
    lo = boundary.domain_lower if boundary.lower_closed else np.nextafter(boundary.domain_lower, 0.0)
    hi = boundary.domain_upper if boundary.upper_closed else np.nextafter(boundary.domain_upper, 0.0)
    pts = np.unique(np.clip(pts, lo, hi))
    return pts[np.abs(pts) > radius * (1.0 + 1e-12)] if radius > 0 else pts


def _abs_sections(bulk, boundary, pts):
    a = np.abs(np.asarray(minimal_section(boundary, pts)))
    b = np.abs(np.asarray(minimal_section(bulk, pts)))
    return a, b


def check_domination(bulk: GraphSpec, boundary: GraphSpec, sample_grid) -> DominationReport:
    """Sampled verification of the domination hypothesis.

    Fits (rho1, c1) by least squares of |beta°| against |beta_Gamma°| on the
    grid, lifts c1 to feasibility, and re-verifies the fitted bound on a
    50%-widened extension grid inside D(beta_Gamma); on an unbounded
    domain the first extension point breaking the bound (10% slack) is
    returned as a witness of excess growth at infinity.  When D(beta_Gamma)
    is a bounded interval the extension grid reaches the domain boundary,
    so c1 is simply lifted over it (evaluating the supremum, not
    extrapolating).  Either way the verdict is relative to the sampled
    range, not symbolic.
    """
    grid = np.asarray(sample_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptySampleGrid('domination check needs at least one sample')
    if not _domain_contains(bulk, boundary):
        return DominationReport(False, False, math.nan, math.nan, None, grid.size,
                                'D(beta_Gamma) is not contained in D(beta)')
    a, b = _abs_sections(bulk, boundary, grid)
    design = np.column_stack([a, np.ones_like(a)])
    coef, *_ = np.linalg.lstsq(design, b, rcond=None)
    rho = max(float(coef[0]), 0.0)
    c = max(float(coef[1]), 0.0)
    c += max(0.0, float(np.max(b - rho * a - c)))   # lift to feasibility on the grid
    ext = _extension_grid(boundary, grid)
    message = ''
    if ext.size:
        ae, be = _abs_sections(bulk, boundary, ext)
        bad = be > 1.1 * (rho * ae + c) + 1e-9
        if np.any(bad):
            bounded = math.isfinite(boundary.domain_lower) \
                and math.isfinite(boundary.domain_upper)
            if not bounded:
                witness = float(ext[bad][np.argmin(np.abs(ext[bad]))])
                return DominationReport(False, True, rho, c, witness, grid.size,
                                        'fitted bound fails beyond the sampled range')
            # bounded domain: the extension reaches the ends of
            # D(beta_Gamma), so take the supremum there instead
            c += float(np.max(be - rho * ae - c))
            message = 'c1 lifted over the domain ends of D(beta_Gamma)'
    return DominationReport(True, True, rho, c, None, grid.size, message)


def check_same_growth(bulk: GraphSpec, boundary: GraphSpec, sample_grid) -> SameGrowthReport:
    """Sampled verification of the same-growth hypothesis.

    Returns the smallest grid-feasible M >= 1 with
    (1/M)|beta_Gamma°| - M <= |beta°| <= M(|beta_Gamma°| + 1); both
    one-sided constraints have closed-form smallest M, so no search is
    needed.  As for the domination check, the fitted M is re-verified with
    10% slack on the widened extension grid.
    """
    grid = np.asarray(sample_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptySampleGrid('same-growth check needs at least one sample')
    domains_equal = _domain_contains(bulk, boundary) and _domain_contains(boundary, bulk)
    if not domains_equal:
        return SameGrowthReport(False, False, math.nan, None, grid.size,
                                'D(beta) and D(beta_Gamma) differ')
    a, b = _abs_sections(bulk, boundary, grid)
    m_upper = float(np.max(b / (a + 1.0)))
    m_lower = float(np.max((-b + np.sqrt(b * b + 4.0 * a)) / 2.0))
    m = max(1.0, m_upper, m_lower)
    ext = _extension_grid(boundary, grid)
    if ext.size:
        ae, be = _abs_sections(bulk, boundary, ext)
        slack_hi = 0.1 * m * (ae + 1.0) + 1e-9
        slack_lo = 0.1 * (ae / m + m) + 1e-9
        bad = (be > m * (ae + 1.0) + slack_hi) | (be < ae / m - m - slack_lo)
        if np.any(bad):
            witness = float(ext[bad][np.argmin(np.abs(ext[bad]))])
            return SameGrowthReport(False, True, m, witness, grid.size,
                                    'fitted M fails beyond the sampled range')
    return SameGrowthReport(True, True, m, None, grid.size)


# ---------------------------------------------------------------------------
# Lipschitz perturbations


@dataclass(frozen=True)
class Perturbation:
    """Globally Lipschitz perturbation pi (or pi_Gamma).

    Either ``linear`` with a fixed slope or ``tabulated`` with piecewise
    linear interpolation between sample points (constant continuation
    outside the table, which preserves the global Lipschitz constant).
    """

    kind: str
    slope: float = 0.0
    xs: tuple = ()
    ys: tuple = ()
    lipschitz_constant: float = 0.0

    def __post_init__(self):
        if self.kind not in ('linear', 'tabulated'):
            raise ValueError(f'unknown perturbation kind {self.kind!r}')
        if self.kind == 'tabulated':
            xs = np.asarray(self.xs, float)
            ys = np.asarray(self.ys, float)
            if xs.size < 2 or xs.size != ys.size:
                raise ValueError('tabulated perturbation needs >= 2 matching samples')
            if not np.all(np.diff(xs) > 0):
                raise ValueError('tabulated sample points must be strictly increasing')
            if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
                raise ValueError('tabulated samples must be finite')
        if not self.lipschitz_constant >= 0:
            raise ValueError('lipschitz_constant must be nonnegative')

    @staticmethod
    def linear(slope: float) -> 'Perturbation':
        return Perturbation('linear', slope=float(slope),
                            lipschitz_constant=abs(float(slope)))

    @staticmethod
    def tabulated(xs, ys, lipschitz_constant: float | None = None) -> 'Perturbation':
        xs = tuple(float(x) for x in xs)
        ys = tuple(float(y) for y in ys)
        slopes = np.diff(ys) / np.diff(xs)
        actual = float(np.max(np.abs(slopes))) if len(xs) > 1 else 0.0
        if lipschitz_constant is None:
            lipschitz_constant = actual
        elif lipschitz_constant < actual * (1.0 - 1e-12):
            raise ValueError('declared Lipschitz constant below the table slopes')
        return Perturbation('tabulated', xs=xs, ys=ys,
                            lipschitz_constant=float(lipschitz_constant))

    def __call__(self, r):
        arr = _as_array(r)
        if self.kind == 'linear':
            out = self.slope * arr
        else:
            out = np.interp(arr, self.xs, self.ys)
        return _scalar_like(out, r)

    def primitive(self, r):
        """pi_hat(r) = integral of pi from 0 to r (exact for both kinds)."""
        arr = _as_array(r)
        if self.kind == 'linear':
            out = 0.5 * self.slope * arr * arr
            return _scalar_like(out, r)
        out = self._antiderivative(arr) - self._antiderivative(np.zeros(()))
        return _scalar_like(out, r)

    def _antiderivative(self, arr):
        # exact antiderivative of the piecewise-linear interpolant,
        # normalized to vanish at the first knot
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        knot_int = np.concatenate([[0.0], np.cumsum(0.5 * (ys[:-1] + ys[1:]) * np.diff(xs))])
        idx = np.clip(np.searchsorted(xs, arr, side='right') - 1, 0, xs.size - 2)
        x0, x1 = xs[idx], xs[idx + 1]
        y0, y1 = ys[idx], ys[idx + 1]
        t = arr - x0
        seg = knot_int[idx] + y0 * t + 0.5 * (y1 - y0) / (x1 - x0) * t * t
        below = ys[0] * (arr - xs[0])
        above = knot_int[-1] + ys[-1] * (arr - xs[-1])
        return np.where(arr < xs[0], below, np.where(arr > xs[-1], above, seg))


def perturbation_to_json(p: Perturbation) -> dict:
    if p.kind == 'linear':
        return {'kind': 'linear', 'slope': p.slope}
    return {'kind': 'tabulated', 'xs': list(p.xs), 'ys': list(p.ys),
            'lipschitz_constant': p.lipschitz_constant}


def perturbation_from_json(d: dict) -> Perturbation:
    kind = d.get('kind')
    if kind == 'linear':
        return Perturbation.linear(d.get('slope', 0.0))
    if kind == 'tabulated':
        return Perturbation.tabulated(d['xs'], d['ys'], d.get('lipschitz_constant'))
    raise ValueError(f'unknown perturbation kind {kind!r}')
