"""Constitutive model library: heat-flux laws j, configuration potentials W,
latent heats lam, structural-hypothesis validation, and Moreau smoothing.

A model is the triple (j, W, lam).  j is uniformly convex with its minimum
normalized to zero at the equilibrium temperature; W is a possibly singular
double well, nonconvex at most up to a quadratic (W'' >= -kappa); lam has
bounded curvature.  Built-in laws carry integer codes so the solver can run
them through the compiled kernels; everything here also works for custom
callables (which then take the numpy lane).

All constants of the built-ins are derived from the closed forms and recorded
where they are defined; none are fitted.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import DomainViolation, InvalidParameter, UnknownModel

_INF = float("inf")

#: cap on the measured ratio |j''| / (1 + |j'|^alpha) for the growth check
GROWTH_RATIO_CAP = 1e6


def _law_callables(code, params):
    value = lambda r: kernels.law_eval(code, params, r, 0)
    d1 = lambda r: kernels.law_eval(code, params, r, 1)
    d2 = lambda r: kernels.law_eval(code, params, r, 2)
    return value, d1, d2


@dataclass(frozen=True)
class ConvexPotential:
    """Heat-flux law j: convex, nonnegative, minimum 0 at theta_inf."""

    name: str
    domain: tuple  # open interval J
    value: Callable
    d1: Callable
    d2: Callable
    sigma: float                 # convexity modulus, j'' >= sigma claimed
    theta_inf: float             # j'(theta_inf) = 0
    alpha: Optional[float] = None  # growth exponent for |j''| <= c(1+|j'|^a)
    tau_c: Optional[float] = None  # singularity offset of logarithmic laws
    law: Optional[tuple] = None    # (kernel code, params) for built-ins
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NonconvexPotential:
    """Configuration potential W: nonnegative, W'' >= -kappa, coercive tails."""

    name: str
    domain: tuple   # open interval I containing 0
    core: tuple     # open bounded I0, closure inside I, containing 0
    value: Callable
    d1: Callable
    d2: Callable
    kappa: float    # semiconvexity constant
    mu: float       # outer coercivity: W'(r)/r >= mu outside the core
    analytic_on_core: bool = False
    d1_zeros: Optional[tuple] = None  # known critical points, for range checks
    law: Optional[tuple] = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LatentHeat:
    """Latent heat lam with |lam''| bounded by curvature_bound."""

    name: str
    value: Callable
    d1: Callable
    d2: Callable
    curvature_bound: float
    domain: tuple = (-_INF, _INF)
    law: Optional[tuple] = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelSpec:
    """The full model (j, W, lam); both relaxation constants are fixed at 1."""

    j: ConvexPotential
    w: NonconvexPotential
    lam: LatentHeat
    epsilon: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if self.epsilon != 1.0 or self.delta != 1.0:
            raise InvalidParameter("relaxation constants are fixed at 1")

    @property
    def has_law_codes(self):
        return (self.j.law is not None and self.w.law is not None
                and self.lam.law is not None)

    def kernel(self, backend):
        """ConstitutiveKernel for this model, or None for custom laws."""
        if not self.has_law_codes:
            return None
        return kernels.ConstitutiveKernel(*self.j.law, *self.w.law,
                                          *self.lam.law, backend=backend)


def evaluate(potential, order, r):
    """Uniform accessor for a potential and its first two derivatives.

    order 0/1/2 selects value / first / second derivative.  Scalar input
    returns a float; array input returns an array.  Raises DomainViolation
    if any point is outside the open domain.
    """
    if order not in (0, 1, 2):
        raise InvalidParameter(f"order must be 0, 1 or 2, got {order}")
    arr = np.asarray(r, dtype=float)
    lo, hi = potential.domain
    if arr.size and not (np.all(arr > lo) and np.all(arr < hi)):
        bad = arr[(arr <= lo) | (arr >= hi)].flat[0]
        raise DomainViolation(
            f"{potential.name}: argument {bad} outside open domain "
            f"({lo}, {hi})")
    fn = (potential.value, potential.d1, potential.d2)[order]
    out = fn(arr)
    return float(out) if np.isscalar(r) or np.ndim(r) == 0 else out


#: switching tolerance of the public divided difference (its documented
#: contract); the stepping kernels use the coarser, noise-balanced
#: kernels.SECANT_RTOL instead
DIVIDED_DIFFERENCE_RTOL = 1e-12


def divided_difference_lambda(lam, a, b):
    """Exact secant (lam(b) - lam(a)) / (b - a) with the analytic limit.

    Below the relative switching tolerance the secant is replaced by
    lam'((a+b)/2).  Multiplied by (b - a) the secant reproduces
    lam(b) - lam(a) identically, which is what makes the discrete energy
    cross terms of the coupled stepper cancel.
    """
    a = float(a)
    b = float(b)
    if abs(b - a) > DIVIDED_DIFFERENCE_RTOL * (1.0 + abs(a) + abs(b)):
        return (float(lam.value(np.float64(b)))
                - float(lam.value(np.float64(a)))) / (b - a)
    return float(lam.d1(np.float64(0.5 * (a + b))))


# ----------------------------------------------------------------------
# hypothesis validation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    worst_point: Optional[float]
    worst_value: Optional[float]
    threshold: Optional[float]
    severity: str = "required"   # or "warning"
    note: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": self.passed,
                "worst_point": self.worst_point,
                "worst_value": self.worst_value,
                "threshold": self.threshold, "severity": self.severity,
                "note": self.note}


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    suggestions: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks if c.severity == "required")

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"passed": self.passed,
                "checks": [c.as_dict() for c in self.checks],
                "suggestions": list(self.suggestions)}

    def summary(self):
        lines = []
        for c in self.checks:
            tag = "pass" if c.passed else (
                "WARN" if c.severity == "warning" else "FAIL")
            where = "" if c.worst_point is None else (
                f"  worst at r={c.worst_point:.6g} "
                f"(value {c.worst_value:.6g}, threshold {c.threshold:.6g})")
            lines.append(f"[{tag}] {c.name}{where}")
        lines.extend(f"suggestion: {s}" for s in self.suggestions)
        return "\n".join(lines)


def _sample_interval(lo, hi, open_lo, open_hi, count):
    """Deterministic uniform grid, inset away from open endpoints."""
    span = hi - lo
    inset = 1e-6 * span
    a = lo + inset if open_lo else lo
    b = hi - inset if open_hi else hi
    return np.linspace(a, b, count)


def _truncated_domain(domain, center, half_width=50.0):
    lo, hi = domain
    tlo = max(lo, center - half_width)
    thi = min(hi, center + half_width)
    return tlo, thi, tlo == lo, thi == hi  # whether the open wall was hit


def validate_hypotheses(spec, sample_count=1000):
    """Sample every structural hypothesis of the model on deterministic grids.

    The hypotheses are stated almost everywhere; here they are checked on
    uniform grids of at least ``sample_count`` points over the domains
    truncated to a +-50 window around the relevant center.  Failures are
    reported as data with the worst witness point, never raised.
    """
    if sample_count < 100:
        raise InvalidParameter("sample_count must be at least 100")
    checks = []
    suggestions = []

    j, w, lam = spec.j, spec.w, spec.lam

    # heat-flux law: strict uniform convexity
    tlo, thi, olo, ohi = _truncated_domain(j.domain, j.theta_inf)
    rj = _sample_interval(tlo, thi, olo, ohi, sample_count)
    jpp = evaluate(j, 2, rj)
    i = int(np.argmin(jpp))
    checks.append(HypothesisCheck(
        "flux_strict_convexity", bool(jpp[i] >= j.sigma - 1e-12),
        float(rj[i]), float(jpp[i]), j.sigma,
        note="second derivative of the heat-flux law against its declared "
             "convexity modulus"))
    if not checks[-1].passed and "penrose_fife" in j.name:
        suggestions.append(
            f"heat-flux law '{j.name}' loses uniform convexity at large "
            "temperatures (its second derivative decays to zero); combine "
            "it with the quadratic law, i.e. use the built-in 'mixed_j'")

    # heat-flux law: nonnegative with minimum value 0 at theta_inf
    jv = evaluate(j, 0, rj)
    i = int(np.argmin(jv))
    j_at_min = abs(evaluate(j, 0, j.theta_inf))
    jp_at_min = abs(evaluate(j, 1, j.theta_inf))
    ok = jv[i] >= -1e-12 and j_at_min <= 1e-14 and jp_at_min <= 1e-12
    checks.append(HypothesisCheck(
        "flux_minimum_normalized", bool(ok), float(rj[i]), float(jv[i]), 0.0,
        note=f"j >= 0, j(theta_inf)={j_at_min:.3e}, "
             f"|j'(theta_inf)|={jp_at_min:.3e}"))

    # optional growth condition on j'' against powers of j'
    if j.alpha is not None:
        ratio = np.abs(jpp) / (1.0 + np.abs(evaluate(j, 1, rj)) ** j.alpha)
        i = int(np.argmax(ratio))
        checks.append(HypothesisCheck(
            "flux_growth_ratio", bool(ratio[i] <= GROWTH_RATIO_CAP),
            float(rj[i]), float(ratio[i]), GROWTH_RATIO_CAP,
            note=f"measured constant of |j''| <= c (1 + |j'|^{j.alpha}); "
                 "the cap is a sanity bound, the constant itself is data"))

    # configuration potential: nonnegative, semiconvex
    tlo, thi, olo, ohi = _truncated_domain(w.domain, 0.0)
    rw = _sample_interval(tlo, thi, olo, ohi, sample_count)
    wv = evaluate(w, 0, rw)
    wpp = evaluate(w, 2, rw)
    i = int(np.argmin(wv))
    k = int(np.argmin(wpp))
    checks.append(HypothesisCheck(
        "well_nonnegative", bool(wv[i] >= -1e-12), float(rw[i]),
        float(wv[i]), 0.0))
    checks.append(HypothesisCheck(
        "well_semiconvexity", bool(wpp[k] >= -w.kappa - 1e-12), float(rw[k]),
        float(wpp[k]), -w.kappa,
        note="W'' against -kappa"))

    # core interval structure
    c_lo, c_hi = w.core
    structural = (w.domain[0] < c_lo < 0.0 < c_hi < w.domain[1])
    checks.append(HypothesisCheck(
        "core_interval_structure", bool(structural), None, None, None,
        note="core interval bounded, contains 0, closure inside the domain"))

    # outer coercivity W'(r)/r >= mu outside the core; for smoothed
    # potentials this constant is a sampled target, not a theorem, so it
    # only warns (see the smoothing notes in `regularize`).
    severity = "warning" if w.meta.get("smoothed") else "required"
    tails = []
    if tlo < c_lo:
        tails.append(_sample_interval(tlo, c_lo, olo, True, sample_count // 2))
    if c_hi < thi:
        tails.append(_sample_interval(c_hi, thi, True, ohi, sample_count // 2))
    if tails:
        rt = np.concatenate(tails)
        ratio = evaluate(w, 1, rt) / rt
        i = int(np.argmin(ratio))
        checks.append(HypothesisCheck(
            "well_outer_coercivity", bool(ratio[i] >= w.mu - 1e-12),
            float(rt[i]), float(ratio[i]), w.mu, severity=severity,
            note="W'(r)/r outside the core interval"))

    # latent heat curvature bound on a fixed compact window
    rl = np.linspace(-50.0, 50.0, sample_count)
    lpp = np.abs(evaluate(lam, 2, rl))
    i = int(np.argmax(lpp))
    checks.append(HypothesisCheck(
        "latent_heat_curvature", bool(lpp[i] <= lam.curvature_bound + 1e-12),
        float(rl[i]), float(lpp[i]), lam.curvature_bound))

    return ValidationReport(tuple(checks), tuple(suggestions))


# ----------------------------------------------------------------------
# Moreau smoothing
# ----------------------------------------------------------------------

def _prox(d1, domain, rho, r, wall_gap=1e-13):
    """argmin_s f(s) + (s-r)^2/(2 rho) for convex f, via the monotone
    optimality equation s + rho f'(s) = r (bisection plus Newton polish).

    Finite domain walls where f' stays bounded act as clamps, which realizes
    the closed (lower semicontinuous) extension of f.
    """
    lo, hi = domain

    def psi(s):
        return s + rho * float(d1(np.float64(s))) - r

    # bracket
    if math.isfinite(lo):
        a = lo + wall_gap * (1.0 + abs(lo))
        if psi(a) >= 0.0:
            return a
    else:
        a = min(r, 0.0) - 1.0
        step = 1.0
        while psi(a) > 0.0:
            step *= 2.0
            a -= step
            if step > 1e12:
                raise InvalidParameter("proximal bracketing failed (left)")
    if math.isfinite(hi):
        b = hi - wall_gap * (1.0 + abs(hi))
        if psi(b) <= 0.0:
            return b
    else:
        b = max(r, 0.0) + 1.0
        step = 1.0
        while psi(b) < 0.0:
            step *= 2.0
            b += step
            if step > 1e12:
                raise InvalidParameter("proximal bracketing failed (right)")

    for _ in range(90):
        m = 0.5 * (a + b)
        if psi(m) < 0.0:
            a = m
        else:
            b = m
        if b - a <= 1e-15 * (1.0 + abs(a) + abs(b)):
            break
    return 0.5 * (a + b)


def _vectorize_scalar(fn):
    def wrapped(r):
        arr = np.asarray(r, dtype=float)
        out = np.empty(arr.shape)
        flat_in = arr.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.size):
            flat_out[i] = fn(flat_in[i])
        return out if arr.ndim else float(flat_out[0])
    return wrapped


def _moreau_parts(value, d1, d2, domain, rho):
    """Value/first/second derivative of the Moreau envelope of a convex f."""
    lo, hi = domain

    def near_wall(s):
        gap = 2e-13
        return ((math.isfinite(lo) and s - lo <= gap * (1.0 + abs(lo)))
                or (math.isfinite(hi) and hi - s <= gap * (1.0 + abs(hi))))

    def env_value(r):
        s = _prox(d1, domain, rho, r)
        return float(value(np.float64(s))) + (s - r) ** 2 / (2.0 * rho)

    def env_d1(r):
        s = _prox(d1, domain, rho, r)
        return (r - s) / rho

    def env_d2(r):
        s = _prox(d1, domain, rho, r)
        if near_wall(s):
            return 1.0 / rho
        f2 = float(d2(np.float64(s)))
        return f2 / (1.0 + rho * f2)

    return (_vectorize_scalar(env_value), _vectorize_scalar(env_d1),
            _vectorize_scalar(env_d2))


def regularize(potential, n):
    """Smooth surrogate of a potential, finite on all of R.

    For a heat-flux law j, half of the declared convexity modulus is kept as
    an explicit quadratic and the remainder is replaced by its Moreau
    envelope with parameter 1/n:

        j_n(r) = (sigma/4) r^2 + env_{1/n}[ j - (sigma/4) Id^2 ](r),

    which gives j_n'' >= sigma/2 for every n >= 1, j_n <= j on the original
    domain, and pointwise convergence as n grows.  For a configuration
    potential the same envelope is applied to the convex shift
    W + (kappa/2) Id^2 and the shift is subtracted again, so W_n'' >= -kappa
    for every n >= 1; the halved outer-coercivity constant is a sampled
    target (checked, with warnings, by validate_hypotheses), not a theorem.

    Both guarantees hold from n = 1 on, so the threshold index recorded in
    the metadata is 1.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidParameter(f"smoothing index must be an integer >= 1, "
                               f"got {n!r}")
    rho = 1.0 / float(n)

    if isinstance(potential, ConvexPotential):
        sig = potential.sigma
        shift_value = lambda s: potential.value(s) - 0.25 * sig * s * s
        shift_d1 = lambda s: potential.d1(s) - 0.5 * sig * s
        shift_d2 = lambda s: potential.d2(s) - 0.5 * sig
        ev, e1, e2 = _moreau_parts(shift_value, shift_d1, shift_d2,
                                   potential.domain, rho)
        value = lambda r: 0.25 * sig * np.asarray(r) ** 2 + ev(r)
        d1 = lambda r: 0.5 * sig * np.asarray(r) + e1(r)
        d2 = lambda r: 0.5 * sig + np.asarray(e2(r))

        # the minimum moves unless theta_inf = 0; relocate it
        g = lambda t: float(d1(np.float64(t)))
        t0 = potential.theta_inf
        width = 1.0
        while g(t0 - width) > 0 or g(t0 + width) < 0:
            width *= 2.0
        theta_inf = brentq(g, t0 - width, t0 + width, xtol=1e-14)
        return ConvexPotential(
            name=f"{potential.name}~smoothed(n={n})",
            domain=(-_INF, _INF), value=value, d1=d1, d2=d2,
            sigma=0.5 * sig, theta_inf=theta_inf, alpha=None, tau_c=None,
            law=None,
            meta={"smoothed": True, "n": int(n), "rho": rho,
                  "threshold_index": 1, "parent": potential.name})

    if isinstance(potential, NonconvexPotential):
        kap = potential.kappa
        cvx_value = lambda s: potential.value(s) + 0.5 * kap * s * s
        cvx_d1 = lambda s: potential.d1(s) + kap * s
        cvx_d2 = lambda s: potential.d2(s) + kap
        ev, e1, e2 = _moreau_parts(cvx_value, cvx_d1, cvx_d2,
                                   potential.domain, rho)
        value = lambda r: ev(r) - 0.5 * kap * np.asarray(r) ** 2
        d1 = lambda r: e1(r) - kap * np.asarray(r)
        d2 = lambda r: np.asarray(e2(r)) - kap
        return NonconvexPotential(
            name=f"{potential.name}~smoothed(n={n})",
            domain=(-_INF, _INF), core=potential.core,
            value=value, d1=d1, d2=d2, kappa=kap, mu=0.5 * potential.mu,
            analytic_on_core=False, d1_zeros=None, law=None,
            meta={"smoothed": True, "n": int(n), "rho": rho,
                  "threshold_index": 1, "parent": potential.name})

    raise InvalidParameter("only heat-flux laws and configuration "
                           "potentials can be smoothed")


# ----------------------------------------------------------------------
# built-in laws
# ----------------------------------------------------------------------

def _builtin_caginalp_j():
    value, d1, d2 = _law_callables(kernels.J_CAGINALP, ())
    # j'' = 1 exactly, minimum at 0, ratio |j''|/(1+|j'|^0) = 1/2... bounded
    return ConvexPotential("caginalp_j", (-_INF, _INF), value, d1, d2,
                           sigma=1.0, theta_inf=0.0, alpha=0.0, tau_c=None,
                           law=(kernels.J_CAGINALP, ()))


def _builtin_penrose_fife_j(tau_c=1.0, sigma=0.5):
    if tau_c <= 0:
        raise InvalidParameter("tau_c must be positive")
    params = (float(tau_c),)
    value, d1, d2 = _law_callables(kernels.J_PENROSE, params)
    # j'' = (r+tau_c)^-2 decays to zero, so no positive modulus actually
    # holds on the unbounded domain: the declared sigma is a nominal claim
    # that validate_hypotheses is expected to refute.  Near the singular
    # wall j'' ~ (r+tau_c)^-2 and |j'| ~ (r+tau_c)^-1, hence alpha = 2.
    return ConvexPotential("penrose_fife_j", (-float(tau_c), _INF),
                           value, d1, d2, sigma=float(sigma), theta_inf=0.0,
                           alpha=2.0, tau_c=float(tau_c),
                           law=(kernels.J_PENROSE, params))


def _builtin_mixed_j(tau_c=1.0):
    if tau_c <= 0:
        raise InvalidParameter("tau_c must be positive")
    params = (float(tau_c),)
    value, d1, d2 = _law_callables(kernels.J_MIXED, params)
    # j'' = 1 + (r+tau_c)^-2 >= 1, minimum at 0 since both parts vanish
    # there; near the wall j''/(1+|j'|^2) -> 1, so alpha = 2.
    return ConvexPotential("mixed_j", (-float(tau_c), _INF), value, d1, d2,
                           sigma=1.0, theta_inf=0.0, alpha=2.0,
                           tau_c=float(tau_c),
                           law=(kernels.J_MIXED, params))


def _builtin_quartic_w():
    value, d1, d2 = _law_callables(kernels.W_QUARTIC, ())
    # W'' = 3r^2 - 1 >= -1 -> kappa = 1; W'(r)/r = r^2 - 1 >= 3 for |r| >= 2
    return NonconvexPotential("quartic_W", (-_INF, _INF), (-2.0, 2.0),
                              value, d1, d2, kappa=1.0, mu=3.0,
                              analytic_on_core=True,
                              d1_zeros=(-1.0, 0.0, 1.0),
                              law=(kernels.W_QUARTIC, ()))


def _builtin_logarithmic_w(theta1=1.0, theta_c=2.0):
    if not (0 < theta1 < theta_c):
        raise InvalidParameter("logarithmic well needs 0 < theta1 < theta_c")
    t1, tc = float(theta1), float(theta_c)
    # minima +-rstar solve t1 * artanh(r) = tc * r
    f = lambda r: t1 * np.arctanh(r) - tc * r
    rstar = brentq(f, 1e-3, 1.0 - 1e-12, xtol=1e-15)
    w0_min = (0.5 * t1 * ((1 + rstar) * np.log1p(rstar)
                          + (1 - rstar) * np.log1p(-rstar))
              - 0.5 * tc * rstar * rstar)
    params = (t1, tc, -w0_min)  # additive shift puts the minima at 0
    value, d1, d2 = _law_callables(kernels.W_LOG, params)
    core = (-0.5 * (1.0 + rstar), 0.5 * (1.0 + rstar))
    # W'(r)/r = t1 artanh(r)/r - tc is increasing in |r|, so its infimum
    # over the tails is attained at the core edge
    mu = t1 * math.atanh(core[1]) / core[1] - tc
    return NonconvexPotential("logarithmic_W", (-1.0, 1.0), core,
                              value, d1, d2, kappa=tc - t1, mu=mu,
                              analytic_on_core=True,
                              d1_zeros=(-rstar, 0.0, rstar),
                              law=(kernels.W_LOG, params),
                              meta={"rstar": rstar})


def _builtin_linear_lambda(ell=1.0):
    params = (float(ell),)
    value, d1, d2 = _law_callables(kernels.LAM_LINEAR, params)
    # lam'' = 0, any positive bound works; 1 is recorded for definiteness
    return LatentHeat("linear_lambda", value, d1, d2, curvature_bound=1.0,
                      law=(kernels.LAM_LINEAR, params))


def _builtin_tanh_lambda(scale=1.0, width=1.0):
    if width <= 0:
        raise InvalidParameter("width must be positive")
    params = (float(scale), float(width))
    value, d1, d2 = _law_callables(kernels.LAM_TANH, params)
    # |lam''| = (2|scale|/width^2) |t|(1-t^2), t=tanh, maximized at
    # t = 1/sqrt(3): bound = 4|scale| / (3 sqrt(3) width^2)
    bound = 4.0 * abs(scale) / (3.0 * math.sqrt(3.0) * width * width)
    return LatentHeat("tanh_lambda", value, d1, d2, curvature_bound=bound,
                      law=(kernels.LAM_TANH, params))


_BUILTINS = {
    "caginalp_j": _builtin_caginalp_j,
    "penrose_fife_j": _builtin_penrose_fife_j,
    "mixed_j": _builtin_mixed_j,
    "quartic_W": _builtin_quartic_w,
    "logarithmic_W": _builtin_logarithmic_w,
    "linear_lambda": _builtin_linear_lambda,
    "tanh_lambda": _builtin_tanh_lambda,
}


def builtin(name, **params):
    """Construct a built-in law by name with its parameters."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownModel(
            f"unknown built-in '{name}'; available: "
            + ", ".join(sorted(_BUILTINS))) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise InvalidParameter(f"bad parameters for '{name}': {exc}") from None


def builtin_names():
    return tuple(sorted(_BUILTINS))
