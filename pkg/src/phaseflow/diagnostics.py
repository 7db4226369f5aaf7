"""Post-hoc and in-loop analysis of trajectories.

Everything here is a pure function of completed traces, fields and source
descriptions: per-step energy-inequality checking, convergence (omega-limit)
detection with an independently recomputed stationary certificate, power-law
decay fits, Lojasiewicz exponent estimation from trajectory tails, the
uniform-regularity monitors, and two-trajectory stability gaps.  Fitted
constants are estimates with their fit residuals - the underlying theory is
non-constructive about them, so nothing here asserts a literal constant.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import Stepper
from .errors import (ConfigMismatch, InsufficientDecay, InsufficientSamples,
                     InvalidParameter)
from .grids import OperatorWorkspace, quad_weights
from . import steady as steady_mod


@dataclass
class EnergyTrace:
    """Columns of a trace.csv, as parallel arrays."""

    t: np.ndarray
    energy: np.ndarray
    norm_u_V: np.ndarray
    norm_chit_H: np.ndarray
    dist_theta_H: np.ndarray
    stationary_residual: np.ndarray
    newton_iters: np.ndarray

    def __post_init__(self):
        n = self.t.size
        for name in ("energy", "norm_u_V", "norm_chit_H", "dist_theta_H",
                     "stationary_residual", "newton_iters"):
            if getattr(self, name).size != n:
                raise InvalidParameter(f"trace column {name} has wrong "
                                       "length")
        if n > 1 and not np.all(np.diff(self.t) > 0):
            raise InvalidParameter("trace times must be strictly increasing")

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return cls(*(np.asarray(data[name], dtype=float) for name in (
            "t", "energy", "norm_u_V", "norm_chit_H", "dist_theta_H",
            "stationary_residual", "newton_iters")))

    @classmethod
    def from_trajectory(cls, traj):
        c = traj.columns
        return cls(traj.times, c["energy"], c["norm_u_V"],
                   c["norm_chit_H"], c["dist_theta_H"],
                   c["stationary_residual"], c["newton_iters"])


# ----------------------------------------------------------------------
# energy inequality
# ----------------------------------------------------------------------

@dataclass
class DissipationReport:
    passed: bool
    violations: tuple          # (row index, excess) pairs
    max_excess: float          # worst E(k)-E(k-1) minus its allowance
    tol: float

    def as_dict(self):
        return {"passed": self.passed, "max_excess": self.max_excess,
                "tol": self.tol,
                "violations": [list(v) for v in self.violations]}


def check_dissipation(energies, g_dual_norms, dt, tol):
    """Per-row energy inequality E(k) - E(k-1) <= dt/2 ||g(t_k)||_*^2 + tol.

    ``dt`` is the spacing between consecutive rows; with a trace cadence of
    one row per step this is the step size and the check is exact.
    """
    energies = np.asarray(energies, dtype=float)
    g = np.asarray(g_dual_norms, dtype=float)
    diffs = np.diff(energies)
    allowance = 0.5 * dt * g[1:] ** 2 + tol
    excess = diffs - allowance
    bad = np.flatnonzero(excess > 0)
    return DissipationReport(
        passed=bad.size == 0,
        violations=tuple((int(i + 1), float(excess[i])) for i in bad),
        max_excess=float(np.max(excess)) if excess.size else -math.inf,
        tol=tol)


def phi_series(energies, g_dual_norms, row_dt, e_inf):
    """The decreasing comparison quantity of the convergence-rate argument:
    total energy above the limit plus half the remaining source budget
    (tail integral truncated at the horizon, so this is a lower bound)."""
    g2 = np.asarray(g_dual_norms, dtype=float) ** 2
    tail = np.concatenate([np.cumsum((row_dt * g2)[::-1])[::-1][1:], [0.0]])
    return np.asarray(energies, dtype=float) - e_inf + 0.5 * tail


def check_phi_monotone(energies, g_dual_norms, row_dt, e_inf, tol):
    phi = phi_series(energies, g_dual_norms, row_dt, e_inf)
    diffs = np.diff(phi)
    worst = float(np.max(diffs)) if diffs.size else 0.0
    return worst <= tol, worst


# ----------------------------------------------------------------------
# omega-limit detection
# ----------------------------------------------------------------------

@dataclass
class OmegaReport:
    status: str
    t: Optional[float]
    row: Optional[int]
    theta_limit: float
    certified_residual: Optional[float]

    @property
    def converged(self):
        return self.status == "CONVERGED"

    def as_dict(self):
        return {"status": self.status, "t": self.t, "row": self.row,
                "theta_limit": self.theta_limit,
                "certified_residual": self.certified_residual}


def detect_omega_limit(traj, model, grid, thresholds=(1e-7, 1e-6, 1e-6),
                       consecutive=3):
    """Scan a trace for simultaneous smallness of the phase velocity, the
    stationary residual and the temperature distance over consecutive rows;
    on success the stationary residual of the final order parameter is
    recomputed independently as the certificate."""
    tol1, tol2, tol3 = thresholds
    c = traj.columns
    ok = ((c["norm_chit_H"] < tol1)
          & (c["stationary_residual"] < tol2)
          & (c["dist_theta_H"] < tol3))
    ok[0] = False  # row 0 carries no backward difference
    run_len = 0
    for i in range(1, ok.size):
        run_len = run_len + 1 if ok[i] else 0
        if run_len >= consecutive:
            cert = steady_mod.residual_stationary(traj.final_state.chi,
                                                  model, grid)
            return OmegaReport("CONVERGED", float(traj.times[i]), int(i),
                               model.j.theta_inf, float(cert))
    return OmegaReport("PENDING", None, None, model.j.theta_inf, None)


# ----------------------------------------------------------------------
# decay-rate and Lojasiewicz fits
# ----------------------------------------------------------------------

@dataclass
class RateFit:
    beta: float                  # fitted power-law exponent (inf = exp decay)
    c_star: float
    t_star: float                # start of the fit window
    fit_residual: float          # rms residual of the winning fit
    n_points: int
    predicted_beta: Optional[float] = None   # zeta/(1-2 zeta) when supplied
    consistency_gap: Optional[float] = None
    exp_rate: Optional[float] = None         # fallback rate when beta = inf

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "beta", "c_star", "t_star", "fit_residual", "n_points",
            "predicted_beta", "consistency_gap", "exp_rate")}


def fit_rate(times, distances, zeta=None, min_points=10):
    """Fit the tail decay of a distance series.

    Least squares of log-distance against log-time over the final decade of
    time; a plain exponential fit competes on the same window and wins the
    sentinel beta = inf when it explains the data better.  When a
    Lojasiewicz exponent estimate is supplied, the implied power
    zeta/(1-2 zeta) and the gap to the fitted exponent are reported.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    mask = (t > 0) & (d > 0)
    if mask.sum() < min_points:
        raise InsufficientDecay("not enough positive samples")
    t, d = t[mask], d[mask]
    span = np.max(d) / np.min(d)
    if span < 10.0:
        raise InsufficientDecay(
            f"distance series spans only a factor {span:.3g}; need a decade")
    window = t >= np.max(t) / 10.0
    if window.sum() < min_points:
        window = np.zeros_like(t, dtype=bool)
        window[-min_points:] = True
    tw, dw = t[window], d[window]
    log_t, log_d = np.log(tw), np.log(dw)

    kp, bp = np.polyfit(log_t, log_d, 1)
    sse_pow = float(np.mean((log_d - (kp * log_t + bp)) ** 2))
    ke, be = np.polyfit(tw, log_d, 1)
    sse_exp = float(np.mean((log_d - (ke * tw + be)) ** 2))

    if sse_exp < sse_pow:
        fit = RateFit(beta=math.inf, c_star=float(np.exp(be)),
                      t_star=float(tw[0]), fit_residual=math.sqrt(sse_exp),
                      n_points=int(tw.size), exp_rate=float(-ke))
    else:
        fit = RateFit(beta=float(-kp), c_star=float(np.exp(bp)),
                      t_star=float(tw[0]), fit_residual=math.sqrt(sse_pow),
                      n_points=int(tw.size))
    if zeta is not None:
        predicted = zeta / (1.0 - 2.0 * zeta) if zeta < 0.5 else math.inf
        gap = abs(fit.beta - predicted) if math.isfinite(fit.beta) \
            and math.isfinite(predicted) else math.inf
        fit.predicted_beta = predicted
        fit.consistency_gap = gap
    return fit


@dataclass
class LojFit:
    zeta: float
    c_l: float
    eps_loj: float
    n_admitted: int
    fit_residual: float

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "zeta", "c_l", "eps_loj", "n_admitted", "fit_residual")}


def estimate_lojasiewicz(energies, residuals, distances, e_inf,
                         eps_loj=0.1, min_samples=10):
    """Estimate the gradient-inequality exponent along a trajectory tail.

    Fits log(residual) against log|E - E_inf| over the samples admitted by
    the neighborhood radius; the slope estimates 1 - zeta and the exponent
    is clamped into (0, 1/2].  The inequality is one-sided, so the estimate
    assumes it is tight along the tail; the fit residual is reported so the
    caller can judge that.
    """
    e = np.asarray(energies, dtype=float)
    r = np.asarray(residuals, dtype=float)
    d = np.asarray(distances, dtype=float)
    de = np.abs(e - e_inf)
    admit = (d <= eps_loj) & (de > 1e-13) & (r > 0)
    if admit.sum() < min_samples:
        raise InsufficientSamples(
            f"{int(admit.sum())} admitted samples, need {min_samples}")
    x = np.log(de[admit])
    y = np.log(r[admit])
    slope, intercept = np.polyfit(x, y, 1)
    zeta = float(np.clip(1.0 - slope, 1e-6, 0.5))
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return LojFit(zeta=zeta, c_l=float(np.exp(-intercept)),
                  eps_loj=eps_loj, n_admitted=int(admit.sum()),
                  fit_residual=rms)


def chi_distance_series(traj, chi_inf):
    """||chi(t) - chi_inf||_H over the kept states of a trajectory."""
    if not traj.states:
        raise InvalidParameter("trajectory kept no states; rerun with "
                               "keep_states enabled")
    w = quad_weights(traj.grid)
    ref = chi_inf.flat
    return np.array([math.sqrt(float(np.dot(w, (chi.flat - ref) ** 2)))
                     for _, _, chi in traj.states])


def chi_admission_series(traj, chi_inf):
    """||chi(t) - chi_inf|| in the V-and-sup sense used to admit samples
    into the Lojasiewicz fit (the max of the two norms)."""
    if not traj.states:
        raise InvalidParameter("trajectory kept no states")
    ws = OperatorWorkspace(traj.grid, traj.bc)
    ref = chi_inf.flat
    out = []
    for _, _, chi in traj.states:
        diff = chi.flat - ref
        out.append(max(ws.v_norm(diff), ws.c0_norm(diff)))
    return np.array(out)


def stationary_energy_series(traj, model):
    """E(chi(t)) (gradient plus well terms only) over kept states."""
    if not traj.states:
        raise InvalidParameter("trajectory kept no states")
    return np.array([steady_mod.stationary_energy(chi.flat, model,
                                                  traj.grid)
                     for _, _, chi in traj.states])


def estimate_lojasiewicz_trajectory(traj, chi_inf, model, eps_loj=0.1,
                                    min_samples=10):
    """Exponent estimate along a finished run against a reference
    stationary state; the run must have kept its states at trace cadence
    (the residual column then lines up with the state list)."""
    if len(traj.states) != traj.times.size:
        raise InvalidParameter("states were not kept at trace cadence")
    energies = stationary_energy_series(traj, model)
    e_inf = steady_mod.stationary_energy(chi_inf.flat, model, traj.grid)
    distances = chi_admission_series(traj, chi_inf)
    return estimate_lojasiewicz(energies,
                                traj.columns["stationary_residual"],
                                distances, e_inf, eps_loj=eps_loj,
                                min_samples=min_samples)


def fit_rate_trajectory(traj, chi_inf, zeta=None, min_points=10):
    """Decay fit of ||chi(t) - chi_inf||_H over the kept states."""
    return fit_rate(traj.times, chi_distance_series(traj, chi_inf),
                    zeta=zeta, min_points=min_points)


# ----------------------------------------------------------------------
# uniform-regularity monitors
# ----------------------------------------------------------------------

@dataclass
class MonitorReport:
    s: float
    sup_thetat_window_H: float   # sup_t>=s ||theta_t||_{L2(t,t+1;H)}
    sup_theta_V: float           # sup_t>=s of the heat-space norm of theta
    sup_u_V: float
    sup_chit_H: float
    sup_chi_H2: float            # discrete H2 surrogate ||A chi|| + ||chi||_V
    sup_wprime_H: float
    thetat_l2_tail: Optional[float]   # ||theta_t||_{L2(s,inf;H)} slot
    trend_flags: tuple
    unbounded: bool

    def as_dict(self):
        d = {k: getattr(self, k) for k in (
            "s", "sup_thetat_window_H", "sup_theta_V", "sup_u_V",
            "sup_chit_H", "sup_chi_H2", "sup_wprime_H", "thetat_l2_tail",
            "unbounded")}
        d["trend_flags"] = list(self.trend_flags)
        return d

    def finite(self):
        vals = [self.sup_thetat_window_H, self.sup_theta_V, self.sup_u_V,
                self.sup_chit_H, self.sup_chi_H2, self.sup_wprime_H]
        return all(math.isfinite(v) for v in vals)


def _window_series(times, s, reducer):
    """Reduce a row series over unit windows [s+k, s+k+1); the reducer is
    handed the row slice of each window."""
    out = []
    k = 0
    while s + k + 1.0 <= times[-1] + 1e-12:
        lo = np.searchsorted(times, s + k - 1e-12)
        hi = np.searchsorted(times, s + k + 1.0 - 1e-12)
        if hi > lo:
            out.append(reducer(slice(lo, hi)))
        k += 1
    return np.asarray(out)


def _growing_trend(window_values, per_window=0.10, span=10):
    """True when the last ``span`` windows increase strictly and compound
    to more than ``per_window`` growth per window."""
    if window_values.size < span:
        return False
    tail = window_values[-span:]
    if not np.all(np.diff(tail) > 0):
        return False
    if tail[0] <= 0:
        return True
    return bool(tail[-1] / tail[0] > (1.0 + per_window) ** (span - 1))


def monitor_bounds(traj, s, q_tag=None):
    """Windowed uniform norms of a run from time s on, with a growth flag.

    Reports the six regularity monitors (temperature velocity per unit
    window, temperature and flux in the heat-space norm, phase velocity,
    the discrete second-order norm of the phase, and the well derivative)
    and, when the source declares square-integrable time derivative
    (q_tag <= 2), the global-in-time L2 slot of the temperature velocity.
    """
    times = traj.times
    if times[-1] < s + 2.0 - 1e-12:
        raise InvalidParameter("trace must cover [0, s+2] for monitors")
    mask = times >= s - 1e-12
    thetat = traj.aux["norm_thetat_H"]
    dts = np.diff(times, prepend=times[0])

    def window_l2(sl):
        return math.sqrt(float(np.sum(dts[sl] * thetat[sl] ** 2)))

    quantities = {
        "thetat_window_H": _window_series(times, s, window_l2),
        "theta_V": _window_series(
            times, s,
            lambda sl: float(np.max(traj.aux["norm_theta_V"][sl]))),
        "u_V": _window_series(
            times, s,
            lambda sl: float(np.max(traj.columns["norm_u_V"][sl]))),
        "chit_H": _window_series(
            times, s,
            lambda sl: float(np.max(traj.columns["norm_chit_H"][sl]))),
        "chi_H2": _window_series(
            times, s,
            lambda sl: float(np.max(traj.aux["norm_chi_H2"][sl]))),
        "wprime_H": _window_series(
            times, s,
            lambda sl: float(np.max(traj.aux["norm_wprime_H"][sl]))),
    }
    flags = tuple(name for name, series in quantities.items()
                  if _growing_trend(series))

    tail = None
    if q_tag is not None and q_tag <= 2.0:
        tail = math.sqrt(float(np.sum((dts * thetat ** 2)[mask])))

    return MonitorReport(
        s=s,
        sup_thetat_window_H=float(np.max(quantities["thetat_window_H"])),
        sup_theta_V=float(np.max(traj.aux["norm_theta_V"][mask])),
        sup_u_V=float(np.max(traj.columns["norm_u_V"][mask])),
        sup_chit_H=float(np.max(traj.columns["norm_chit_H"][mask])),
        sup_chi_H2=float(np.max(traj.aux["norm_chi_H2"][mask])),
        sup_wprime_H=float(np.max(traj.aux["norm_wprime_H"][mask])),
        thetat_l2_tail=tail,
        trend_flags=flags,
        unbounded=bool(flags))


# ----------------------------------------------------------------------
# two-trajectory stability
# ----------------------------------------------------------------------

def stability_gap(traj_a, traj_b):
    """Running sup of ||theta_a - theta_b||_H + ||chi_a - chi_b||_H per row.

    Both runs must share grid, step size and horizon, and must have kept
    their states at the same cadence.
    """
    ga, gb = traj_a.grid, traj_b.grid
    if ga.nodes != gb.nodes or ga.extents != gb.extents:
        raise ConfigMismatch("different grids")
    if traj_a.dt != traj_b.dt or not np.array_equal(traj_a.times,
                                                    traj_b.times):
        raise ConfigMismatch("different step size or horizon")
    if len(traj_a.states) != len(traj_b.states) or not traj_a.states:
        raise ConfigMismatch("states not kept at matching cadence")
    w = quad_weights(ga)

    def h(a, b):
        return math.sqrt(float(np.dot(w, (a - b) ** 2)))

    gaps = []
    running = 0.0
    for (_, tha, cha), (_, thb, chb) in zip(traj_a.states, traj_b.states):
        running = max(running, h(tha.flat, thb.flat) + h(cha.flat, chb.flat))
        gaps.append(running)
    return np.asarray(gaps)


# ----------------------------------------------------------------------
# source reports
# ----------------------------------------------------------------------

@dataclass
class SourceReport:
    tail_statistic: Optional[float]   # sup_t t^(1+delta) * remaining budget
    tail_finite: bool
    delta_src: Optional[float]
    windowed_gt_sup: Optional[float]  # sup_t ||g_t||_{Lp(t,t+1; dual)}
    p_tag: float

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "tail_statistic", "tail_finite", "delta_src",
            "windowed_gt_sup", "p_tag")}


def tail_statistic(times, g_dual_norms, delta):
    """sup over rows of t^(1+delta) * int_t^horizon ||g||_*^2 (right-point
    quadrature on the row grid)."""
    t = np.asarray(times, dtype=float)
    g2 = np.asarray(g_dual_norms, dtype=float) ** 2
    dts = np.diff(t)
    contrib = dts * g2[1:]
    tail = np.concatenate([np.cumsum(contrib[::-1])[::-1], [0.0]])
    stat = np.max(np.where(t > 0, t, 0.0) ** (1.0 + delta) * tail)
    return float(stat)


def source_report(traj, model, grid, bc, source):
    """Numerical checks of the declared source integrability tags."""
    stepper = Stepper(model, grid, bc, source)
    times = traj.times
    stat = None
    finite = True
    if source.delta_src is not None:
        stat = tail_statistic(times, traj.g_dual, source.delta_src)
        finite = math.isfinite(stat)

    windowed = None
    p = source.p_tag
    if not source.is_zero or bc.kind == "robin":
        eps = 1e-6
        gt = np.array([
            stepper.ws.dual_norm_weak(
                (stepper.g_density(t + eps) - stepper.g_density(max(t - eps,
                                                                    0.0)))
                * stepper.ws.w / (eps + min(eps, t)))
            for t in times])
        dts = np.diff(times, prepend=times[0])

        def reducer(sl):
            if math.isinf(p):
                return float(np.max(gt[sl]))
            return float(np.sum(dts[sl] * gt[sl] ** p) ** (1.0 / p))

        series = _window_series(times, 0.0, reducer)
        if series.size:
            windowed = float(np.max(series))
    return SourceReport(tail_statistic=stat, tail_finite=finite,
                        delta_src=source.delta_src,
                        windowed_gt_sup=windowed, p_tag=p)
