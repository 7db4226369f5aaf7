"""Stationary problem A chi + W'(chi) = 0 under homogeneous Neumann
conditions: damped Newton solves, residual certificates in the discrete dual
norm, and the maximum-principle style range check.

Nonconvexity of W makes the stationary set large (every constant at a
critical point of W solves it, and layer profiles appear on long domains),
so solves are guess-driven and the catalog tooling simply collects distinct
solutions from a guess family.  A singular linearization is surfaced as
DegenerateJacobian: it marks a bifurcation point and hiding it would mask
exactly the degenerate regime the slow-convergence diagnostics care about.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import (DegenerateJacobian, DomainViolation, InvalidParameter,
                     NewtonDiverged)
from .grids import (BoundarySpec, Field, OperatorWorkspace, quad_weights,
                    stiffness_neumann, write_records)
from .models import evaluate


@dataclass
class SteadyState:
    chi: Field
    residual: float              # dual-norm certificate of A chi + W'(chi)
    observed_range: tuple        # (min, max) over the nodes
    confinement: tuple           # interval the range is expected to stay in
    energy: float
    newton_iters: int

    @property
    def is_constant(self):
        lo, hi = self.observed_range
        return hi - lo < 1e-10


@dataclass
class RangeReport:
    inside: bool
    interval: tuple
    worst_offender: float
    worst_distance: float


def default_confinement(model, inflate=0.01):
    """Confinement interval from the critical points of W: their convex
    hull inflated by 1% about its midpoint.  The true interval promised by
    the theory is only known to exist; this convention is a testable
    stand-in and is labeled as such in reports."""
    zeros = model.w.d1_zeros
    if not zeros:
        return None
    lo, hi = min(zeros), max(zeros)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * (1.0 + inflate)
    return (mid - half, mid + half)


def stationary_energy(chi_flat, model, grid, K=None, w=None):
    """E(v) = int( |grad v|^2/2 + W(v) ), the energy the flow minimizes."""
    if K is None:
        K = stiffness_neumann(grid)
    if w is None:
        w = quad_weights(grid)
    return 0.5 * float(chi_flat @ (K @ chi_flat)) \
        + float(np.dot(w, evaluate(model.w, 0, chi_flat)))


def residual_stationary(chi, model, grid, bc=None):
    """Dual-norm size of A chi + W'(chi).

    The stationary problem lives under Neumann conditions whatever the
    temperature boundary treatment was, so the Neumann pivot is used; the
    bc argument is accepted for interface symmetry and ignored.
    """
    ws = OperatorWorkspace(grid, BoundarySpec("dirichlet"))
    flat = chi.flat if isinstance(chi, Field) else np.asarray(chi).ravel()
    wp = evaluate(model.w, 1, flat)
    r = ws.opA.apply(flat).ravel() + wp
    return ws.vstar_neumann_norm(r)


def solve_stationary(guess, model, grid, tol=1e-10, max_iter=60,
                     damping_margin=1e-8):
    """Damped Newton for the stationary problem from a given guess.

    Which solution is found depends on the guess.  The residual is measured
    in the Neumann dual norm; fraction-to-the-boundary damping keeps the
    iterates strictly inside the domain of W.
    """
    if tol <= 0:
        raise InvalidParameter("tolerance must be positive")
    ws = OperatorWorkspace(grid, BoundarySpec("dirichlet"))
    K = ws.opA.K
    w = ws.w
    A_fd = sps.diags(1.0 / w) @ K
    chi = guess.flat.copy()
    ilo, ihi = model.w.domain

    def inside(v):
        ok = np.all(np.isfinite(v))
        if math.isfinite(ilo):
            ok = ok and np.min(v) > ilo + damping_margin
        if math.isfinite(ihi):
            ok = ok and np.max(v) < ihi - damping_margin
        return bool(ok)

    if not inside(chi):
        raise DomainViolation("guess leaves the domain of W")

    iters = 0
    for it in range(1, max_iter + 1):
        iters = it
        wp = evaluate(model.w, 1, chi)
        r = A_fd @ chi + wp
        res = ws.vstar_neumann_norm(r)
        if res <= tol:
            break
        if it == max_iter:
            raise NewtonDiverged(
                f"stationary residual {res:.3e} above {tol:.1e} after "
                f"{max_iter} iterations", residual=res)
        wpp = evaluate(model.w, 2, chi)
        jac = (A_fd + sps.diags(wpp)).tocsc()
        try:
            lu = splu(jac)
        except RuntimeError as exc:
            raise DegenerateJacobian(
                f"singular stationary linearization ({exc}); this marks a "
                "bifurcation point") from None
        delta = lu.solve(-r)
        lin_res = float(np.linalg.norm(jac @ delta + r))
        if not np.all(np.isfinite(delta)) or \
                lin_res > 1e-8 * (1.0 + float(np.linalg.norm(r))):
            raise DegenerateJacobian(
                "stationary linearization is numerically singular; this "
                "marks a bifurcation point")
        alpha = 1.0
        halvings = 0
        while halvings < 40 and not inside(chi + alpha * delta):
            alpha *= 0.5
            halvings += 1
        if not inside(chi + alpha * delta):
            raise NewtonDiverged("damping exhausted in stationary solve",
                                 residual=res)
        chi = chi + alpha * delta

    fld = Field(grid, chi.reshape(grid.shape))
    conf = default_confinement(model)
    return SteadyState(
        chi=fld, residual=float(res),
        observed_range=(float(np.min(chi)), float(np.max(chi))),
        confinement=conf if conf is not None else model.w.domain,
        energy=stationary_energy(chi, model, grid, K=K, w=w),
        newton_iters=iters)


def check_range(steady, interval=None):
    """True iff every nodal value lies inside the confinement interval."""
    lo, hi = interval if interval is not None else steady.confinement
    vals = steady.chi.flat
    below = lo - vals
    above = vals - hi
    dist = np.maximum(below, above)
    i = int(np.argmax(dist))
    return RangeReport(inside=bool(dist[i] <= 0.0), interval=(lo, hi),
                       worst_offender=float(vals[i]),
                       worst_distance=float(max(dist[i], 0.0)))


def solve_catalog(guesses, model, grid, tol=1e-10, out_dir=None,
                  dedupe_tol=1e-8):
    """Solve from each guess, keep distinct solutions, optionally write the
    snapshot-per-solution catalog plus its CSV index."""
    ws_w = quad_weights(grid)

    def h_dist(a, b):
        return math.sqrt(float(np.dot(ws_w, (a - b) ** 2)))

    found = []
    for guess in guesses:
        try:
            st = solve_stationary(guess, model, grid, tol=tol)
        except (NewtonDiverged, DegenerateJacobian):
            continue
        if all(h_dist(st.chi.flat, other.chi.flat) > dedupe_tol
               for other in found):
            found.append(st)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        lines = ["index,residual,energy,min,max,constant_flag"]
        for k, st in enumerate(found):
            write_records(os.path.join(out_dir, f"steady_{k}.pfld"),
                          [(st.chi, 0.0)])
            lines.append(
                f"{k},{st.residual:.17g},{st.energy:.17g},"
                f"{st.observed_range[0]:.17g},{st.observed_range[1]:.17g},"
                f"{int(st.is_constant)}")
        with open(os.path.join(out_dir, "steady_catalog.csv"), "w",
                  newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    return found
