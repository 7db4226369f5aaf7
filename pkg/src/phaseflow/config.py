"""Declarative experiment configuration.

The file format is line-oriented ``section.key = value`` with ``#`` comments,
for example::

    model.j = caginalp_j
    model.w = quartic_W
    model.lambda = linear_lambda
    grid.dimension = 1
    grid.extents = 1.0
    grid.nodes = 128
    bc.kind = dirichlet
    initial.chi = cosine
    initial.chi.amplitude = 0.1
    run.dt = 1e-3
    run.t_end = 2.0

Parsing is split from validation: ``parse_raw`` only reads the key/value
tree (ParseError on malformed lines), ``build_config`` resolves it into live
objects and reports every constraint violation at once (ValidationError).
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SourceSpec, State, TrajectoryConfig, discrete_energy
from .errors import (InvalidParameter, ParseError, UnknownModel,
                     ValidationError)
from .grids import BoundarySpec, Field, Grid, read_records
from .models import ModelSpec, builtin, builtin_names

_INF = float("inf")


def parse_raw(path):
    """Read the flat dotted-key tree of a config file."""
    raw = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', "
                                 f"got {stripped!r}")
            key, value = stripped.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ParseError(f"{path}:{lineno}: empty key or value")
            if key in raw:
                raise ParseError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value
    return raw


class _Reader:
    """Pulls typed values out of the raw tree, accumulating violations."""

    def __init__(self, raw):
        self.raw = dict(raw)
        self.seen = set()
        self.violations = []

    def _fetch(self, key, default, required):
        self.seen.add(key)
        if key in self.raw:
            return self.raw[key]
        if required:
            self.violations.append(f"missing required key '{key}'")
        return default

    def str_(self, key, default=None, required=False, choices=None):
        val = self._fetch(key, default, required)
        if val is not None and choices is not None and val not in choices:
            self.violations.append(
                f"'{key}' must be one of {sorted(choices)}, got {val!r}")
            return default if default in (choices or ()) else None
        return val

    def float_(self, key, default=None, required=False):
        val = self._fetch(key, default, required)
        if isinstance(val, str):
            try:
                return float(val) if val != "inf" else _INF
            except ValueError:
                self.violations.append(f"'{key}' is not a number: {val!r}")
                return default
        return val

    def int_(self, key, default=None, required=False):
        val = self._fetch(key, default, required)
        if isinstance(val, str):
            try:
                return int(val)
            except ValueError:
                self.violations.append(f"'{key}' is not an integer: {val!r}")
                return default
        return val

    def bool_(self, key, default=False):
        val = self._fetch(key, default, False)
        if isinstance(val, str):
            if val.lower() in ("true", "false"):
                return val.lower() == "true"
            self.violations.append(f"'{key}' must be true or false, "
                                   f"got {val!r}")
            return default
        return val

    def floats(self, key, default=None, required=False):
        val = self._fetch(key, default, required)
        if isinstance(val, str):
            try:
                return tuple(float(x) for x in val.split())
            except ValueError:
                self.violations.append(f"'{key}' is not a number list: "
                                       f"{val!r}")
                return default
        return val

    def ints(self, key, default=None, required=False):
        val = self._fetch(key, default, required)
        if isinstance(val, str):
            try:
                return tuple(int(x) for x in val.split())
            except ValueError:
                self.violations.append(f"'{key}' is not an integer list: "
                                       f"{val!r}")
                return default
        return val

    def params_under(self, prefix):
        """All numeric parameters below a dotted prefix."""
        out = {}
        for key, val in self.raw.items():
            if key.startswith(prefix + "."):
                self.seen.add(key)
                name = key[len(prefix) + 1:]
                try:
                    out[name] = float(val)
                except ValueError:
                    self.violations.append(
                        f"parameter '{key}' is not a number: {val!r}")
        return out

    def unknown_keys(self):
        return sorted(set(self.raw) - self.seen)


# ----------------------------------------------------------------------
# built-in schedules and profiles
# ----------------------------------------------------------------------

def _make_trace_schedule(theta_inf, amp, env):
    # bound in its own scope: the caller's `env`/`amp` names are reused
    # for the volumetric source afterwards
    if env is None or amp == 0.0:
        return None
    return lambda t: theta_inf + amp * env(t)


def make_envelope(kind, rd, prefix):
    if kind in (None, "zero"):
        return None
    if kind == "constant":
        return lambda t: 1.0
    if kind == "exp":
        rate = rd.float_(f"{prefix}.rate", 1.0)
        return lambda t: math.exp(-rate * t)
    if kind == "power":
        power = rd.float_(f"{prefix}.power", 3.0)
        return lambda t: (1.0 + t) ** (-power)
    if kind == "compact":
        t_off = rd.float_(f"{prefix}.t_off", 1.0)
        return lambda t: 1.0 if t <= t_off else 0.0
    rd.violations.append(f"unknown envelope '{kind}' under '{prefix}'")
    return None


def make_profile(kind, amplitude, grid_extents):
    if kind in (None, "zero"):
        return None
    if kind == "constant":
        return lambda *xs: amplitude * np.ones_like(xs[0])
    if kind == "sin_pi":
        def prof(*xs):
            out = amplitude * np.sin(np.pi * xs[0] / grid_extents[0])
            if len(xs) > 1:
                out = out * np.sin(np.pi * xs[1] / grid_extents[1])
            return out
        return prof
    if kind == "bump":
        def prof(*xs):
            out = np.ones_like(xs[0]) * amplitude
            for ax, x in enumerate(xs):
                c = 0.5 * grid_extents[ax]
                wdt = grid_extents[ax] / 8.0
                out = out * np.exp(-((x - c) / wdt) ** 2)
            return out
        return prof
    return "unknown"


def make_initial_field(rd, prefix, grid, default_value=0.0):
    kind = rd.str_(prefix, "constant",
                   choices={"constant", "cosine", "tanh", "snapshot"})
    # every kind's parameter names are legal keys, so switching the kind
    # never turns leftovers into unknown-key errors
    for name in ("value", "amplitude", "mode", "offset", "center", "width",
                 "left", "right", "path", "index"):
        rd.seen.add(f"{prefix}.{name}")
    if kind == "constant":
        value = rd.float_(f"{prefix}.value", default_value)
        return Field.full(grid, value)
    if kind == "cosine":
        amp = rd.float_(f"{prefix}.amplitude", 0.1)
        mode = rd.float_(f"{prefix}.mode", 1.0)
        offset = rd.float_(f"{prefix}.offset", 0.0)

        def fn(*xs):
            out = amp * np.cos(mode * np.pi * xs[0] / grid.extents[0])
            if len(xs) > 1:
                out = out * np.cos(mode * np.pi * xs[1] / grid.extents[1])
            return offset + out
        return Field.from_function(grid, fn)
    if kind == "tanh":
        center = rd.float_(f"{prefix}.center", 0.5 * grid.extents[0])
        width = rd.float_(f"{prefix}.width", 1.0)
        left = rd.float_(f"{prefix}.left", -1.0)
        right = rd.float_(f"{prefix}.right", 1.0)

        def fn(*xs):
            s = 0.5 * (1.0 + np.tanh((xs[0] - center) / width))
            return left + (right - left) * s
        return Field.from_function(grid, fn)
    if kind == "snapshot":
        path = rd.str_(f"{prefix}.path", required=True)
        index = rd.int_(f"{prefix}.index", 0)
        if path is None:
            return None
        try:
            records = read_records(path)
            fld, _ = records[index]
        except (OSError, IndexError, InvalidParameter) as exc:
            rd.violations.append(f"cannot load snapshot '{path}': {exc}")
            return None
        if fld.grid.nodes != grid.nodes or fld.grid.extents != grid.extents:
            rd.violations.append(
                f"snapshot '{path}' grid {fld.grid.nodes} does not match "
                f"configured grid {grid.nodes}")
            return None
        return Field(grid, fld.values)
    return None


# ----------------------------------------------------------------------
# the experiment config
# ----------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    model: ModelSpec
    grid: Grid
    bc: BoundarySpec
    source: SourceSpec
    initial_theta: Field
    initial_chi: Field
    run: TrajectoryConfig
    allow_unstable: bool
    diagnostics: dict
    out_dir: str
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def initial_state(self):
        return State.make(0.0, self.initial_theta, self.initial_chi,
                          self.model)


def build_config(raw, base_dir="."):
    """Resolve a raw key tree into an ExperimentConfig, collecting every
    violation into a single ValidationError."""
    rd = _Reader(raw)

    # model
    model = None
    j = w = lam = None
    j_name = rd.str_("model.j", required=True)
    w_name = rd.str_("model.w", required=True)
    lam_name = rd.str_("model.lambda", required=True)
    for name, attr in ((j_name, "model.j"), (w_name, "model.w"),
                       (lam_name, "model.lambda")):
        if name is not None and name not in builtin_names():
            rd.violations.append(
                f"'{attr}': unknown built-in '{name}' "
                f"(available: {', '.join(builtin_names())})")
    try:
        if j_name in builtin_names():
            j = builtin(j_name, **rd.params_under("model.j"))
        if w_name in builtin_names():
            w = builtin(w_name, **rd.params_under("model.w"))
        if lam_name in builtin_names():
            lam = builtin(lam_name, **rd.params_under("model.lambda"))
        if j is not None and w is not None and lam is not None:
            model = ModelSpec(j, w, lam)
    except (InvalidParameter, UnknownModel) as exc:
        rd.violations.append(str(exc))

    # grid
    grid = None
    dim = rd.int_("grid.dimension", 1)
    extents = rd.floats("grid.extents", (1.0,))
    nodes = rd.ints("grid.nodes", (65,))
    try:
        if extents is not None and nodes is not None:
            if dim is not None and (len(extents) != dim
                                    or len(nodes) != dim):
                rd.violations.append(
                    "grid.dimension must match the lengths of grid.extents "
                    "and grid.nodes")
            else:
                grid = Grid(extents, nodes)
    except InvalidParameter as exc:
        rd.violations.append(f"grid: {exc}")

    # boundary conditions
    bc = None
    bc_kind = rd.str_("bc.kind", "dirichlet", choices={"dirichlet", "robin"})
    if bc_kind == "dirichlet":
        rd.float_("bc.eta", None)  # tolerated but unused
        if model is not None:
            bc = BoundarySpec("dirichlet", theta_inf=model.j.theta_inf)
    elif bc_kind == "robin":
        eta = rd.float_("bc.eta", required=True)
        amp = rd.float_("bc.theta_gamma.amplitude", 0.0)
        env_kind = rd.str_("bc.theta_gamma.envelope", "zero")
        env = make_envelope(env_kind, rd, "bc.theta_gamma")
        theta_inf = model.j.theta_inf if model is not None else 0.0
        trace = _make_trace_schedule(theta_inf, amp, env)
        try:
            if eta is not None:
                bc = BoundarySpec("robin", theta_inf=theta_inf, eta=eta,
                                  theta_gamma=trace)
        except InvalidParameter as exc:
            rd.violations.append(f"bc: {exc}")

    # source
    prof_kind = rd.str_("source.profile", "zero",
                        choices={"zero", "constant", "sin_pi", "bump"})
    amp = rd.float_("source.amplitude", 1.0)
    env_kind = rd.str_("source.envelope", "zero")
    env = make_envelope(env_kind, rd, "source")
    prof = make_profile(prof_kind, amp, grid.extents if grid else (1.0, 1.0))
    if prof == "unknown":
        rd.violations.append(f"unknown source profile '{prof_kind}'")
        prof = None
    p_tag = rd.float_("source.p", _INF)
    q_tag = rd.float_("source.q", None)
    delta_src = rd.float_("source.delta_src", None)
    source = SourceSpec(profile=prof, envelope=env, p_tag=p_tag,
                        q_tag=q_tag, delta_src=delta_src)

    # run parameters
    dt = rd.float_("run.dt", required=True)
    t_end = rd.float_("run.t_end", required=True)
    run_cfg = None
    allow_unstable = rd.bool_("run.allow_unstable", False)
    try:
        if dt is not None and t_end is not None:
            run_cfg = TrajectoryConfig(
                dt=dt, t_end=t_end,
                newton_tol=rd.float_("run.newton_tol", 1e-10),
                max_newton=rd.int_("run.max_newton", 50),
                trace_every=rd.int_("run.trace_every", 1),
                snapshot_every=rd.int_("run.snapshot_every", 0),
                stop_on_converged=rd.bool_("run.stop_on_converged", False),
                keep_states=rd.bool_("run.keep_states", False))
    except InvalidParameter as exc:
        rd.violations.append(f"run: {exc}")

    if run_cfg is not None:
        n_steps = round(run_cfg.t_end / run_cfg.dt)
        if abs(n_steps * run_cfg.dt - run_cfg.t_end) > \
                1e-9 * max(1.0, run_cfg.t_end):
            rd.violations.append(
                "run.t_end must be an integer multiple of run.dt")
    if model is not None and run_cfg is not None:
        kappa = model.w.kappa
        if run_cfg.dt > 1.0 / kappa and not allow_unstable:
            rd.violations.append(
                f"run.dt = {run_cfg.dt} exceeds the stability bound "
                f"1/kappa = {1.0 / kappa}; set run.allow_unstable = true "
                "to override")

    # initial data
    initial_theta = initial_chi = None
    if grid is not None:
        theta_default = model.j.theta_inf if model is not None else 0.0
        initial_theta = make_initial_field(rd, "initial.theta", grid,
                                           default_value=theta_default)
        initial_chi = make_initial_field(rd, "initial.chi", grid,
                                         default_value=0.0)

    # diagnostics options
    diagnostics = {
        "dissipation": rd.bool_("diagnostics.dissipation", True),
        "dissipation_tol": rd.float_("diagnostics.dissipation_tol", 1e-9),
        "omega": rd.bool_("diagnostics.omega", True),
        "assert_converged": rd.bool_("diagnostics.assert_converged", False),
        "monitors": rd.bool_("diagnostics.monitors", False),
        "assert_bounded": rd.bool_("diagnostics.assert_bounded", False),
        "s": rd.float_("diagnostics.s", 1.0),
        "eps_loj": rd.float_("diagnostics.eps_loj", 0.1),
        "validate_model": rd.bool_("diagnostics.validate_model", True),
        "reference_steady": rd.str_("diagnostics.reference_steady", None),
    }

    out_dir = rd.str_("output.dir", "out")
    seed = rd.int_("seed", 0)

    # steady-solve section keys are consumed by the steady entry point
    rd.str_("steady.guesses", "constants",
            choices={"constants", "layers", "both"})
    rd.float_("steady.tol", 1e-10)
    rd.int_("steady.layers", 3)

    for key in rd.unknown_keys():
        rd.violations.append(f"unknown key '{key}'")

    # initial admissibility: finite energy
    if not rd.violations and model is not None and grid is not None:
        try:
            st = State.make(0.0, initial_theta, initial_chi, model)
            e0 = discrete_energy(st, model, grid)
            if not math.isfinite(e0):
                rd.violations.append("initial energy is not finite")
        except Exception as exc:  # noqa: BLE001 - reported as a violation
            rd.violations.append(f"initial data inadmissible: {exc}")

    if rd.violations:
        raise ValidationError(rd.violations)

    return ExperimentConfig(
        model=model, grid=grid, bc=bc, source=source,
        initial_theta=initial_theta, initial_chi=initial_chi,
        run=run_cfg, allow_unstable=allow_unstable,
        diagnostics=diagnostics,
        out_dir=os.path.join(base_dir, out_dir) if not os.path.isabs(out_dir)
        else out_dir,
        seed=seed, raw=dict(raw))


def parse_config(path):
    """Parse and validate a config file into an ExperimentConfig."""
    raw = parse_raw(path)
    return build_config(raw, base_dir=os.getcwd())
