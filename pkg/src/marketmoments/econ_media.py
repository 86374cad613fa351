"""Transport of collective variables through the risk domain.

Collective value ``C`` (one field per moment order ``m``) lives on a
uniform grid of cells covering ``[0, 1]**w`` (``w`` is 1 or 2) and is
carried by a velocity field ``v``.  Its flow is ``P = C * v``.  The
evolution equations are the conservation laws::

    dC/dt + div(C v) = F        (continuity)
    dP/dt + div(P v) = G        (flow)

solved by an explicit first-order upwind finite-volume scheme with zero
flux through the boundary of the unit cube.  Integrating over the domain
removes the divergence terms, leaving the ODEs ``dC_total/dt = F_total``
and ``dP_total/dt = G_total`` handled by :func:`integrate_market`.

Velocities can be prescribed (a constant, or the mean drift implied by a
rating transition matrix) or self-consistent, in which case ``P`` is
evolved and ``v = P / C``.
"""

import configparser
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CFLError, CSVFormatError, DegenerateError, InputError

ROW_SUM_TOL = 1e-12
VACUUM_RTOL = 1e-12
DEFAULT_CFL_MAX = 0.9
SNAPSHOT_HEADER = ("t", "cell_index", "x", "m", "C_sigma", "P", "v")
TRAJECTORY_HEADER = ("t", "m", "C_total", "P_total", "X_mean")
VELOCITY_MODES = ("prescribed", "self_consistent")


# -- transition matrices -------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Rating transition probabilities over a horizon ``T``.

    Attributes
    ----------
    grades : ndarray, shape (K,)
        Strictly increasing risk grades in ``[0, 1]``.
    a : ndarray, shape (K, K)
        Row-stochastic matrix; ``a[i, j]`` is the probability of moving
        from grade ``i`` to grade ``j`` within ``T``.
    T : float
        Horizon, in simulation time units.
    """

    grades: np.ndarray
    a: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.grades, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float)
        if x.size == 0 or a.shape != (x.size, x.size):
            raise InputError(f"transition matrix shape {a.shape} does not match {x.size} grades")
        if np.any(np.diff(x) <= 0):
            raise InputError("grades not sorted: grades must be strictly increasing")
        if x[0] < 0 or x[-1] > 1:
            raise InputError("grades must lie in [0, 1]")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise InputError("transition probabilities must be finite and non-negative")
        rows = a.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise InputError(f"rows not stochastic: row {bad[0]} sums to {rows[bad[0]]!r}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise InputError("transition horizon T must be positive")
        object.__setattr__(self, "grades", x)
        object.__setattr__(self, "a", a)

    @property
    def K(self):
        return self.grades.size


def velocity_from_transition(tm):
    """Mean drift of a company at each grade.

    ``v_i = (1/T) * sum_j (x_j - x_i) * a_ij``
    """
    x = tm.grades
    jumps = x[None, :] - x[:, None]
    return (jumps * tm.a).sum(axis=1) / tm.T


def interpolate_velocity(grades, v, x):
    """Piecewise-linear velocity at points ``x``, constant beyond the grades."""
    return np.interp(np.asarray(x, dtype=float), grades, v)


def parse_transition_csv(data):
    """Read a transition matrix file.

    One line ``grades,x_1,...,x_K`` gives the grades.  Other lines are
    ``i,j,prob`` triples with 0-based indices; absent entries are zero.  An
    optional ``horizon,T`` line sets ``T`` (default 1) and an optional
    ``i,j,prob`` header line is skipped.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    grades = None
    horizon = 1.0
    entries = []
    for rowno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        head = row[0].strip().lower()
        try:
            if head == "grades":
                grades = [float(v) for v in row[1:]]
            elif head == "horizon":
                horizon = float(row[1])
            elif head == "i":
                continue
            else:
                if len(row) != 3:
                    raise CSVFormatError(f"expected i,j,prob, got {len(row)} fields", rowno)
                entries.append((int(row[0]), int(row[1]), float(row[2]), rowno))
        except ValueError as exc:
            if isinstance(exc, CSVFormatError):
                raise
            raise CSVFormatError(f"cannot parse {row!r}", rowno) from None
    if grades is None:
        raise InputError("transition file has no grades line")
    K = len(grades)
    a = np.zeros((K, K))
    for i, j, prob, rowno in entries:
        if not (0 <= i < K and 0 <= j < K):
            raise CSVFormatError(f"index ({i}, {j}) outside 0..{K - 1}", rowno)
        a[i, j] = prob
    return TransitionMatrix(np.array(grades), a, horizon)


def read_transition(path):
    try:
        return parse_transition_csv(Path(path).read_bytes())
    except OSError as exc:
        raise InputError(f"cannot read transition file {path}: {exc.strerror}") from None


# -- grid and state ------------------------------------------------------


@dataclass(frozen=True)
class MediaGrid:
    """``n`` cells per axis over ``[0, 1]**w``."""

    n: int
    w: int = 1

    def __post_init__(self):
        if self.w not in (1, 2):
            raise InputError(f"risk dimensionality w must be 1 or 2, got {self.w}")
        if self.n < 2:
            raise InputError("grid needs at least 2 cells per axis")

    @property
    def dx(self):
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n,) * self.w

    @property
    def cell_volume(self):
        return self.dx ** self.w

    @property
    def centers(self):
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def coords(self):
        """Cell-center coordinates, shape ``(w, *shape)``."""
        return np.stack(np.meshgrid(*([self.centers] * self.w), indexing="ij"))

    def integrate(self, f):
        """Domain integral over the trailing ``w`` axes."""
        axes = tuple(range(-self.w, 0))
        return np.sum(f, axis=axes) * self.cell_volume


@dataclass(frozen=True, eq=False)
class MediaState:
    """Fields at time ``t``.

    Attributes
    ----------
    C : ndarray, shape (M, *grid.shape)
        Cell averages of the collective variable, one slab per order.
    P : ndarray, shape (M, w, *grid.shape)
        Flow.
    v : ndarray, shape (M, w, *grid.shape)
        Velocity.
    """

    grid: MediaGrid
    t: float
    orders: tuple
    C: np.ndarray
    P: np.ndarray
    v: np.ndarray
    mode: str = "prescribed"


def make_state(grid, C, v, orders=(1,), t=0.0, mode="prescribed"):
    """State with ``P = C * v``; ``C`` and ``v`` broadcast to full shape."""
    if mode not in VELOCITY_MODES:
        raise InputError(f"velocity mode must be one of {VELOCITY_MODES}, got {mode!r}")
    M = len(orders)
    C = np.broadcast_to(np.asarray(C, dtype=float), (M,) + grid.shape).copy()
    v = np.broadcast_to(np.asarray(v, dtype=float), (M, grid.w) + grid.shape).copy()
    if np.any(C < 0):
        raise InputError("C_sigma must be non-negative")
    return MediaState(grid, float(t), tuple(orders), C, C[:, None] * v, v, mode)


def compute_flow(state):
    """``P = C * v`` cellwise."""
    return state.C[:, None] * state.v


def velocity_from_flow(C, P):
    """``v = P / C``, zero in near-vacuum cells (``C <= 1e-12 * max C``)."""
    out = np.zeros_like(P)
    for k in range(C.shape[0]):
        floor = VACUUM_RTOL * np.max(C[k])
        live = C[k] > floor
        if floor > 0 or np.any(live):
            out[k][:, live] = P[k][:, live] / C[k][live]
    return out


# -- upwind scheme --------------------------------------------------------


def _face_velocity(v, axis):
    """Velocity on interior faces along ``axis`` (mean of neighbours)."""
    va = np.moveaxis(v, axis, 0)
    return np.moveaxis(0.5 * (va[:-1] + va[1:]), 0, axis)


def _upwind_divergence(q, v, dx):
    """Upwind ``div(q v)`` for one scalar slab; boundary fluxes are zero."""
    w = v.shape[0]
    div = np.zeros_like(q)
    for axis in range(w):
        u = np.moveaxis(_face_velocity(v[axis], axis), axis, 0)
        qa = np.moveaxis(q, axis, 0)
        flux = np.maximum(u, 0.0) * qa[:-1] + np.minimum(u, 0.0) * qa[1:]
        zero = np.zeros((1,) + flux.shape[1:])
        flux = np.concatenate([zero, flux, zero])
        div += np.moveaxis(flux[1:] - flux[:-1], 0, axis)
    return div / dx


def courant_number(v, dt, dx):
    """Largest fraction of a cell's content leaving it in one step.

    ``v`` has shape ``(M, w, *cells)``.  Per cell the fraction is
    ``dt/dx * sum_axes (u_right^+ - u_left^-)`` over face velocities; for
    a uniform interior velocity it reduces to ``|v| dt / dx``.
    """
    v = np.asarray(v, dtype=float)
    worst = 0.0
    for slab in v:
        out = np.zeros(slab.shape[1:])
        for axis in range(slab.shape[0]):
            u = np.moveaxis(_face_velocity(slab[axis], axis), axis, 0)
            zero = np.zeros((1,) + u.shape[1:])
            right = np.concatenate([u, zero])
            left = np.concatenate([zero, u])
            out += np.moveaxis(np.maximum(right, 0.0) - np.minimum(left, 0.0), 0, axis)
        worst = max(worst, float(out.max()))
    return worst * dt / dx


def max_stable_dt(v, dx, cfl_max=DEFAULT_CFL_MAX):
    c1 = courant_number(v, 1.0, dx)
    return math.inf if c1 == 0 else cfl_max / c1


def check_cfl(state, dt, cfl_max=DEFAULT_CFL_MAX):
    if not (dt > 0 and math.isfinite(dt)):
        raise InputError(f"dt must be positive, got {dt!r}")
    courant = courant_number(state.v, dt, state.grid.dx)
    if courant > cfl_max:
        raise CFLError(dt, max_stable_dt(state.v, state.grid.dx, cfl_max), courant, cfl_max)
    return courant


def _eval_source(source, state, current):
    if source is None:
        return 0.0
    return np.broadcast_to(source(state.t, state.grid.coords, current), current.shape)


def step_continuity(state, source=None, dt=None, cfl_max=DEFAULT_CFL_MAX):
    """Advance ``C`` by one explicit upwind step.

    ``source(t, coords, C)`` returns ``F`` broadcastable to ``C``.  In
    prescribed mode ``P`` is refreshed to ``C * v``.
    """
    check_cfl(state, dt, cfl_max)
    dx = state.grid.dx
    F = _eval_source(source, state, state.C)
    C = np.empty_like(state.C)
    for k in range(C.shape[0]):
        C[k] = state.C[k] - dt * _upwind_divergence(state.C[k], state.v[k], dx)
    C += dt * F
    P = C[:, None] * state.v if state.mode == "prescribed" else state.P
    return replace(state, t=state.t + dt, C=C, P=P)


def step_flow(state, source=None, dt=None, cfl_max=DEFAULT_CFL_MAX, C=None):
    """Advance ``P`` by one upwind step and reset ``v = P / C``.

    ``source(t, coords, P)`` returns ``G`` broadcastable to ``P``.  ``C``
    defaults to the state's own field; pass the freshly stepped ``C`` when
    coupling with :func:`step_continuity`.
    """
    check_cfl(state, dt, cfl_max)
    dx = state.grid.dx
    G = _eval_source(source, state, state.P)
    P = np.empty_like(state.P)
    for k in range(P.shape[0]):
        for a in range(P.shape[1]):
            P[k, a] = state.P[k, a] - dt * _upwind_divergence(state.P[k, a], state.v[k], dx)
    P += dt * G
    C = state.C if C is None else C
    return replace(state, t=state.t + dt, C=C, P=P, v=velocity_from_flow(C, P))


def step(state, F=None, G=None, dt=None, cfl_max=DEFAULT_CFL_MAX):
    """One step in the state's velocity mode."""
    nxt = step_continuity(state, F, dt, cfl_max)
    if state.mode == "self_consistent":
        nxt = step_flow(state, G, dt, cfl_max, C=nxt.C)
    return nxt


# -- diagnostics ----------------------------------------------------------


def total_mass(state):
    """``integral C dx`` per order, shape ``(M,)``."""
    return state.grid.integrate(state.C)


def total_flow(state):
    """``integral P dx`` per order, shape ``(M, w)``."""
    return state.grid.integrate(state.P)


def mean_risk(state):
    """Mass-weighted centroid ``X = integral x C dx / integral C dx``.

    Returns
    -------
    ndarray, shape (M, w)
    """
    mass = total_mass(state)
    if np.any(~(mass > 0)):
        raise DegenerateError("mean risk undefined: zero total mass")
    moment = state.grid.integrate(state.C[:, None] * state.grid.coords[None])
    return np.clip(moment / mass[:, None], 0.0, 1.0)


# -- whole-market ODEs ----------------------------------------------------


@dataclass(eq=False)
class MarketTrajectory:
    """Domain totals over time.

    ``C_total`` has shape ``(T, M)``, ``P_total`` and ``X_mean`` have
    shape ``(T, M, w)``; ``X_mean`` is NaN when no spatial state exists.
    """

    t: np.ndarray
    orders: tuple
    C_total: np.ndarray
    P_total: np.ndarray
    X_mean: np.ndarray


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _time_grid(t0, t1, dt):
    if not (dt > 0 and math.isfinite(dt)):
        raise InputError(f"dt must be positive, got {dt!r}")
    if not t1 >= t0:
        raise InputError("t_span must be increasing")
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    ts = t0 + dt * np.arange(n + 1)
    ts[-1] = t1
    return ts


def integrate_market(F, G, t_span, dt, C0=0.0, P0=0.0, orders=(1,)):
    """Integrate ``dC/dt = F(t, None, C)``, ``dP/dt = G(t, None, P)`` with RK4.

    ``None`` for either source means zero.  ``C0`` broadcasts to
    ``(M,)`` and ``P0`` to ``(M, w)`` with ``w = 1`` unless ``P0`` says
    otherwise.
    """
    M = len(orders)
    C0 = np.broadcast_to(np.asarray(C0, dtype=float), (M,)).copy()
    P0 = np.asarray(P0, dtype=float)
    P0 = np.broadcast_to(P0, (M, P0.shape[-1] if P0.ndim == 2 else 1)).copy()
    ts = _time_grid(float(t_span[0]), float(t_span[1]), dt)
    fC = (lambda t, y: np.zeros_like(y)) if F is None else (
        lambda t, y: np.broadcast_to(F(t, None, y), y.shape).astype(float))
    fP = (lambda t, y: np.zeros_like(y)) if G is None else (
        lambda t, y: np.broadcast_to(G(t, None, y), y.shape).astype(float))
    Cs, Ps = [C0], [P0]
    for t, t_next in zip(ts[:-1], ts[1:]):
        Cs.append(_rk4(fC, t, Cs[-1], t_next - t))
        Ps.append(_rk4(fP, t, Ps[-1], t_next - t))
    Ps = np.array(Ps)
    return MarketTrajectory(ts, tuple(orders), np.array(Cs), Ps, np.full(Ps.shape, np.nan))


# -- source presets ------------------------------------------------------


def zero_source():
    return lambda t, x, current: 0.0


def constant_source(value):
    value = float(value)
    return lambda t, x, current: value


def relaxation_source(rate, target):
    """``rate * (target - current)``: pulls the field toward ``target``."""
    rate, target = float(rate), float(target)
    return lambda t, x, current: rate * (target - current)


SOURCE_PRESETS = {
    "zero": (zero_source, ()),
    "constant": (constant_source, ("value",)),
    "relaxation": (relaxation_source, ("rate", "target")),
}


def make_source(name, **params):
    try:
        factory, needed = SOURCE_PRESETS[name]
    except KeyError:
        raise InputError(f"unknown source preset {name!r}; choose from {sorted(SOURCE_PRESETS)}") from None
    missing = [p for p in needed if p not in params]
    if missing:
        raise InputError(f"source preset {name!r} needs {', '.join(missing)}")
    return factory(*(params[p] for p in needed))


# -- scenarios -----------------------------------------------------------


@dataclass
class Scenario:
    """Everything one simulation run needs.

    ``velocity`` is a constant vector (one entry per axis, or one entry
    used for every axis).  When ``transition`` is set it replaces the
    constant: the drift at each grade is interpolated along every axis and
    clamped so boundary cells never point out of the domain.
    """

    n_cells: int = 128
    w: int = 1
    dt: float = 1e-3
    t_end: float = 1.0
    cfl_max: float = DEFAULT_CFL_MAX
    velocity_mode: str = "prescribed"
    velocity: tuple = (0.0,)
    transition: str | None = None
    orders: tuple = (1,)
    initial: str = "bump"
    center: tuple = (0.5,)
    width: float = 0.05
    mass: float = 1.0
    source: str = "zero"
    source_params: dict = field(default_factory=dict)
    flow_source: str = "zero"
    flow_source_params: dict = field(default_factory=dict)
    snapshot_every: int = 0

    def check(self):
        if self.n_cells < 2:
            raise InputError("n_cells must be at least 2")
        if self.w not in (1, 2):
            raise InputError("w must be 1 or 2")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InputError("dt must be positive")
        if not self.t_end >= 0:
            raise InputError("t_end must be non-negative")
        if not self.cfl_max > 0:
            raise InputError("cfl_max must be positive")
        if self.velocity_mode not in VELOCITY_MODES:
            raise InputError(f"velocity_mode must be one of {VELOCITY_MODES}")
        if self.initial not in ("uniform", "bump", "point"):
            raise InputError("initial must be uniform, bump or point")
        if len(self.velocity) not in (1, self.w) or len(self.center) not in (1, self.w):
            raise InputError("velocity and center need 1 or w components")
        if not self.width > 0 or not self.mass > 0:
            raise InputError("width and mass must be positive")
        if self.snapshot_every < 0:
            raise InputError("snapshot_every must be non-negative")
        make_source(self.source, **self.source_params)
        make_source(self.flow_source, **self.flow_source_params)
        return self

    def to_dict(self):
        return asdict(self)


_TUPLE_KEYS = {"velocity": float, "center": float, "orders": int}
_SCALAR_KEYS = {"n_cells": int, "w": int, "dt": float, "t_end": float, "cfl_max": float,
                "width": float, "mass": float, "snapshot_every": int}
_TEXT_KEYS = ("velocity_mode", "transition", "initial", "source", "flow_source")


def scenario_from_mapping(values, base_dir=None):
    """Build a :class:`Scenario` from string key/value pairs.

    Keys ``source.<name>`` and ``flow_source.<name>`` set preset
    parameters.  A relative ``transition`` path is resolved against
    ``base_dir``.
    """
    kw = {"source_params": {}, "flow_source_params": {}}
    for key, raw in values.items():
        key = key.strip().lower()
        text = str(raw).strip()
        try:
            if key in _SCALAR_KEYS:
                kw[key] = _SCALAR_KEYS[key](text)
            elif key in _TUPLE_KEYS:
                kw[key] = tuple(_TUPLE_KEYS[key](v) for v in text.split(",") if v.strip())
            elif key in _TEXT_KEYS:
                kw[key] = text or None
            elif key.startswith(("source.", "flow_source.")):
                group, name = key.split(".", 1)
                kw[group + "_params"][name] = float(text)
            else:
                raise InputError(f"unknown scenario key {key!r}")
        except ValueError as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad value for {key}: {text!r}") from None
    if kw.get("transition") and base_dir is not None:
        path = Path(kw["transition"])
        if not path.is_absolute():
            kw["transition"] = str(Path(base_dir) / path)
    return Scenario(**kw).check()


def parse_scenario(text, base_dir=None):
    """Parse ``key = value`` lines (``#`` comments allowed)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"bad scenario file: {exc}") from None
    return scenario_from_mapping(dict(cp["scenario"]), base_dir)


def read_scenario(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, path.parent)


def _full(vec, w):
    vec = tuple(vec)
    return vec * w if len(vec) == 1 else vec


def scenario_velocity(sc, grid):
    """Initial velocity field, shape ``(w, *grid.shape)``."""
    if sc.transition is None:
        vel = np.array(_full(sc.velocity, grid.w), dtype=float)
        return np.broadcast_to(vel.reshape((grid.w,) + (1,) * grid.w), (grid.w,) + grid.shape).copy()
    tm = read_transition(sc.transition)
    vg = velocity_from_transition(tm)
    coords = grid.coords
    v = interpolate_velocity(tm.grades, vg, coords)
    for axis in range(grid.w):
        va = np.moveaxis(v[axis], axis, 0)
        va[0] = np.maximum(va[0], 0.0)
        va[-1] = np.minimum(va[-1], 0.0)
    return v


def scenario_field(sc, grid):
    """Initial ``C`` with integral ``sc.mass``."""
    center = np.array(_full(sc.center, grid.w), dtype=float).reshape((grid.w,) + (1,) * grid.w)
    if sc.initial == "uniform":
        C = np.ones(grid.shape)
    elif sc.initial == "bump":
        r2 = np.sum((grid.coords - center) ** 2, axis=0)
        C = np.exp(-0.5 * r2 / sc.width ** 2)
    else:
        C = np.zeros(grid.shape)
        idx = tuple(min(int(c * grid.n), grid.n - 1) for c in center.ravel())
        C[idx] = 1.0
    return C * (sc.mass / grid.integrate(C))


@dataclass(eq=False)
class MediaRun:
    snapshots: list
    trajectory: MarketTrajectory
    mass_drift: float
    x_range: tuple


def _record(traj_rows, state):
    try:
        X = mean_risk(state)
    except DegenerateError:
        X = np.full((len(state.orders), state.grid.w), np.nan)
    traj_rows.append((state.t, total_mass(state), total_flow(state), X))


def simulate(sc):
    """Run a scenario and collect snapshots and domain totals.

    Snapshots are taken at the start, every ``snapshot_every`` steps and
    at the end.  The CFL condition is checked before every step.
    """
    sc.check()
    grid = MediaGrid(sc.n_cells, sc.w)
    state = make_state(grid, scenario_field(sc, grid), scenario_velocity(sc, grid),
                       sc.orders, 0.0, sc.velocity_mode)
    F = make_source(sc.source, **sc.source_params)
    G = make_source(sc.flow_source, **sc.flow_source_params)
    ts = _time_grid(0.0, sc.t_end, sc.dt) if sc.t_end > 0 else np.array([0.0])
    check_cfl(state, sc.dt, sc.cfl_max)
    snapshots = [state]
    rows = []
    _record(rows, state)
    for k, (t, t_next) in enumerate(zip(ts[:-1], ts[1:]), start=1):
        state = step(state, F, G, t_next - t, sc.cfl_max)
        state = replace(state, t=float(t_next))
        _record(rows, state)
        if (sc.snapshot_every and k % sc.snapshot_every == 0) or k == len(ts) - 1:
            snapshots.append(state)
    traj = MarketTrajectory(np.array([r[0] for r in rows]), tuple(sc.orders),
                            np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
                            np.array([r[3] for r in rows]))
    m0 = traj.C_total[0]
    drift = float(np.max(np.abs(traj.C_total - m0) / m0))
    X = traj.X_mean
    x_range = (float(np.nanmin(X)), float(np.nanmax(X))) if np.any(np.isfinite(X)) else (math.nan, math.nan)
    return MediaRun(snapshots, traj, drift, x_range)


def simulate_many(scenarios, workers=1):
    """Independent runs, optionally on a thread pool; results keep input order."""
    if workers <= 1:
        return [simulate(sc) for sc in scenarios]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(simulate, scenarios))


# -- output ---------------------------------------------------------------


def _cell(vec):
    vec = np.atleast_1d(vec)
    return ";".join(repr(float(v)) for v in vec)


def write_snapshot_csv(snapshots):
    """``t,cell_index,x,m,C_sigma,P,v``; vector entries are ``;``-joined."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SNAPSHOT_HEADER)
    for s in snapshots:
        g = s.grid
        coords = g.coords.reshape(g.w, -1)
        for k, m in enumerate(s.orders):
            C = s.C[k].ravel()
            P = s.P[k].reshape(g.w, -1)
            v = s.v[k].reshape(g.w, -1)
            for i in range(C.size):
                wr.writerow((repr(s.t), i, _cell(coords[:, i]), m, repr(float(C[i])),
                             _cell(P[:, i]), _cell(v[:, i])))
    return buf.getvalue().encode("utf-8")


def write_trajectory_csv(traj):
    """``t,m,C_total,P_total,X_mean``; vector entries are ``;``-joined."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(TRAJECTORY_HEADER)
    for i, t in enumerate(traj.t.tolist()):
        for k, m in enumerate(traj.orders):
            wr.writerow((repr(t), m, repr(float(traj.C_total[i, k])),
                         _cell(traj.P_total[i, k]), _cell(traj.X_mean[i, k])))
    return buf.getvalue().encode("utf-8")
