"""Collective moments over risk-coordinate cells and over the whole market.

Companies are placed in the unit cube ``[0, 1]**J`` by their risk
coordinates.  The cube is tiled by cells of side ``d``; a company may sit
in a different cell for each moment order ``m`` because its order-``m``
coordinates are used for the order-``m`` sums.

Three nested time scales are used, all multiples of the per-company
window ``N``:

* per company: ``N`` steps (see :mod:`marketmoments.moments`),
* per cell: ``k_x * N`` steps,
* whole market: ``k_m * k_x * N`` steps.

For every level the raw sums ``C_sum``, ``U_sum``, ``S_sum`` of m-th
powers are kept next to the averaged moments, and price and return
moments are ratios of raw sums.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._summation import exact_expansion, exact_row_sums, sum_expansions
from .errors import ConsistencyError, DegenerateError, InputError, ShiftOutOfRangeError
from .moments import _dense, window_starts

WHOLE_MARKET = None
AGGREGATE_CSV_HEADER = ("level", "cell", "time_index", "kind", "m", "value")
INTERCHANGE_RTOL = 1e-12
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class AggregationConfig:
    N: int
    k_x: int = 1
    k_m: int = 1
    xi_steps: int = 0
    n_max: int = 4

    def __post_init__(self):
        for name in ("N", "k_x", "k_m", "n_max"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InputError(f"{name} must be a positive integer, got {v!r}")
        if int(self.xi_steps) != self.xi_steps or self.xi_steps < 0:
            raise InputError(f"xi_steps must be a non-negative integer, got {self.xi_steps!r}")

    @property
    def cell_length(self):
        return self.k_x * self.N

    @property
    def market_length(self):
        return self.k_m * self.k_x * self.N


def cells_per_axis(d):
    return max(1, math.ceil(1.0 / d - _EDGE_EPS))


def cell_of(x, d):
    """Cell index along one axis.

    Cells are ``[c*d, (c+1)*d)`` with the last one closed at 1.  A small
    relative slack absorbs representation error so that, for example,
    ``0.3`` with ``d=0.1`` lands in cell 3.
    """
    n = cells_per_axis(d)
    c = np.floor(np.asarray(x, dtype=float) / d + _EDGE_EPS).astype(np.int64)
    return np.clip(c, 0, n - 1)


@dataclass(frozen=True)
class RiskCellGrid:
    d: float
    J: int
    n_max: int
    assignment: dict = field(repr=False)

    @property
    def n_cells(self):
        return cells_per_axis(self.d)

    def cell_of(self, company, m):
        return self.assignment[m][company]

    def members(self, cell, m):
        cell = tuple(cell)
        return sorted(q for q, c in self.assignment[m].items() if c == cell)

    def occupied(self, m=None):
        orders = range(1, self.n_max + 1) if m is None else [m]
        return sorted({c for mm in orders for c in self.assignment[mm].values()})

    def bounds(self, cell):
        lo = np.array(cell, dtype=float) * self.d
        hi = np.minimum(lo + self.d, 1.0)
        return lo, hi


def assign_cells(risks, d, J=None, n_max=None):
    """Bin companies into cells of side ``d`` for each moment order.

    ``risks`` maps company to :class:`~marketmoments.trade_data.RiskVector`
    (a plain iterable of them also works).  ``J`` and ``n_max`` default to
    the shape of the coordinate matrices.
    """
    if not (0 < d <= 1):
        raise InputError(f"cell side d must lie in (0, 1], got {d!r}")
    items = list(risks.values() if isinstance(risks, dict) else risks)
    if not items:
        raise InputError("no risk vectors")
    J = items[0].n_risks if J is None else J
    n_max = items[0].n_moments if n_max is None else n_max
    assignment = {m: {} for m in range(1, n_max + 1)}
    for rv in items:
        if rv.n_risks < J or rv.n_moments < n_max:
            raise InputError(
                f"company {rv.company!r} has {rv.n_moments}x{rv.n_risks} coordinates, need {n_max}x{J}")
        idx = cell_of(rv.coords[:n_max, :J], d)
        for m in range(1, n_max + 1):
            assignment[m][rv.company] = tuple(int(c) for c in idx[m - 1])
    return RiskCellGrid(float(d), int(J), int(n_max), assignment)


def _rows_for(dense, companies):
    missing = [q for q in companies if q not in dense.companies]
    if missing:
        raise InputError(f"companies without ticks: {missing[:5]}")
    return np.array([dense.companies.index(q) for q in companies], dtype=np.int64)


def _check_members(dense, grid):
    absent = [q for q in dense.companies if q not in grid.assignment[1]]
    if absent:
        raise InputError(f"companies without risk coordinates: {absent[:5]}")


@dataclass(frozen=True)
class TickSums:
    C: float
    U: float
    S: float
    count: int
    C_exact: tuple = field(repr=False, default=(0.0,))
    U_exact: tuple = field(repr=False, default=(0.0,))
    S_exact: tuple = field(repr=False, default=(0.0,))

    @property
    def empty(self):
        return self.count == 0


def _tick_sums(dense, rows, step, xi_steps, m):
    if not 0 <= step < dense.n_steps:
        raise InputError(f"step {step} outside the series")
    if step - xi_steps < 0:
        raise ShiftOutOfRangeError(f"shift out of range: step {step} has no price {xi_steps} steps back")
    c = dense.value[rows, step] ** m
    u = dense.volume[rows, step] ** m
    s = (dense.price[rows, step - xi_steps] * dense.volume[rows, step]) ** m
    ce, ue, se = exact_expansion(c), exact_expansion(u), exact_expansion(s)
    return TickSums(math.fsum(ce), math.fsum(ue), math.fsum(se),
                    len(rows), ce, ue, se)


def collective_tick_sums(series, grid, cell, step, xi_steps, m):
    """Sums of m-th powers of value, volume and past value in one cell at one step.

    An empty cell returns zero sums with ``empty`` set.
    """
    dense = _dense(series)
    rows = _rows_for(dense, grid.members(cell, m))
    return _tick_sums(dense, rows, step, xi_steps, m)


def market_tick_sums(series, step, xi_steps, m):
    dense = _dense(series)
    return _tick_sums(dense, np.arange(len(dense.companies)), step, xi_steps, m)


@dataclass(frozen=True, eq=False)
class CollectiveMoments:
    """Collective moments of one cell (or the whole market) in one window.

    Arrays are indexed ``m-1``.  ``count[m-1]`` is the number of member
    companies for order ``m``; where it is zero the sums and the averaged
    moments are 0 and ``p``/``r`` are NaN.  ``S``, ``S_sum`` and ``r`` are
    NaN throughout when the window lacks past prices.
    """

    level: str
    cell: tuple
    time_index: int
    start: int
    length: int
    k_x: int
    k_m: int
    xi_steps: int
    C: np.ndarray
    U: np.ndarray
    S: np.ndarray
    p: np.ndarray
    r: np.ndarray
    C_sum: np.ndarray
    U_sum: np.ndarray
    S_sum: np.ndarray
    count: np.ndarray
    return_eligible: bool
    exact: dict = field(repr=False, default=None)

    @property
    def empty(self):
        return self.count == 0

    @property
    def n_max(self):
        return len(self.C)

    @property
    def cell_label(self):
        return "-" if self.cell is None else "/".join(str(c) for c in self.cell)


def _relclose(a, b, rtol):
    return abs(a - b) <= rtol * max(abs(a), abs(b)) or (a == b)


def _window_block(dense, rows, start, length, xi_steps, m, check=True):
    """Raw sums and averages for one set of companies and one window.

    Returns (C, U, S, C_sum, U_sum, S_sum, exact) for order m.  The
    time-major average (sum over companies first) and the company-major
    average (per-company moments summed) are compared when ``check``.
    """
    sl = slice(start, start + length)
    eligible = start - xi_steps >= 0
    blocks = {
        "C": dense.value[rows, sl] ** m,
        "U": dense.volume[rows, sl] ** m,
    }
    if eligible:
        past = dense.price[rows, start - xi_steps:start - xi_steps + length]
        blocks["S"] = (past * dense.volume[rows, sl]) ** m

    avg, raw, exact = {}, {}, {}
    for kind, X in blocks.items():
        if X.shape[0] == 0:
            avg[kind], raw[kind], exact[kind] = 0.0, 0.0, (0.0,)
            continue
        exact[kind] = exact_expansion(X)
        raw[kind] = math.fsum(exact[kind])
        avg[kind] = raw[kind] / length
        if check:
            time_major = math.fsum(exact_row_sums(X.T)) / length
            company_major = math.fsum(exact_row_sums(X) / length)
            if not (_relclose(time_major, avg[kind], INTERCHANGE_RTOL)
                    and _relclose(company_major, avg[kind], INTERCHANGE_RTOL)):
                raise ConsistencyError(
                    f"interchange of sums failed for {kind}(m={m}): "
                    f"{time_major!r} vs {company_major!r}")
    if not eligible:
        avg["S"] = raw["S"] = math.nan
        exact["S"] = (math.nan,)
    return avg, raw, exact


def _collective(dense, rows_by_m, level, cell, time_index, start, length, cfg, check=True):
    n = cfg.n_max
    C, U, S = np.zeros(n), np.zeros(n), np.zeros(n)
    Cs, Us, Ss = np.zeros(n), np.zeros(n), np.zeros(n)
    count = np.zeros(n, dtype=np.int64)
    exact = {"C": [], "U": [], "S": []}
    for m in range(1, n + 1):
        rows = rows_by_m[m]
        avg, raw, ex = _window_block(dense, rows, start, length, cfg.xi_steps, m, check)
        C[m - 1], U[m - 1], S[m - 1] = avg["C"], avg["U"], avg["S"]
        Cs[m - 1], Us[m - 1], Ss[m - 1] = raw["C"], raw["U"], raw["S"]
        count[m - 1] = len(rows)
        for k in exact:
            exact[k].append(ex[k])
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where((count > 0) & (Us > 0), Cs / Us, np.nan)
        r = np.where((count > 0) & (Ss > 0), Cs / Ss, np.nan)
    return CollectiveMoments(
        level=level, cell=cell, time_index=time_index, start=start, length=length,
        k_x=cfg.k_x, k_m=cfg.k_m, xi_steps=cfg.xi_steps,
        C=C, U=U, S=S, p=p, r=r, C_sum=Cs, U_sum=Us, S_sum=Ss, count=count,
        return_eligible=bool(start - cfg.xi_steps >= 0),
        exact={k: tuple(v) for k, v in exact.items()},
    )


def collective_moments(series, grid, cell, cfg, check=True):
    """Collective moments of one cell on the ``k_x * N`` window grid.

    Each average is computed as the time mean of per-step cell sums and
    cross-checked against the sum of per-company time means; a mismatch
    beyond 1e-12 relative raises :class:`ConsistencyError`.
    """
    dense = _dense(series)
    _check_members(dense, grid)
    cell = tuple(cell)
    length = cfg.cell_length
    starts = window_starts(dense.n_steps, length)
    if len(starts) == 0:
        raise InputError(f"series of {dense.n_steps} steps is shorter than the cell window k_x*N={length}")
    rows_by_m = {m: _rows_for(dense, grid.members(cell, m)) for m in range(1, cfg.n_max + 1)}
    return [_collective(dense, rows_by_m, "cell", cell, k, int(s), length, cfg, check)
            for k, s in enumerate(starts)]


def market_moments(series, cfg, check=True):
    """Whole-market collective moments on the ``k_m * k_x * N`` window grid."""
    dense = _dense(series)
    length = cfg.market_length
    starts = window_starts(dense.n_steps, length)
    if len(starts) == 0:
        raise InputError(
            f"series of {dense.n_steps} steps is shorter than the market window k_m*k_x*N={length}")
    rows = np.arange(len(dense.companies))
    rows_by_m = {m: rows for m in range(1, cfg.n_max + 1)}
    return [_collective(dense, rows_by_m, "market", WHOLE_MARKET, k, int(s), length, cfg, check)
            for k, s in enumerate(starts)]


def collective_return(cm):
    """Return moments ``C / S`` of a collective window, orders ``1..n``."""
    S = np.asarray(cm.S, dtype=float)
    if not cm.return_eligible or np.any(~(S > 0)):
        raise DegenerateError(
            f"degenerate past value in {cm.level} {cm.cell_label} window {cm.time_index}")
    return np.asarray(cm.C, dtype=float) / S


def collective_price(cm):
    U = np.asarray(cm.U, dtype=float)
    if np.any(~(U > 0)):
        raise DegenerateError(f"degenerate volume in {cm.level} {cm.cell_label} window {cm.time_index}")
    return np.asarray(cm.C, dtype=float) / U


def markowitz_portfolio_return(series, grid, cell, cfg):
    """Portfolio return of the cell's companies, one value per cell window.

    Computed as total sale value over total purchase value of every
    company in the cell (order-1 membership) across the window, directly
    from the ticks and without going through moments.  ``cell`` may be
    ``WHOLE_MARKET`` to use every company.
    """
    dense = _dense(series)
    if cell is WHOLE_MARKET:
        companies = list(dense.companies)
        length = cfg.market_length
    else:
        companies = grid.members(tuple(cell), 1)
        length = cfg.cell_length
    xi = cfg.xi_steps
    out = []
    for s in window_starts(dense.n_steps, length):
        if s - xi < 0:
            out.append(math.nan)
            continue
        sold, bought = [], []
        for q in companies:
            row = dense.companies.index(q)
            for i in range(s, s + length):
                sold.append(dense.value[row, i])
                bought.append(dense.price[row, i - xi] * dense.volume[row, i])
        den = math.fsum(bought)
        if not den > 0:
            raise DegenerateError(f"degenerate portfolio purchase value in window starting {s}")
        out.append(math.fsum(sold) / den)
    return np.array(out)


def sum_over_cells(cells, kind, m):
    """Exact total of a raw sum across cell results for one window.

    Agrees bit for bit with the whole-market raw sum when the cells
    partition the market.
    """
    return sum_expansions(cm.exact[kind][m - 1] for cm in cells)


def aggregate(series, grid, cfg, check=True):
    """Every occupied cell's windows followed by the market's.

    Returns ``(cell_results, market_results)``; cell results are ordered
    by cell index, then window.
    """
    dense = _dense(series)
    cells = []
    for cell in grid.occupied():
        cells.extend(collective_moments(dense, grid, cell, cfg, check))
    return cells, market_moments(dense, cfg, check)


def aggregate_rows(cells, market, markowitz=None):
    """Rows for the aggregate CSV.

    ``markowitz`` optionally maps ``(cell_label, time_index)`` to
    ``(r_direct, relative_deviation)`` for order 1.
    """
    for cm in list(cells) + list(market):
        for kind in ("C", "U", "S", "p", "r", "C_sum", "U_sum", "S_sum", "count"):
            arr = getattr(cm, kind)
            for m, v in enumerate(arr, start=1):
                yield (cm.level, cm.cell_label, cm.time_index, kind, m, v)
        if markowitz is not None and (cm.cell_label, cm.time_index) in markowitz:
            r_direct, dev = markowitz[(cm.cell_label, cm.time_index)]
            yield (cm.level, cm.cell_label, cm.time_index, "r_markowitz", 1, r_direct)
            yield (cm.level, cm.cell_label, cm.time_index, "markowitz_dev", 1, dev)


def write_aggregate_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_CSV_HEADER)
    for level, cell, k, kind, m, v in rows:
        value = str(int(v)) if kind == "count" else repr(float(v))
        w.writerow((level, cell, k, kind, m, value))
    return buf.getvalue().encode("utf-8")
