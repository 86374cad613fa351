"""Tick-level trade series on a uniform step grid.

A trade at step ``i`` happens at time ``t0 + i * eps``; only the integer
step is stored because every window in the package is a step count.  Each
tick carries price, volume and trade value with ``value = price * volume``.

The CSV formats handled here are::

    step,company,price,volume        (ticks; value is derived on read)
    company,m,j,coord                (risk coordinates, m and j 1-based)
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CSVFormatError, InputError

VALUE_RTOL = 1e-9

TICK_HEADER = ("step", "company", "price", "volume")
RISK_HEADER = ("company", "m", "j", "coord")


@dataclass(frozen=True)
class TickRecord:
    step: int
    company: str
    price: float
    volume: float
    value: float = None

    def __post_init__(self):
        if self.value is None:
            object.__setattr__(self, "value", self.price * self.volume)


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Immutable column store of ticks.

    Ticks keep the order they were given in.  Nothing is enforced at
    construction beyond array shapes; use :func:`validate_series` to check
    the trade identity, positivity, uniqueness and density rules.
    """

    step: np.ndarray
    company: np.ndarray
    price: np.ndarray
    volume: np.ndarray
    value: np.ndarray
    filled: np.ndarray = None

    def __post_init__(self):
        n = len(self.step)
        object.__setattr__(self, "step", _frozen(self.step, np.int64))
        object.__setattr__(self, "company", _frozen([str(c) for c in self.company], object))
        for name in ("price", "volume", "value"):
            object.__setattr__(self, name, _frozen(getattr(self, name), float))
        filled = np.zeros(n, bool) if self.filled is None else self.filled
        object.__setattr__(self, "filled", _frozen(filled, bool))
        for name in ("company", "price", "volume", "value", "filled"):
            if len(getattr(self, name)) != n:
                raise InputError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")

    @classmethod
    def from_records(cls, records):
        records = list(records)
        return cls(
            step=[r.step for r in records],
            company=[r.company for r in records],
            price=[r.price for r in records],
            volume=[r.volume for r in records],
            value=[r.value for r in records],
        )

    @classmethod
    def from_arrays(cls, step, company, price, volume):
        price = np.asarray(price, float)
        volume = np.asarray(volume, float)
        return cls(step=step, company=company, price=price, volume=volume, value=price * volume)

    def __len__(self):
        return len(self.step)

    def __eq__(self, other):
        if not isinstance(other, TickSeries):
            return NotImplemented
        return (
            len(self) == len(other)
            and np.array_equal(self.step, other.step)
            and list(self.company) == list(other.company)
            and np.array_equal(self.price, other.price)
            and np.array_equal(self.volume, other.volume)
            and np.array_equal(self.value, other.value)
            and np.array_equal(self.filled, other.filled)
        )

    @property
    def companies(self):
        return tuple(sorted(set(self.company.tolist())))

    @property
    def max_step(self):
        return int(self.step.max()) if len(self) else -1

    def records(self):
        for i in range(len(self)):
            yield TickRecord(
                int(self.step[i]), self.company[i], float(self.price[i]),
                float(self.volume[i]), float(self.value[i]),
            )


@dataclass(frozen=True)
class DenseSeries:
    """Company-by-step matrices of a validated dense series.

    Row ``q`` belongs to ``companies[q]``; column ``i`` is step ``i``.
    """

    companies: tuple
    price: np.ndarray
    volume: np.ndarray
    value: np.ndarray

    @property
    def n_steps(self):
        return self.price.shape[1]

    def row(self, company):
        return self.companies.index(company)


@dataclass(frozen=True)
class RiskVector:
    """Risk coordinates of one company, indexed by (moment order, risk)."""

    company: str
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.size == 0:
            raise InputError(f"risk coordinates of {self.company!r} must be a non-empty (n, J) array")
        if not np.all((coords >= 0.0) & (coords <= 1.0)):
            raise InputError(f"risk coordinates of {self.company!r} fall outside [0, 1]")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @property
    def n_moments(self):
        return self.coords.shape[0]

    @property
    def n_risks(self):
        return self.coords.shape[1]


@dataclass(frozen=True)
class Violation:
    kind: str
    company: str = None
    step: int = None
    detail: str = ""

    def __str__(self):
        where = []
        if self.company is not None:
            where.append(f"company={self.company}")
        if self.step is not None:
            where.append(f"step={self.step}")
        loc = f" [{', '.join(where)}]" if where else ""
        return f"{self.kind}{loc}{': ' + self.detail if self.detail else ''}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return not self.violations

    def kinds(self):
        return {v.kind for v in self.violations}

    def __str__(self):
        if self.ok:
            return "series valid"
        return "\n".join(str(v) for v in self.violations)


def validate_series(series, rtol=VALUE_RTOL):
    """Check a tick series against the trade model.

    Reported violation kinds: ``negative step``, ``non-positive price``,
    ``non-positive volume``, ``value mismatch``, ``duplicate`` and
    ``missing step``.  Gap-filled ticks (see :func:`repair_gaps`) may carry
    zero volume and zero value.  The series is accepted iff the returned
    report is empty.
    """
    step, price, volume, value = series.step, series.price, series.volume, series.value
    filled = series.filled
    company = series.company
    with np.errstate(invalid="ignore", over="ignore"):
        pu = price * volume
        mismatch = ~np.isfinite(value) | (np.abs(value - pu) > rtol * np.abs(pu))
    bad_fill = filled & ~((volume == 0) & (value == 0))
    live = ~filled
    checks = [
        ("negative step", step < 0, None),
        ("non-positive price", ~(np.isfinite(price) & (price > 0)), lambda i: f"price={float(price[i])!r}"),
        ("value mismatch", bad_fill, lambda i: "filled tick must carry zero volume"),
        ("non-positive volume", live & ~(np.isfinite(volume) & (volume > 0)),
         lambda i: f"volume={float(volume[i])!r}"),
        ("value mismatch", live & mismatch,
         lambda i: f"value={float(value[i])!r} but price*volume={float(pu[i])!r}"),
    ]
    found = []
    for order, (kind, mask, detail) in enumerate(checks):
        for i in np.flatnonzero(mask).tolist():
            found.append((i, order, Violation(kind, company[i], int(step[i]),
                                              detail(i) if detail else "")))
    out = [v for _, _, v in sorted(found, key=lambda t: t[:2])]

    if len(series):
        names, code = np.unique(company.astype(str), return_inverse=True)
        n_steps = series.max_step + 1
        ok = step >= 0
        counts = np.zeros((len(names), max(n_steps, 0)), dtype=np.int64)
        np.add.at(counts, (code[ok], step[ok]), 1)
        for q in range(len(names)):
            for s in np.flatnonzero(counts[q] > 1).tolist():
                out.append(Violation("duplicate", str(names[q]), s, f"{counts[q, s]} ticks"))
            for s in np.flatnonzero(counts[q] == 0).tolist():
                out.append(Violation("missing step", str(names[q]), s))
    return ValidationReport(tuple(out))


def repair_gaps(series):
    """Fill per-company gaps with zero-volume ticks at the last known price.

    Leading gaps (before a company's first trade) take the first traded
    price.  Filled ticks are flagged so validation accepts their zero
    volume.  Duplicates are not repaired.
    """
    by_company = {}
    for i in range(len(series)):
        by_company.setdefault(series.company[i], {})[int(series.step[i])] = i
    max_step = series.max_step
    step, company, price, volume, value, filled = [], [], [], [], [], []
    for q in sorted(by_company):
        idx = by_company[q]
        first = min(idx)
        last_price = series.price[idx[first]]
        for s in range(0, max_step + 1):
            if s in idx:
                i = idx[s]
                last_price = series.price[i]
                step.append(s)
                company.append(q)
                price.append(series.price[i])
                volume.append(series.volume[i])
                value.append(series.value[i])
                filled.append(bool(series.filled[i]))
            else:
                step.append(s)
                company.append(q)
                price.append(last_price)
                volume.append(0.0)
                value.append(0.0)
                filled.append(True)
    return TickSeries(step, company, price, volume, value, filled)


def to_dense(series):
    """Company-by-step matrices; raises :class:`InputError` unless valid."""
    report = validate_series(series)
    if not report.ok:
        first = report.violations[0]
        raise InputError(f"series rejected ({len(report.violations)} violations), first: {first}")
    companies = series.companies
    row = {q: k for k, q in enumerate(companies)}
    n_steps = series.max_step + 1
    shape = (len(companies), n_steps)
    price = np.empty(shape)
    volume = np.empty(shape)
    value = np.empty(shape)
    r = np.array([row[q] for q in series.company.tolist()], dtype=np.int64)
    price[r, series.step] = series.price
    volume[r, series.step] = series.volume
    value[r, series.step] = series.value
    return DenseSeries(companies, price, volume, value)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic market.

    Prices follow a geometric random walk with normal log increments
    ``N(drift, volatility**2)`` starting at ``price0``.  Volumes are i.i.d.
    lognormal with arithmetic mean ``volume_mean`` and log-sd
    ``volume_sigma``.  Risk coordinates are Beta(``risk_a``, ``risk_b``).
    """

    n_companies: int = 1
    n_steps: int = 1000
    price0: float = 100.0
    drift: float = 0.0
    volatility: float = 0.01
    volume_mean: float = 100.0
    volume_sigma: float = 0.5
    n_moments: int = 4
    n_risks: int = 1
    risk_a: float = 1.0
    risk_b: float = 1.0

    def check(self):
        if self.n_companies <= 0:
            raise InputError("companies must be positive")
        if self.n_steps <= 0:
            raise InputError("steps must be positive")
        if self.n_moments <= 0 or self.n_risks <= 0:
            raise InputError("risk coordinate shape must be positive")
        if not self.price0 > 0:
            raise InputError("price0 must be positive")
        if not self.volume_mean > 0:
            raise InputError("volume mean must be positive")
        if self.volatility < 0 or self.volume_sigma < 0:
            raise InputError("distribution scales must be non-negative")
        if not (self.risk_a > 0 and self.risk_b > 0):
            raise InputError("risk Beta parameters must be positive")


def generate_synthetic(spec, seed):
    """Draw a dense synthetic tick series and matching risk vectors.

    Returns ``(series, risks)`` where ``risks`` maps company id to
    :class:`RiskVector`.  Output is a deterministic function of
    ``(spec, seed)``.
    """
    spec.check()
    rng = np.random.default_rng(seed)
    Q, T = spec.n_companies, spec.n_steps
    names = [f"Q{q:05d}" for q in range(Q)]

    incr = rng.normal(spec.drift, spec.volatility, size=(Q, T - 1)) if spec.volatility > 0 \
        else np.full((Q, T - 1), spec.drift)
    logp = np.concatenate([np.zeros((Q, 1)), np.cumsum(incr, axis=1)], axis=1)
    price = spec.price0 * np.exp(logp)

    mu = math.log(spec.volume_mean) - 0.5 * spec.volume_sigma ** 2
    if spec.volume_sigma > 0:
        volume = rng.lognormal(mu, spec.volume_sigma, size=(Q, T))
    else:
        volume = np.full((Q, T), spec.volume_mean)

    coords = rng.beta(spec.risk_a, spec.risk_b, size=(Q, spec.n_moments, spec.n_risks))

    steps = np.tile(np.arange(T), Q)
    company = np.repeat(np.array(names, dtype=object), T)
    series = TickSeries.from_arrays(steps, company, price.ravel(), volume.ravel())
    risks = {names[q]: RiskVector(names[q], coords[q]) for q in range(Q)}
    return series, risks


def _as_text(data):
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CSVFormatError(f"input is not UTF-8: {exc}") from None
    return data


def _parse_float(text, name, row):
    try:
        x = float(text)
    except ValueError:
        raise CSVFormatError(f"{name} {text!r} is not numeric", row) from None
    if not math.isfinite(x):
        raise CSVFormatError(f"{name} {text!r} is not finite", row)
    return x


def _parse_int(text, name, row):
    text = text.strip()
    if not text.isdigit():
        raise CSVFormatError(f"{name} {text!r} is not a non-negative base-10 integer", row)
    return int(text)


def _rows(data, header):
    reader = csv.reader(io.StringIO(_as_text(data), newline=""))
    try:
        head = next(reader)
    except StopIteration:
        raise CSVFormatError("empty input; expected header " + ",".join(header), 1) from None
    if tuple(h.strip() for h in head) != header:
        raise CSVFormatError(f"malformed header {','.join(head)!r}; expected {','.join(header)!r}", 1)
    for lineno, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise CSVFormatError(f"expected {len(header)} fields, got {len(fields)}", lineno)
        yield lineno, fields


def parse_tick_csv(data):
    """Parse tick CSV bytes (or text) into a :class:`TickSeries`.

    Rows are numbered from 1 at the header, so the first data row is row 2.
    """
    step, company, price, volume = [], [], [], []
    for row, (s, q, p, u) in _rows(data, TICK_HEADER):
        s = _parse_int(s, "step", row)
        p = _parse_float(p, "price", row)
        u = _parse_float(u, "volume", row)
        if p <= 0:
            raise CSVFormatError(f"price must be positive, got {p!r}", row)
        if u <= 0:
            raise CSVFormatError(f"volume must be positive, got {u!r}", row)
        if not q:
            raise CSVFormatError("empty company id", row)
        step.append(s)
        company.append(q)
        price.append(p)
        volume.append(u)
    return TickSeries.from_arrays(step, company, price, volume)


def write_tick_csv(series):
    if series.filled.any():
        raise InputError("gap-filled ticks have zero volume and cannot be written as tick CSV")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TICK_HEADER)
    for s, q, p, u in zip(series.step.tolist(), series.company.tolist(),
                          series.price.tolist(), series.volume.tolist()):
        w.writerow((s, q, repr(p), repr(u)))
    return buf.getvalue().encode("utf-8")


def parse_risk_csv(data):
    """Parse risk CSV into ``{company: RiskVector}``."""
    entries = {}
    for row, (q, m, j, x) in _rows(data, RISK_HEADER):
        m = _parse_int(m, "m", row)
        j = _parse_int(j, "j", row)
        x = _parse_float(x, "coord", row)
        if m < 1 or j < 1:
            raise CSVFormatError("m and j are 1-based", row)
        if not 0.0 <= x <= 1.0:
            raise CSVFormatError(f"coord {x!r} outside [0, 1]", row)
        cell = entries.setdefault(q, {})
        if (m, j) in cell:
            raise CSVFormatError(f"duplicate coordinate for {q} m={m} j={j}", row)
        cell[(m, j)] = x
    out = {}
    for q, cell in entries.items():
        n = max(m for m, _ in cell)
        J = max(j for _, j in cell)
        if len(cell) != n * J:
            raise CSVFormatError(f"company {q} has an incomplete {n}x{J} coordinate matrix")
        coords = np.empty((n, J))
        for (m, j), x in cell.items():
            coords[m - 1, j - 1] = x
        out[q] = RiskVector(q, coords)
    return out


def write_risk_csv(risks):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RISK_HEADER)
    items = risks.values() if isinstance(risks, dict) else risks
    for rv in sorted(items, key=lambda r: r.company):
        for m in range(rv.n_moments):
            for j in range(rv.n_risks):
                w.writerow((rv.company, m + 1, j + 1, repr(float(rv.coords[m, j]))))
    return buf.getvalue().encode("utf-8")


def read_ticks(path):
    with open(path, "rb") as fh:
        return parse_tick_csv(fh.read())


def read_risks(path):
    with open(path, "rb") as fh:
        return parse_risk_csv(fh.read())
