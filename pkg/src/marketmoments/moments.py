"""Market-based statistical moments of a single instrument.

For a window of ``N`` consecutive ticks with values ``C_i``, volumes ``U_i``
and prices ``p_i = C_i / U_i`` the order-``m`` moments are::

    C(m)  = mean(C_i**m)                 trade value
    U(m)  = mean(U_i**m)                 trade volume
    S(m)  = mean((p_{i-xi} * U_i)**m)    past value, price xi steps back
    p(m)  = C(m) / U(m)                  market-based price moment
    r(m)  = C(m) / S(m)                  market-based return moment
    pi(m) = mean(p_i**m)                 frequency-based price moment

``p(1)`` is the VWAP.  ``p(m)`` and ``pi(m)`` agree only when every volume
is 1.

Windows are half-open blocks ``[k*N, (k+1)*N)`` sharing origin step 0.  A
``stride`` smaller than ``N`` turns them into a moving window.
"""

import io
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._summation import exact_row_sums
from .errors import (DegenerateError, InputError, MomentOverflowError, NumericError,
                     ShiftOutOfRangeError)
from .trade_data import DenseSeries, TickSeries, to_dense

OVERFLOW_LIMIT = 1e300
MOMENT_CSV_HEADER = ("company", "window", "center_step", "kind", "m", "value")
KINDS = ("C", "U", "S", "p", "r", "pi")


@dataclass(frozen=True)
class WindowConfig:
    N: int
    xi_steps: int = 0
    n_max: int = 4
    stride: int = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InputError(f"N must be a positive integer, got {self.N!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InputError(f"n_max must be a positive integer, got {self.n_max!r}")
        if int(self.xi_steps) != self.xi_steps or self.xi_steps < 0:
            raise InputError(f"xi_steps must be a non-negative integer, got {self.xi_steps!r}")
        if self.stride is not None and not 1 <= self.stride <= self.N:
            raise InputError(f"stride must lie in [1, N], got {self.stride!r}")

    @property
    def step(self):
        return self.N if self.stride is None else self.stride


@dataclass(frozen=True)
class Window:
    company: str
    index: int
    start: int
    length: int
    return_eligible: bool

    @property
    def stop(self):
        return self.start + self.length

    @property
    def center_step(self):
        return self.start + self.length // 2


def window_starts(n_steps, length, stride=None):
    stride = length if stride is None else stride
    if length > n_steps:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_steps - length + 1, stride, dtype=np.int64)


def _dense(series):
    if isinstance(series, DenseSeries):
        return series
    if isinstance(series, TickSeries):
        return to_dense(series)
    raise TypeError(f"expected TickSeries or DenseSeries, got {type(series).__name__}")


def window_partition(series, cfg):
    """Split each company's ticks into windows of ``cfg.N`` steps.

    Trailing steps that do not fill a whole window are dropped.  A window
    is return-eligible when every step ``xi_steps`` before it exists.
    """
    dense = _dense(series)
    out = []
    for q in dense.companies:
        for k, s in enumerate(window_starts(dense.n_steps, cfg.N, cfg.stride)):
            out.append(Window(q, k, int(s), cfg.N, bool(s - cfg.xi_steps >= 0)))
    return out


def _check_overflow(x, n_max, what):
    """Raise if ``max|x|**m`` leaves the safe floating range for some m."""
    top = np.max(np.abs(x)) if np.size(x) else 0.0
    if top <= 1.0:
        return
    m_bad = math.floor(math.log(OVERFLOW_LIMIT) / math.log(top)) + 1
    if m_bad <= n_max:
        raise MomentOverflowError(m_bad, f"{what} up to {top:.6g}")


def _power_means(x, n_max):
    """Exact means of ``x**m`` along the last axis, shape ``(n_max, ...)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max,) + x.shape[:-1])
    xm = np.ones_like(x)
    for m in range(n_max):
        xm = xm * x
        out[m] = exact_row_sums(xm) / x.shape[-1]
    return out


@dataclass(frozen=True)
class TradeMoments:
    C: np.ndarray
    U: np.ndarray


def trade_moments(values, volumes, n_max):
    """Value and volume moments of one window, orders ``1..n_max``."""
    values = np.asarray(values, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    _check_overflow(values, n_max, "trade value")
    _check_overflow(volumes, n_max, "trade volume")
    return TradeMoments(_power_means(values, n_max), _power_means(volumes, n_max))


def price_moments(C, U):
    C = np.asarray(C, dtype=float)
    U = np.asarray(U, dtype=float)
    if np.any(U <= 0):
        m = int(np.argmax(U <= 0)) + 1
        raise DegenerateError(f"degenerate volume: U(m={m}) is not positive")
    return C / U


def frequency_price_moments(prices, n_max):
    prices = np.asarray(prices, dtype=float)
    if prices.shape[-1] == 0:
        raise InputError("empty window")
    _check_overflow(prices, n_max, "price")
    return _power_means(prices, n_max)


def past_value_moments(past_prices, volumes, n_max):
    """Moments of past value: volume now, priced ``xi`` steps back."""
    past_prices = np.asarray(past_prices, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    if past_prices.shape != volumes.shape:
        raise ShiftOutOfRangeError(
            f"shift out of range: {past_prices.shape[-1]} past prices for {volumes.shape[-1]} ticks")
    if not np.all(np.isfinite(past_prices)):
        raise ShiftOutOfRangeError("shift out of range: past price missing")
    past_values = past_prices * volumes
    _check_overflow(past_values, n_max, "past value")
    return _power_means(past_values, n_max)


def return_moments(C, S):
    C = np.asarray(C, dtype=float)
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0):
        m = int(np.argmax(S <= 0)) + 1
        raise DegenerateError(f"degenerate past value: S(m={m}) is not positive")
    return C / S


def price_from_return(r, S, U):
    """Price moments recovered from return, past-value and volume moments."""
    U = np.asarray(U, dtype=float)
    if np.any(U <= 0):
        raise DegenerateError("degenerate volume")
    return np.asarray(r, dtype=float) * np.asarray(S, dtype=float) / U


@dataclass(frozen=True)
class CentralStats:
    mean: float
    variance: float
    third_central: float = math.nan
    skewness: float = math.nan


def derived_central_stats(p, var_rtol=1e-12):
    """Mean, variance and skewness from raw price moments ``p[0..]``.

    A variance within ``var_rtol * mean**2`` of zero is rounding noise and
    is reported as 0.  Volume-weighted moments use different weights for
    ``p(2)`` (``U**2``) and ``p(1)`` (``U``), so a clearly negative
    variance can be genuine; it is returned as computed.  Skewness is NaN
    whenever the variance is not positive.
    """
    p = np.asarray(p, dtype=float)
    mean = float(p[0])
    if len(p) < 2:
        return CentralStats(mean, math.nan)
    var = float(p[1] - p[0] ** 2)
    if abs(var) <= var_rtol * mean * mean:
        var = 0.0
    degenerate = var <= 0.0
    if len(p) < 3:
        return CentralStats(mean, var)
    third = float(p[2] - 3.0 * p[1] * p[0] + 2.0 * p[0] ** 3)
    skew = math.nan if degenerate else third / var ** 1.5
    return CentralStats(mean, var, third, skew)


@dataclass(frozen=True, eq=False)
class MomentSet:
    """All moments of one (company, window), arrays indexed ``m-1``.

    With pre-scaling the value, volume and past-value moments are stored
    in units of their window means: the raw moment is
    ``C[m-1] * value_scale**m`` and likewise for ``U`` and ``S``.  The
    price, return and frequency moments are always in raw units.
    """

    company: str
    window: int
    start: int
    length: int
    C: np.ndarray
    U: np.ndarray
    p: np.ndarray
    pi: np.ndarray
    S: np.ndarray = None
    r: np.ndarray = None
    value_scale: float = 1.0
    volume_scale: float = 1.0
    past_value_scale: float = 1.0

    @property
    def center_step(self):
        return self.start + self.length // 2

    @property
    def n_max(self):
        return len(self.C)

    @property
    def return_eligible(self):
        return self.S is not None

    def raw(self, kind):
        arr = getattr(self, kind)
        if arr is None:
            return None
        scale = {"C": self.value_scale, "U": self.volume_scale, "S": self.past_value_scale}.get(kind, 1.0)
        if scale == 1.0:
            return arr
        m = np.arange(1, len(arr) + 1)
        with np.errstate(over="ignore"):
            return arr * scale ** m

    def stats(self):
        return derived_central_stats(self.p[:3])

    @property
    def mean(self):
        return self.stats().mean

    @property
    def variance(self):
        return self.stats().variance

    @property
    def skewness(self):
        return self.stats().skewness


def _scaled_power_means(x, n_max, prescale, what):
    """Power means of windows ``x`` (shape (W, N)); returns (means, scales)."""
    if prescale:
        scale = exact_row_sums(np.abs(x)) / x.shape[-1]
        scale = np.where(scale > 0, scale, 1.0)
        xs = x / scale[:, None]
    else:
        scale = np.ones(x.shape[0])
        xs = x
    _check_overflow(xs, n_max, what)
    return _power_means(xs, n_max), scale


def _ratio(num, num_scale, den, den_scale, what):
    """``(num * num_scale**m) / (den * den_scale**m)`` per window and m."""
    if np.any(den <= 0):
        raise DegenerateError(f"degenerate {what}")
    n_max = num.shape[0]
    m = np.arange(1, n_max + 1)[:, None]
    with np.errstate(over="ignore"):
        factor = np.exp(m * (np.log(num_scale) - np.log(den_scale))[None, :])
        out = num / den * factor
    if not np.all(np.isfinite(out)):
        bad = int(np.argmax(~np.all(np.isfinite(out), axis=1))) + 1
        raise MomentOverflowError(bad, f"{what} ratio")
    return out


def _company_block(price, volume, value, starts, cfg, prescale):
    """Moments for one company over windows starting at ``starts``."""
    N, xi, n = cfg.N, cfg.xi_steps, cfg.n_max
    idx = starts[:, None] + np.arange(N)[None, :]
    Cw, Uw, Pw = value[idx], volume[idx], price[idx]

    C, sC = _scaled_power_means(Cw, n, prescale, "trade value")
    U, sU = _scaled_power_means(Uw, n, prescale, "trade volume")
    p = _ratio(C, sC, U, sU, "volume")
    _check_overflow(Pw, n, "price")
    pi = _power_means(Pw, n)

    eligible = starts - xi >= 0
    S = np.full_like(C, np.nan)
    sS = np.ones(len(starts))
    r = np.full_like(C, np.nan)
    if eligible.any():
        Sw = price[idx[eligible] - xi] * Uw[eligible]
        S_e, sS_e = _scaled_power_means(Sw, n, prescale, "past value")
        S[:, eligible] = S_e
        sS[eligible] = sS_e
        r[:, eligible] = _ratio(C[:, eligible], sC[eligible], S_e, sS_e, "past value")
    return C, U, S, p, r, pi, sC, sU, sS, eligible


def compute_moments(series, cfg, prescale=False, workers=1):
    """Moment sets for every (company, window), ordered by that key.

    Parameters
    ----------
    series : TickSeries or DenseSeries
    cfg : WindowConfig
    prescale : bool
        Divide values, volumes and past values by their window means
        before raising them to powers (see :class:`MomentSet`).
    workers : int
        Thread count.  Sums are correctly rounded, so the output does not
        depend on it.
    """
    dense = _dense(series)
    starts = window_starts(dense.n_steps, cfg.N, cfg.stride)
    if len(starts) == 0:
        return []

    chunk = max(1, math.ceil(len(starts) / max(1, workers)))
    jobs = []
    for q in range(len(dense.companies)):
        for lo in range(0, len(starts), chunk):
            jobs.append((q, lo, starts[lo:lo + chunk]))

    def block(q, st):
        return _company_block(dense.price[q], dense.volume[q], dense.value[q], st, cfg, prescale)

    def run(job):
        q, lo, st = job
        try:
            return job, block(q, st)
        except NumericError:
            # locate the first failing window so the message can name it
            for w in range(len(st)):
                try:
                    block(q, st[w:w + 1])
                except NumericError as exc:
                    s0 = int(st[w])
                    exc.args = (f"company {dense.companies[q]} window {lo + w} "
                                f"(steps {s0}..{s0 + cfg.N - 1}): {exc}",)
                    exc.window = (dense.companies[q], lo + w)
                    raise
            raise

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    out = []
    for (q, lo, st), (C, U, S, p, r, pi, sC, sU, sS, elig) in results:
        for w in range(len(st)):
            out.append(MomentSet(
                company=dense.companies[q], window=lo + w, start=int(st[w]), length=cfg.N,
                C=C[:, w].copy(), U=U[:, w].copy(), p=p[:, w].copy(), pi=pi[:, w].copy(),
                S=S[:, w].copy() if elig[w] else None,
                r=r[:, w].copy() if elig[w] else None,
                value_scale=float(sC[w]), volume_scale=float(sU[w]), past_value_scale=float(sS[w]),
            ))
    return out


def moment_rows(sets):
    for ms in sets:
        for kind in KINDS:
            arr = ms.raw(kind)
            if arr is None:
                continue
            for m, v in enumerate(arr, start=1):
                yield (ms.company, ms.window, ms.center_step, kind, m, float(v))


def write_moment_csv(sets):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MOMENT_CSV_HEADER)
    for row in moment_rows(sets):
        w.writerow(row[:5] + (repr(row[5]),))
    return buf.getvalue().encode("utf-8")


def parse_moment_csv(data):
    """Read moment CSV rows into ``{(company, window): {kind: {m: value}}}``."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text, newline=""))
    head = next(reader, None)
    if head is None or tuple(head) != MOMENT_CSV_HEADER:
        raise InputError(f"malformed moment CSV header {head!r}")
    out = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            q, k, _, kind, m, v = row
            key = (q, int(k))
            out.setdefault(key, {}).setdefault(kind, {})[int(m)] = float(v)
        except ValueError:
            raise InputError(f"row {lineno}: malformed moment row {row!r}") from None
    return out
