"""Densities from a finite set of raw moments.

Given raw moments ``mu_1..mu_n`` of a price (or return) the characteristic
function is approximated by the exponential of a truncated cumulant
series plus an even regularizing term::

    F(x) = exp( sum_{m<=n} a_m (i x)**m / m!  -  b x**(2k) ),   2k > n, b > 0

The ``a_m`` are the cumulants of the input moments, so the first ``n``
derivatives of ``F`` at zero reproduce the inputs whatever ``b`` and ``2k``
are.  A polynomial tail ``Q(x) = sum_{m=n+1}^{2K} a_m x**m`` with
``a_2K > 0`` may replace ``b x**(2k)``.

The density is the inverse Fourier transform::

    eta(p) = 1/(2 pi) * integral F(x) exp(-i x p) dx

evaluated by trapezoidal quadrature on a uniform x grid.  The
``1/(2 pi)`` constant is what makes ``eta`` integrate to one for this
sign convention of ``F``.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .errors import (DegenerateError, InputError, InsufficientCoverageError, InsufficientDecayError,
                     NegativeDensityError)

DEFAULT_DECAY_TOL = 1e-12
DEFAULT_NEGATIVITY_BUDGET = 1e-3
DEFAULT_COVERAGE_TOL = 1e-6


def moments_to_cumulants(moments):
    """Cumulants ``a_1..a_n`` of raw moments ``mu_1..mu_n``.

    Uses ``a_n = mu_n - sum_{k=1}^{n-1} C(n-1, k-1) a_k mu_{n-k}`` with
    ``mu_0 = 1``.

    >>> moments_to_cumulants([3.0, 28 / 3])
    array([3.        , 0.33333333])
    """
    mu = np.concatenate([[1.0], np.asarray(moments, dtype=float).ravel()])
    n = len(mu) - 1
    if n < 1:
        raise InputError("need at least one moment")
    a = np.zeros(n + 1)
    for j in range(1, n + 1):
        acc = mu[j]
        for k in range(1, j):
            acc -= comb(j - 1, k - 1, exact=True) * a[k] * mu[j - k]
        a[j] = acc
    return a[1:]


def cumulants_to_moments(cumulants):
    """Inverse of :func:`moments_to_cumulants`."""
    a = np.concatenate([[0.0], np.asarray(cumulants, dtype=float).ravel()])
    n = len(a) - 1
    mu = np.zeros(n + 1)
    mu[0] = 1.0
    for j in range(1, n + 1):
        mu[j] = sum(comb(j - 1, k - 1, exact=True) * a[k] * mu[j - k] for k in range(1, j + 1))
    return mu[1:]


def _self_decaying(a):
    """True when the cumulant polynomial alone makes |F| decay."""
    n = len(a)
    if n % 2:
        return False
    return (-1) ** (n // 2) * a[-1] < 0


def default_regularizer(a, sigma=None, scale=0.05):
    """``(b, two_k)`` for cumulants ``a``.

    No regularizer is needed (``b = 0``) when the truncated series already
    decays, e.g. the Gaussian case ``n = 2`` with positive variance.
    Otherwise ``2k`` is the smallest even integer above ``n`` and
    ``b = scale * sigma**(2k) * (2k)! / (k! 2**k)``.
    """
    a = np.asarray(a, dtype=float)
    n = len(a)
    two_k = n + 1 if n % 2 else n + 2
    if _self_decaying(a):
        return 0.0, two_k
    if sigma is None:
        if n < 2 or not a[1] > 0:
            raise InputError("variance non-positive; pass sigma or an explicit regularizer")
        sigma = math.sqrt(a[1])
    k = two_k // 2
    b = scale * sigma ** two_k * math.factorial(two_k) / (math.factorial(k) * 2 ** k)
    return b, two_k


@dataclass(frozen=True, eq=False)
class CharFnApprox:
    """Regularized n-approximation of a characteristic function.

    ``a`` holds cumulant coefficients ``a_1..a_n``.  Either ``b`` and
    ``two_k`` (exponential regularizer) or ``tail`` (coefficients
    ``a_{n+1}..a_{2K}`` of a polynomial tail) complete it.  ``b = 0``
    without a tail is accepted only when the cumulant series decays on its
    own.
    """

    a: np.ndarray
    b: float = 0.0
    two_k: int = None
    tail: np.ndarray = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        if a.size == 0 or not np.all(np.isfinite(a)):
            raise InputError("cumulant coefficients must be finite and non-empty")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)
        n = len(a)
        if self.tail is not None:
            tail = np.array(self.tail, dtype=float).ravel()
            top = n + len(tail)
            if top % 2 or top <= n or not tail[-1] > 0:
                raise InputError("invalid regularizer: tail must end at an even order 2K > n with a_2K > 0")
            if self.b:
                raise InputError("invalid regularizer: use either b or a polynomial tail")
            tail.flags.writeable = False
            object.__setattr__(self, "tail", tail)
            return
        if self.b < 0 or not math.isfinite(self.b):
            raise InputError(f"invalid regularizer: b={self.b!r} must be positive")
        if self.b > 0:
            if self.two_k is None or self.two_k % 2 or self.two_k <= n:
                raise InputError(f"invalid regularizer: 2k={self.two_k!r} must be even and exceed n={n}")
        elif not _self_decaying(a):
            raise InputError("invalid regularizer: b must be positive unless the cumulant series decays")

    @property
    def n(self):
        return len(self.a)

    @property
    def leading_order(self):
        if self.tail is not None:
            return self.n + len(self.tail)
        return self.two_k if self.b > 0 else self.n

    def exponent(self, x):
        x = np.asarray(x, dtype=float)
        ix = 1j * x
        out = np.zeros(x.shape, dtype=complex)
        term = np.ones(x.shape, dtype=complex)
        for m, am in enumerate(self.a, start=1):
            term = term * ix / m
            out += am * term
        if self.tail is not None:
            for j, c in enumerate(self.tail, start=self.n + 1):
                out -= c * x ** j
        elif self.b > 0:
            out -= self.b * x ** self.two_k
        return out

    def log_envelope(self, x):
        """``log|F(x)|``."""
        return self.exponent(x).real

    def __call__(self, x):
        return np.exp(self.exponent(x))

    def scale(self):
        """A width for the distribution, used to size grids."""
        if self.n >= 2 and self.a[1] > 0:
            return math.sqrt(self.a[1])
        if self.tail is not None:
            return self.tail[-1] ** (-1.0 / self.leading_order)
        if self.b > 0:
            return self.b ** (1.0 / self.two_k)
        return 1.0

    def to_dict(self):
        return {
            "n": self.n,
            "a": self.a.tolist(),
            "b": self.b,
            "two_k": self.two_k,
            "tail": None if self.tail is None else self.tail.tolist(),
        }


def build_charfn(a, b=None, two_k=None, tail=None, sigma=None, b_scale=0.05):
    """Characteristic-function approximation for cumulants ``a``.

    When neither ``b`` nor ``tail`` is given the regularizer comes from
    :func:`default_regularizer` with ``scale=b_scale``.  The default scale
    leaves visible negative lobes for ``n >= 3`` (several per cent of the
    mass); smaller scales such as ``1e-3`` keep near-normal inputs inside
    the default negativity budget.
    """
    a = np.asarray(a, dtype=float)
    if tail is not None:
        return CharFnApprox(a, tail=tail)
    if b is None:
        b_def, k_def = default_regularizer(a, sigma, b_scale)
        b = b_def
        two_k = k_def if two_k is None else two_k
    elif two_k is None and b > 0:
        two_k = len(a) + 1 if len(a) % 2 else len(a) + 2
    return CharFnApprox(a, b=b, two_k=two_k)


@dataclass(frozen=True)
class GridSpec:
    """Evaluation grid for densities.

    Points are spread uniformly over ``center +- half_width``; by default
    the center is the mean and the half width ``range_sigmas`` standard
    deviations.  An odd point count puts the center on the grid.
    """

    n_points: int = 4097
    range_sigmas: float = 8.0
    center: float = None
    half_width: float = None

    def resolve(self, mean, sigma):
        if self.n_points < 3:
            raise InputError("density grid needs at least 3 points")
        c = mean if self.center is None else self.center
        w = self.range_sigmas * sigma if self.half_width is None else self.half_width
        if not w > 0:
            raise InputError("density grid half width must be positive")
        return c, w, np.linspace(c - w, c + w, self.n_points)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    p: np.ndarray
    eta: np.ndarray
    normalization: float
    negative_mass: float
    min_eta: float
    imag_residue: float = 0.0
    charfn: CharFnApprox = None
    x_cutoff: float = None
    x_step: float = None
    info: dict = field(default_factory=dict)

    @property
    def spacing(self):
        return float(self.p[1] - self.p[0])

    def metadata(self):
        meta = {
            "grid": {"points": len(self.p), "p_min": float(self.p[0]), "p_max": float(self.p[-1]),
                     "spacing": self.spacing},
            "normalization": self.normalization,
            "normalization_residual": abs(1.0 - self.normalization),
            "negative_mass": self.negative_mass,
            "min_eta": self.min_eta,
            "imag_residue": self.imag_residue,
            "x_cutoff": self.x_cutoff,
            "x_step": self.x_step,
        }
        if self.charfn is not None:
            meta.update(self.charfn.to_dict())
        meta.update(self.info)
        return meta


def _diagnostics(p, eta):
    norm = float(np.trapezoid(eta, p))
    neg = float(np.trapezoid(np.maximum(-eta, 0.0), p))
    return norm, neg, float(eta.min())


def find_cutoff(F, decay_tol=DEFAULT_DECAY_TOL, max_x=None):
    """Smallest probe ``X`` beyond which ``|F| < decay_tol`` on both sides.

    Probes a geometric ladder (8 rungs per octave) out to ``max_x``.
    """
    s = 1.0 / F.scale()
    max_x = 1e6 * s if max_x is None else max_x
    probes = s * 2.0 ** (np.arange(-40, 8 * 64) / 8.0)
    probes = probes[probes <= max_x]
    log_tol = math.log(decay_tol)
    env = np.maximum(F.log_envelope(probes), F.log_envelope(-probes))
    above = np.nonzero(env >= log_tol)[0]
    if len(above) == 0:
        return float(probes[0])
    last = above[-1]
    if last + 1 >= len(probes):
        raise InsufficientDecayError(
            f"|F| still above {decay_tol:g} at x={probes[-1]:.4g}; insufficient decay; increase b or 2k")
    return float(probes[last + 1])


def charfn_to_density(F, grid=None, decay_tol=DEFAULT_DECAY_TOL, x_cutoff=None,
                      negativity_budget=DEFAULT_NEGATIVITY_BUDGET, max_x_points=2 ** 20,
                      chunk=512):
    """Invert ``F`` on a uniform price grid.

    Parameters
    ----------
    F : CharFnApprox
    grid : GridSpec, optional
    decay_tol : float
        Integration stops where ``|F|`` falls below this.
    x_cutoff : float, optional
        Fixed integration limit; ``|F(+-x_cutoff)|`` must already be below
        ``decay_tol``.
    negativity_budget : float
        Largest tolerated integral of the negative part of ``eta``.
    max_x_points : int
        Cap on quadrature nodes.

    Raises
    ------
    InsufficientDecayError
        ``F`` does not decay within the cutoff or the node cap.
    NegativeDensityError
        Negative lobes carry more mass than ``negativity_budget``.
    """
    grid = GridSpec() if grid is None else grid
    sigma = F.scale()
    center, half, p = grid.resolve(float(F.a[0]), sigma)

    if x_cutoff is None:
        X = find_cutoff(F, decay_tol)
    else:
        X = float(x_cutoff)
        edge = max(F.log_envelope(np.array([X]))[0], F.log_envelope(np.array([-X]))[0])
        if edge > math.log(decay_tol):
            raise InsufficientDecayError(
                f"|F(x_cutoff={X:g})| = {math.exp(edge):.3g} > {decay_tol:g}; "
                "insufficient decay; increase b or 2k")

    # trapezoid nodes alias the density with period 2*pi/h
    period = 2.0 * half + 20.0 * sigma
    h = 2.0 * math.pi / period
    n_half = int(math.ceil(X / h))
    if 2 * n_half + 1 > max_x_points:
        raise InsufficientDecayError(
            f"needs {2 * n_half + 1} quadrature nodes (> {max_x_points}); "
            "insufficient decay; increase b or 2k")
    x = h * np.arange(-n_half, n_half + 1)
    w = np.full(len(x), h)
    w[0] = w[-1] = 0.5 * h
    Fx = F(x) * np.exp(-1j * x * center) * w

    shifted = p - center
    eta_c = np.empty(len(p), dtype=complex)
    for lo in range(0, len(p), chunk):
        ph = np.exp(-1j * np.outer(shifted[lo:lo + chunk], x))
        eta_c[lo:lo + chunk] = ph @ Fx
    eta_c /= 2.0 * math.pi

    eta = eta_c.real.copy()
    norm, neg, lo_eta = _diagnostics(p, eta)
    if neg > negativity_budget:
        raise NegativeDensityError(
            f"negative density mass {neg:.3g} exceeds budget {negativity_budget:g} (min eta {lo_eta:.3g})")
    return DensityGrid(p=p, eta=eta, normalization=norm, negative_mass=neg, min_eta=lo_eta,
                       imag_residue=float(np.max(np.abs(eta_c.imag))), charfn=F,
                       x_cutoff=X, x_step=h)


def gaussian_density(mean, variance, grid=None):
    """Closed-form normal density sampled on a :class:`GridSpec`."""
    if not variance > 0:
        raise InputError(f"variance non-positive: {variance!r}")
    grid = GridSpec() if grid is None else grid
    sigma = math.sqrt(variance)
    _, _, p = grid.resolve(mean, sigma)
    eta = np.exp(-((p - mean) ** 2) / (2.0 * variance)) / (math.sqrt(2.0 * math.pi) * sigma)
    norm, neg, lo = _diagnostics(p, eta)
    return DensityGrid(p=p, eta=eta, normalization=norm, negative_mass=neg, min_eta=lo,
                       info={"closed_form": "gaussian", "mean": mean, "variance": variance})


def density_moments(dg, m, coverage_tol=DEFAULT_COVERAGE_TOL):
    """``integral p**m eta(p) dp`` over the grid (trapezoidal).

    The grid must hold all but ``coverage_tol`` of the probability mass,
    judged by how far the grid integral of ``eta`` is from one.
    """
    tail = abs(1.0 - dg.normalization)
    if tail > coverage_tol:
        raise InsufficientCoverageError(
            f"grid misses about {tail:.3g} of the probability mass (> {coverage_tol:g}); widen it")
    if m == 0:
        return dg.normalization
    return float(np.trapezoid(dg.p ** m * dg.eta, dg.p))


def density_from_moments(moments, n=None, b=None, two_k=None, grid=None, b_scale=0.05, **kwargs):
    """Moments straight to a :class:`DensityGrid` with round-trip errors.

    The relative error of each recovered moment ``m <= n`` is stored in
    ``info["moment_errors"]``.
    """
    moments = np.asarray(moments, dtype=float).ravel()
    n = len(moments) if n is None else n
    if n > len(moments):
        raise InputError(f"n={n} needs {n} moments, got {len(moments)}")
    if len(moments) < 2:
        raise InputError("need at least two moments to fix the scale")
    if not moments[1] - moments[0] ** 2 > 0:
        raise DegenerateError("variance non-positive: p2 <= p1**2")
    a = moments_to_cumulants(moments[:n])
    sigma = math.sqrt(moments[1] - moments[0] ** 2)
    F = build_charfn(a, b=b, two_k=two_k, sigma=sigma, b_scale=b_scale)
    if n == 1:
        grid = GridSpec() if grid is None else grid
        if grid.half_width is None and grid.center is None:
            grid = GridSpec(grid.n_points, grid.range_sigmas, float(a[0]), grid.range_sigmas * sigma)
    dg = charfn_to_density(F, grid, **kwargs)
    errors = []
    for m in range(1, n + 1):
        got = density_moments(dg, m, coverage_tol=math.inf)
        errors.append(abs(got - moments[m - 1]) / max(abs(moments[m - 1]), 1e-300))
    dg.info["moment_errors"] = errors
    dg.info["input_moments"] = moments[:n].tolist()
    return dg


def write_density_csv(dg):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("p", "eta"))
    for p, e in zip(dg.p.tolist(), dg.eta.tolist()):
        w.writerow((repr(p), repr(e)))
    return buf.getvalue().encode("utf-8")


def write_density_metadata(dg):
    return (json.dumps(dg.metadata(), indent=2, sort_keys=True) + "\n").encode("utf-8")
