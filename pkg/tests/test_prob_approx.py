import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from marketmoments.errors import (DegenerateError, InputError, InsufficientCoverageError,
                                  InsufficientDecayError, NegativeDensityError)
from marketmoments.prob_approx import (CharFnApprox, GridSpec, build_charfn, charfn_to_density,
                                       cumulants_to_moments, default_regularizer, density_from_moments,
                                       density_moments, gaussian_density, moments_to_cumulants,
                                       write_density_csv, write_density_metadata)

FIXTURE_MOMENTS = [3.0, 28 / 3, 28.8]
FIXTURE_CUMULANTS = [3.0, 1 / 3, -1.2]
WIDE = GridSpec(8193, 64)


def series_cumulants(moments):
    """Cumulants as ``m!`` times the coefficients of ``log M(t)``, in exact arithmetic.

    ``M(t) = 1 + sum mu_m t**m / m!`` and ``log(1 + u) = sum (-1)**(j+1) u**j / j``
    with power series truncated at the order of the last moment.
    """
    n = len(moments)
    u = [Fraction(0)] + [Fraction(mu) / math.factorial(m) for m, mu in enumerate(moments, 1)]

    def mul(a, b):
        out = [Fraction(0)] * (n + 1)
        for i, x in enumerate(a):
            if x:
                for j in range(n + 1 - i):
                    out[i + j] += x * b[j]
        return out

    log = [Fraction(0)] * (n + 1)
    power = [Fraction(1)] + [Fraction(0)] * n
    for j in range(1, n + 1):
        power = mul(power, u)
        log = [l + Fraction((-1) ** (j + 1), j) * p for l, p in zip(log, power)]
    return [log[m] * math.factorial(m) for m in range(1, n + 1)]


def quad_density(F, p):
    """Inversion integral by adaptive quadrature (F(-x) is the conjugate of F(x))."""
    f = lambda x: (F(np.array([x]))[0] * np.exp(-1j * x * p)).real / math.pi
    val, _ = quad(f, 0, np.inf, limit=400, epsabs=1e-12)
    return val


# -- cumulants -------------------------------------------------------------------


def test_fixture_cumulants():
    a = moments_to_cumulants(FIXTURE_MOMENTS)
    assert a[0] == 3
    assert abs(a[1] - 1 / 3) <= 1e-12
    assert abs(a[2] + 1.2) <= 1e-12
    exact = series_cumulants([3, Fraction(28, 3), Fraction(144, 5)])
    assert exact == [3, Fraction(1, 3), Fraction(-6, 5)]


def test_point_mass_cumulants():
    a = moments_to_cumulants([2.0 ** m for m in range(1, 7)])
    assert a[0] == 2.0
    assert np.allclose(a[1:], 0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=7), st.integers(1, 8))
def test_cumulants_match_log_series(nums, den):
    moments = [Fraction(k, den) for k in nums]
    a = moments_to_cumulants([float(m) for m in moments])
    exact = series_cumulants(moments)
    scale = max(1.0, max(abs(float(m)) for m in moments)) ** len(moments)
    assert np.allclose(a, [float(x) for x in exact], rtol=1e-12, atol=1e-12 * scale)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_cumulant_round_trip(a):
    mu = cumulants_to_moments(a)
    back = moments_to_cumulants(mu)
    scale = max(1.0, max(abs(x) for x in mu))
    assert np.allclose(back, a, rtol=1e-9, atol=1e-9 * scale)


# -- characteristic function ---------------------------------------------------------


def test_gaussian_charfn():
    F = build_charfn([3.0, 1 / 3])
    assert F.b == 0
    assert abs(F(np.array([1.0]))[0]) == pytest.approx(math.exp(-1 / 6), rel=1e-15)
    assert F(np.array([1.0]))[0] == pytest.approx(np.exp(3j - 1 / 6), rel=1e-15)
    std = build_charfn([0.0, 1.0])
    x = np.linspace(-4, 4, 17)
    assert np.allclose(std(x), np.exp(-x ** 2 / 2), rtol=1e-15, atol=0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.floats(1e-3, 1.0))
def test_charfn_is_one_at_zero(a, b):
    n = len(a)
    F = CharFnApprox(a, b=b, two_k=n + 1 if n % 2 else n + 2)
    assert F(np.array([0.0]))[0] == 1


def test_gaussian_envelope_bound():
    F = CharFnApprox([1.0, 0.5, 0.0, 0.0], b=0.01, two_k=6)
    x = np.linspace(0, 20, 200)
    env = np.exp(-0.5 * x ** 2 / 2)
    assert np.all(np.abs(F(x)) <= env + 1e-300)
    assert np.all(np.diff(np.abs(F(x))) <= 0)


@pytest.mark.parametrize("kw", [
    dict(a=[0.0, 1.0, 0.5], b=0.0),
    dict(a=[0.0, 1.0, 0.5], b=-1.0, two_k=4),
    dict(a=[0.0, 1.0, 0.5], b=0.1, two_k=3),
    dict(a=[0.0, 1.0, 0.5], b=0.1, two_k=2),
    dict(a=[0.0, 1.0, 0.5], tail=[0.0, -1.0]),
    dict(a=[0.0, 1.0, 0.5], tail=[-1.0]),
    dict(a=[0.0, -1.0]),
])
def test_invalid_regularizer(kw):
    with pytest.raises(InputError, match="regularizer"):
        CharFnApprox(**kw)


def test_polynomial_tail_form():
    F = CharFnApprox([3.0, 1 / 3, -1.2], tail=[0.0, 0.0, 0.01])
    assert F.leading_order == 6
    x = np.array([2.0])
    assert F.log_envelope(x)[0] == pytest.approx(-(1 / 3) * 4 / 2 - 0.01 * 64, rel=1e-14)


def test_default_regularizer_formula():
    b, two_k = default_regularizer([0.0, 4.0, 1.0])
    assert two_k == 4 and b == pytest.approx(0.05 * 2.0 ** 4 * 24 / (2 * 4), rel=1e-15)
    b, two_k = default_regularizer([0.0, 1.0, 0.0, 0.0])
    assert two_k == 6 and b == pytest.approx(0.05 * 720 / (6 * 8), rel=1e-15)
    # the Gaussian series decays without help
    assert default_regularizer([3.0, 1 / 3]) == (0.0, 4)


# -- inversion ---------------------------------------------------------------------


def test_gaussian_inversion_matches_closed_form():
    F = build_charfn([3.0, 1 / 3])
    dg = charfn_to_density(F, GridSpec(4097, 8))
    ref = gaussian_density(3.0, 1 / 3, GridSpec(4097, 8))
    assert np.max(np.abs(dg.eta - ref.eta)) <= 1e-8
    mid = len(dg.p) // 2
    assert dg.p[mid] == 3.0
    assert dg.eta[mid] == pytest.approx(1 / math.sqrt(2 * math.pi / 3), rel=1e-12)
    assert round(dg.eta[mid], 5) == 0.69099
    assert dg.imag_residue < 1e-8
    assert abs(dg.normalization - 1) < 1e-6


def test_point_mass_limit():
    dg = charfn_to_density(build_charfn([5.0, 1e-6]), GridSpec(4097, 8))
    assert abs(dg.normalization - 1) < 1e-6
    assert dg.p[np.argmax(dg.eta)] == 5.0
    inside = np.abs(dg.p - 5.0) < 5e-3
    assert np.trapezoid(dg.eta[inside], dg.p[inside]) > 1 - 1e-6


def test_skewed_fixture_against_quadrature():
    F = build_charfn(FIXTURE_CUMULANTS, b=0.01, two_k=4)
    dg = charfn_to_density(F, WIDE, negativity_budget=math.inf)
    assert abs(dg.normalization - 1) < 1e-4
    assert abs(np.trapezoid(dg.p * dg.eta, dg.p) - 3) < 1e-3
    for target in (-1.0, 1.0, 2.0, 3.0, 3.5, 4.0):
        i = int(np.argmin(np.abs(dg.p - target)))
        assert dg.eta[i] == pytest.approx(quad_density(F, dg.p[i]), abs=1e-6)


def test_negative_lobes_reported_and_budgeted():
    F = build_charfn(FIXTURE_CUMULANTS, b=0.01, two_k=4)
    with pytest.raises(NegativeDensityError, match="budget"):
        charfn_to_density(F, WIDE)
    dg = charfn_to_density(F, WIDE, negativity_budget=1.0)
    assert dg.min_eta < 0 and dg.negative_mass > 1e-3


def test_insufficient_decay():
    F = CharFnApprox([0.0, -1.0, 0.0, 0.0], b=1e-200, two_k=6)
    with pytest.raises(InsufficientDecayError, match="insufficient decay"):
        charfn_to_density(F, negativity_budget=math.inf)
    with pytest.raises(InsufficientDecayError, match="insufficient decay"):
        charfn_to_density(build_charfn([0.0, 1.0]), x_cutoff=1.0)


# -- recovered moments ----------------------------------------------------------------


def test_gaussian_moments_recovered():
    dg = charfn_to_density(build_charfn([3.0, 1 / 3]), GridSpec(4096, 8))
    assert density_moments(dg, 2) == pytest.approx(28 / 3, abs=1e-6)
    assert density_moments(dg, 0) == pytest.approx(1, abs=1e-6)
    sym = charfn_to_density(build_charfn([0.0, 2.0]), GridSpec(4097, 8))
    assert abs(density_moments(sym, 1)) < 1e-12
    assert abs(density_moments(sym, 3)) < 1e-10


def test_coverage_guard():
    dg = gaussian_density(0.0, 1.0, GridSpec(1001, 2))
    with pytest.raises(InsufficientCoverageError):
        density_moments(dg, 1)


def test_gaussian_density_closed_form():
    dg = gaussian_density(3.0, 1 / 3, GridSpec(4097, 8))
    mid = len(dg.p) // 2
    assert dg.eta[mid] == pytest.approx(0.690988, abs=1e-6)
    assert np.allclose(dg.eta, dg.eta[::-1], rtol=1e-12, atol=0)
    with pytest.raises(InputError, match="variance non-positive"):
        gaussian_density(0.0, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(1.0, 5.0), st.floats(0.5, 2.0), st.floats(-2.0, 2.0), st.one_of(st.none(), st.floats(0.0, 1.0)))
def test_round_trip_well_conditioned(mean, sd, skew, kurt):
    a = [mean, sd ** 2, skew * sd ** 3] + ([] if kurt is None else [kurt * sd ** 4])
    mu = cumulants_to_moments(a)
    dg = density_from_moments(mu, grid=WIDE, negativity_budget=math.inf)
    assert max(dg.info["moment_errors"]) < 1e-4


@settings(max_examples=10, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(1e-4, 1e-1))
def test_regularizer_neutrality(skew, scale):
    a = [3.0, 0.5, skew * 0.5 ** 1.5]
    mu = cumulants_to_moments(a)
    b, two_k = default_regularizer(a, scale=scale)
    one = density_from_moments(mu, b=b, two_k=two_k, grid=WIDE, negativity_budget=math.inf)
    two = density_from_moments(mu, b=2 * b, two_k=two_k + 2, grid=WIDE, negativity_budget=math.inf)
    for m in (1, 2, 3):
        x, y = density_moments(one, m), density_moments(two, m)
        assert abs(x - y) / abs(x) < 1e-4


def test_density_from_moments_guards():
    with pytest.raises(DegenerateError, match="variance non-positive"):
        density_from_moments([3.0, 9.0], n=1)
    with pytest.raises(InputError):
        density_from_moments([3.0])
    dg = density_from_moments([3.0, 9.5], n=1, grid=GridSpec(2049, 8))
    assert abs(dg.normalization - 1) < 1e-6
    assert dg.info["moment_errors"][0] < 1e-10


def test_density_outputs():
    dg = density_from_moments([3.0, 28 / 3], grid=GridSpec(65, 8))
    lines = write_density_csv(dg).decode().splitlines()
    assert lines[0] == "p,eta" and len(lines) == 66
    meta = json.loads(write_density_metadata(dg))
    for key in ("n", "a", "b", "two_k", "grid", "normalization_residual", "negative_mass",
                "moment_errors"):
        assert key in meta
    assert meta["n"] == 2
