"""Quadrature, oscillatory tails, the sine integral, and Fourier plumbing."""

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from wvtransfer.errors import PreconditionError, RangeError
from wvtransfer.numerics import (GridSpec, PlaneWaveComponent,
                                 SampledComplexFunction, TailModel,
                                 fourier_transform, inverse_transform_samples,
                                 osc_tail_integral, quad, sine_integral,
                                 wynn_epsilon)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# quad
# ---------------------------------------------------------------------------

def test_quad_constant_is_exact():
    g = GridSpec(0.0, 1.0, 101)
    f = SampledComplexFunction.from_callable(g, lambda x: np.ones_like(x))
    assert quad(f, (0.0, 1.0)) == pytest.approx(1.0, abs=1e-12)


def test_quad_odd_function_cancels():
    g = GridSpec(-1.0, 1.0, 201)
    f = SampledComplexFunction.from_callable(g, lambda x: x.astype(complex))
    assert abs(quad(f, (-1.0, 1.0))) < 1e-14


def test_quad_complex_exponential():
    g = GridSpec(0.0, math.pi, 4001)
    f = SampledComplexFunction.from_callable(g, lambda x: np.exp(1j * x))
    value = quad(f, (0.0, math.pi))
    assert value == pytest.approx(2.0j, abs=1e-6)


def test_quad_subinterval_with_interpolated_ends():
    g = GridSpec(0.0, 2.0, 2001)
    f = SampledComplexFunction.from_callable(g, lambda x: x ** 2 + 0j)
    assert quad(f, (0.25, 1.75)) == pytest.approx((1.75 ** 3 - 0.25 ** 3) / 3,
                                                  rel=1e-6)


def test_quad_outside_span_raises():
    g = GridSpec(0.0, 1.0, 11)
    f = SampledComplexFunction.from_callable(g, lambda x: np.ones_like(x))
    with pytest.raises(RangeError):
        quad(f, (0.5, 1.5))


# ---------------------------------------------------------------------------
# oscillatory tail integrals
# ---------------------------------------------------------------------------

def test_sinc_integral_from_zero():
    res = osc_tail_integral(TailModel(1.0, 1.0, 0.0, 1.0), 0, 0.0)
    assert res.converged
    assert res.value == pytest.approx(math.pi / 2, abs=1e-10)


def test_tail_against_adaptive_quadrature_oracle():
    res = osc_tail_integral(TailModel(1.0, 1.0, 0.0, 2.0), 0, math.pi)
    # oracle: adaptive quadrature with a sin weight plus the analytic rest
    oracle, _ = scipy.integrate.quad(lambda u: 1.0 / u ** 2, math.pi, 4e4,
                                     weight="sin", wvar=1.0, limit=400)
    assert res.converged
    assert res.value == pytest.approx(oracle, abs=1e-8)


def test_non_decaying_series_is_flagged():
    res = osc_tail_integral(TailModel(1.0, 1.0, 0.0, 0.0), 0, 0.0)
    assert not res.converged
    assert math.isnan(res.value)


def test_weight_power_can_defeat_decay():
    res = osc_tail_integral(TailModel(1.0, 2.0, 0.3, 1.0), 1, 5.0)
    assert not res.converged


def test_damped_tail_matches_quadrature():
    res = osc_tail_integral(TailModel(1.0, 0.5, 0.0, 1.0), 1, 40.0,
                            damping_rate=1.0 / 64.0)
    oracle, _ = scipy.integrate.quad(
        lambda u: math.sin(0.5 * u) * math.exp(-u / 64.0), 40.0, np.inf,
        limit=2000)
    assert res.value == pytest.approx(oracle, abs=1e-9)


def test_wynn_accelerates_alternating_series():
    partial = np.cumsum([(-1.0) ** k / (k + 1) for k in range(30)])
    value, spread = wynn_epsilon(partial)
    assert value == pytest.approx(math.log(2.0), abs=1e-10)
    assert spread < 1e-8


# ---------------------------------------------------------------------------
# sine integral
# ---------------------------------------------------------------------------

def test_si_zero():
    assert sine_integral(0.0) == 0.0


def test_si_at_pi_matches_power_series_oracle():
    # independent oracle: raw power series evaluated with mpmath-free dps
    total, term, k = math.pi, math.pi, 0
    while abs(term) > 1e-18:
        term *= -math.pi ** 2 * (2 * k + 1) / ((2 * k + 2) * (2 * k + 3) ** 2)
        total += term
        k += 1
    assert sine_integral(math.pi) == pytest.approx(total, abs=1e-12)
    assert sine_integral(math.pi) == pytest.approx(1.8519370, abs=1e-7)


def test_si_large_argument_asymptote():
    assert sine_integral(1e6) == pytest.approx(math.pi / 2, abs=1e-5)


@pytest.mark.parametrize("x", [0.3, 2.0, 4.0, 4.0001, 7.7, 15.0, 60.0,
                               300.0, 1e4, 1e6])
def test_si_against_scipy(x):
    si, _ = scipy.special.sici(x)
    assert sine_integral(x) == pytest.approx(si, abs=1e-10)
    assert sine_integral(-x) == pytest.approx(-si, abs=1e-10)


# ---------------------------------------------------------------------------
# Fourier transforms
# ---------------------------------------------------------------------------

def test_constant_transforms_to_single_atom():
    g = GridSpec.symmetric(8.0, 2001)
    f = SampledComplexFunction.from_callable(
        g, lambda x: np.ones_like(x, dtype=complex))
    res = fourier_transform(f, GridSpec.symmetric(10.0, 201),
                            const_left=1.0, const_right=1.0)
    assert len(res.atoms) == 1
    atom = res.atoms[0]
    assert atom.location == 0.0
    assert atom.weight == pytest.approx(math.sqrt(TWO_PI), rel=1e-12)
    assert np.max(np.abs(res.density.values)) < 1e-12


def test_plane_wave_shifts_the_atom():
    k = 3.0
    g = GridSpec.symmetric(8.0, 2001)
    f = SampledComplexFunction.from_callable(g, lambda x: np.exp(1j * k * x))
    res = fourier_transform(f, GridSpec.symmetric(10.0, 201),
                            plane_waves=(PlaneWaveComponent(1.0, k),))
    assert res.atoms[0].location == pytest.approx(k)
    assert res.atoms[0].weight == pytest.approx(math.sqrt(TWO_PI), rel=1e-12)


def test_heaviside_splits_into_atom_and_principal_value():
    g = GridSpec.symmetric(8.0, 4001)
    f = SampledComplexFunction.from_callable(
        g, lambda x: np.where(x > 0, 1.0, 0.0).astype(complex))
    res = fourier_transform(f, GridSpec.symmetric(10.0, 201),
                            const_left=0.0, const_right=1.0)
    assert res.atoms[0].weight == pytest.approx(math.sqrt(math.pi / 2),
                                                rel=1e-12)
    pole = res.principal_parts[0]
    assert pole.location == 0.0
    assert pole.coefficient == pytest.approx(-1j * math.sqrt(1 / TWO_PI),
                                             rel=1e-12)


def test_undeclared_step_is_rejected():
    g = GridSpec.symmetric(8.0, 1001)
    f = SampledComplexFunction.from_callable(
        g, lambda x: np.where(x > 0, 1.0, 0.0).astype(complex))
    with pytest.raises(PreconditionError):
        fourier_transform(f, GridSpec.symmetric(10.0, 51))


def test_linearity_on_random_combinations():
    rng = np.random.default_rng(42)
    g = GridSpec.symmetric(10.0, 2048)
    p = GridSpec.symmetric(6.0, 301)
    f1 = SampledComplexFunction.from_callable(
        g, lambda x: np.exp(-x ** 2) * (1 + 0.3j * x))
    f2 = SampledComplexFunction.from_callable(
        g, lambda x: np.exp(-0.5 * (x - 1) ** 2) * np.sin(x))
    for _ in range(5):
        a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        combo = SampledComplexFunction(g, a * f1.values + b * f2.values)
        lhs = fourier_transform(combo, p).density.values
        rhs = (a * fourier_transform(f1, p).density.values
               + b * fourier_transform(f2, p).density.values)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


def test_round_trip_on_smooth_compact_function():
    g = GridSpec.symmetric(10.0, 4001)
    p = GridSpec.symmetric(30.0, 6001)
    f = SampledComplexFunction.from_callable(
        g, lambda x: np.exp(-x ** 2) * (1 + 0.5 * np.cos(2 * x)))
    ft = fourier_transform(f, p)
    # inverse: (2 pi hbar)^(-1/2) integral f~ e^{+ixp} dp
    w = np.full(p.n_points, p.spacing)
    w[0] = w[-1] = 0.5 * p.spacing
    back = (ft.density.values * w) @ np.exp(
        1j * np.outer(p.points, g.points)) / math.sqrt(TWO_PI)
    rel = np.max(np.abs(back - f.values)) / np.max(np.abs(f.values))
    assert rel <= 1e-6


def test_parseval_for_atom_free_case():
    g = GridSpec.symmetric(10.0, 4001)
    p = GridSpec.symmetric(30.0, 6001)
    f = SampledComplexFunction.from_callable(
        g, lambda x: np.exp(-x ** 2) * np.exp(0.7j * x))
    ft = fourier_transform(f, p)
    ix = np.trapezoid(np.abs(f.values) ** 2, g.points)
    ip = np.trapezoid(np.abs(ft.density.values) ** 2, p.points)
    assert ip == pytest.approx(ix, rel=1e-6)


def test_inverse_transform_samples_gaussian():
    q = np.linspace(-20.0, 20.0, 4001)
    phi = np.exp(-0.5 * q ** 2)          # characteristic of a unit Gaussian
    p = np.linspace(-5.0, 5.0, 101)
    dens = inverse_transform_samples(q, phi, p)
    expected = np.exp(-0.5 * p ** 2) / math.sqrt(TWO_PI)
    assert np.max(np.abs(dens.real - expected)) < 1e-10
    assert np.max(np.abs(dens.imag)) < 1e-12
