"""Transfer distribution: both routes, closed forms, joint probabilities."""

import math

import numpy as np
import pytest

from conftest import assert_density_close
from wvtransfer.distributions import DiracAtom
from wvtransfer.errors import (AtomExtractionError, PreconditionError,
                               RangeError, UnsupportedCaseError)
from wvtransfer.numerics import GridSpec
from wvtransfer.physics import (COSINE_POWER, NARROW, RECTANGULAR, SlitSpec,
                                build_state, classical_kick_distribution,
                                kick_set, random_kick_set,
                                random_rotation_set)
from wvtransfer.transfer import (CharFunction, char_function, char_value,
                                 closed_form_pwv, compute_pwv,
                                 narrow_pipeline_pwv, pwv_from_char,
                                 weak_joint_probability,
                                 _cosn_density_binomial,
                                 _cosn_density_product)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# product-formula route
# ---------------------------------------------------------------------------

def test_no_measurement_means_no_transfer(rect_state, identity):
    dist = compute_pwv(rect_state, identity)
    assert len(dist.atoms) == 1
    assert dist.atoms[0].location == 0.0
    assert dist.atoms[0].weight == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(dist.density)) < 1e-12


def test_pure_kicks_reduce_to_classical_mixture(rect_state):
    m = kick_set([0.3, 0.7], [2.0, -1.0])
    dist = compute_pwv(rect_state, m)
    classical = classical_kick_distribution(m)
    got = sorted(dist.atoms, key=lambda a: a.location)
    want = sorted(classical.atoms, key=lambda a: a.location)
    for g, w in zip(got, want):
        assert g.location == pytest.approx(w.location, abs=1e-12)
        assert g.weight == pytest.approx(w.weight, abs=1e-9)
    assert np.max(np.abs(dist.density)) < 1e-12


def test_narrow_slits_match_closed_form(narrow_state, heaviside):
    dist = compute_pwv(narrow_state, heaviside)
    sigma = narrow_state.spec.sigma_slit
    p = dist.grid.points
    envelope = np.exp(-0.5 * (sigma * p) ** 2)
    exact = closed_form_pwv(narrow_state.spec, p_grid=dist.grid)
    mask = np.abs(p) < 30.0
    assert np.max(np.abs(dist.density - exact.density * envelope)[mask]) < 1e-9
    assert dist.atoms[0].weight == pytest.approx(0.5, abs=1e-9)


def test_rect_slits_match_closed_form(rect_state, heaviside):
    dist = compute_pwv(rect_state, heaviside)
    exact = closed_form_pwv(rect_state.spec, p_grid=dist.grid)
    assert_density_close(dist.density, exact.density, rtol=1e-4)
    assert dist.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_narrow_density_goes_negative(narrow_state, heaviside):
    dist = compute_pwv(narrow_state, heaviside)
    assert dist.density.min() < -1e-3


# ---------------------------------------------------------------------------
# characteristic function
# ---------------------------------------------------------------------------

def test_char_function_basics(narrow_state, heaviside, identity):
    phi = char_function(narrow_state, heaviside, GridSpec.symmetric(2.0, 513))
    assert phi.at(0.0) == pytest.approx(1.0, abs=1e-9)
    assert phi.max_modulus <= 1.0 + 1e-9
    # minimal which-way measurement caps the slit-lag coherence at 1/2
    assert abs(phi.at(1.0)) <= 0.5 + 1e-9
    phi_id = char_function(narrow_state, identity,
                           GridSpec.symmetric(2.0, 257))
    assert np.max(np.abs(phi_id.values - 1.0)) < 1e-9


def test_char_bound_over_random_complete_sets(cos1_state):
    rng = np.random.default_rng(23)
    grid = GridSpec.symmetric(3.0, 257)
    for _ in range(10):
        m = random_rotation_set(rng, float(rng.uniform(0.0, 1.0)))
        phi = char_function(cos1_state, m, grid)
        assert phi.at(0.0) == pytest.approx(1.0, abs=1e-9)
        assert phi.max_modulus <= 1.0 + 1e-9


def test_inversion_recovers_narrow_closed_form(narrow_state, heaviside):
    phi = char_function(narrow_state, heaviside, GridSpec.symmetric(2.0, 1025))
    grid = GridSpec.symmetric(40.0, 4001)
    dist = pwv_from_char(phi, grid)
    sigma = narrow_state.spec.sigma_slit
    p = grid.points
    exact = closed_form_pwv(narrow_state.spec, p_grid=grid)
    envelope = np.exp(-0.5 * (sigma * p) ** 2)
    mask = np.abs(p) < 30.0
    assert np.max(np.abs(dist.density - exact.density * envelope)[mask]) < 1e-10
    assert dist.atoms[0].weight == pytest.approx(0.5, abs=1e-3)


def test_inversion_matches_rect_closed_form(rect_state, heaviside):
    phi = char_function(rect_state, heaviside, GridSpec.symmetric(3.0, 1537))
    grid = GridSpec.symmetric(40.0, 4001)
    dist = pwv_from_char(phi, grid)
    exact = closed_form_pwv(rect_state.spec, p_grid=grid)
    assert_density_close(dist.density, exact.density, rtol=1e-3)
    assert dist.atoms[0].weight == pytest.approx(0.5, abs=1e-3)


def test_unstable_asymptotic_mean_is_an_error():
    grid = GridSpec.symmetric(6.0, 513)
    values = np.cos(0.37 * grid.points).astype(complex)
    values[grid.n_points // 2] = 1.0  # Phi(0) = 1
    phi = CharFunction(grid, values, check_tol=1e-2)
    with pytest.raises(AtomExtractionError):
        pwv_from_char(phi)


def test_route_agreement_on_random_sets(cos1_state):
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(4):
        m = random_rotation_set(rng, float(rng.uniform(0.0, 0.05)))
        direct = compute_pwv(cos1_state, m)
        phi = char_function(cos1_state, m, GridSpec.symmetric(4.0, 1537))
        inverted = pwv_from_char(phi, direct.grid)
        p = direct.grid.points
        mask = np.abs(p) < 30.0
        scale = np.abs(direct.density[mask]).max()
        rel = np.max(np.abs(direct.density - inverted.density)[mask]
                     / np.maximum(np.abs(direct.density[mask]), 1e-2 * scale))
        worst = max(worst, rel)
        for a, b in zip(direct.atoms, inverted.atoms):
            assert a.location == b.location
            assert a.weight == pytest.approx(b.weight, abs=1e-3)
    assert worst <= 1e-3


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------

def test_cos_zero_reproduces_rectangular_formula():
    grid = GridSpec.symmetric(40.0, 2001)
    rect = closed_form_pwv(SlitSpec(RECTANGULAR, s=1.0, w=0.5), grid)
    cos0 = closed_form_pwv(SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=0), grid)
    assert np.max(np.abs(rect.density - cos0.density)) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_cosn_binomial_and_product_forms_agree(n):
    spec = SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=n)
    p = np.linspace(-60.0, 60.0, 5001)
    a = _cosn_density_binomial(spec, 1.0)(p)
    b = _cosn_density_product(spec, 1.0)(p)
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


@pytest.mark.parametrize("kind,w,n", [(NARROW, 0.0, 0),
                                      (RECTANGULAR, 0.5, 0),
                                      (COSINE_POWER, 0.5, 1),
                                      (COSINE_POWER, 0.5, 3)])
def test_closed_forms_are_normalized(kind, w, n):
    spec = SlitSpec(kind, s=1.0, w=w, n=n)
    dist = closed_form_pwv(spec, GridSpec.symmetric(60.0, 6001))
    assert dist.total_mass() == pytest.approx(1.0, abs=2e-6)


def test_non_catalog_closed_form_rejected():
    class FakeSpec:
        kind = "unknown"
        s = 1.0
    with pytest.raises(UnsupportedCaseError):
        closed_form_pwv(FakeSpec())


# ---------------------------------------------------------------------------
# weak joint probability
# ---------------------------------------------------------------------------

def test_identity_joint_is_diagonal(rect_state, identity):
    dp = 0.1
    on = weak_joint_probability(1.0, "id", 1.02, rect_state, identity, dp=dp)
    off = weak_joint_probability(1.0, "id", 1.2, rect_state, identity, dp=dp)
    assert abs(on) > 0.0
    assert off == 0.0


def test_kick_joint_is_shifted_diagonal(rect_state):
    m = kick_set([1.0], [2.0])
    dp = 0.1
    on = weak_joint_probability(0.5, "k0", 2.52, rect_state, m, dp=dp)
    off = weak_joint_probability(0.5, "k0", 0.52, rect_state, m, dp=dp)
    assert abs(on) > 0.0
    assert off == 0.0


def test_joint_parity_symmetry(rect_state, heaviside):
    val1 = weak_joint_probability(1.3, "+", 2.7, rect_state, heaviside, dp=0.2)
    val2 = weak_joint_probability(-1.3, "-", -2.7, rect_state, heaviside,
                                  dp=0.2)
    assert val1 == pytest.approx(val2, rel=1e-10)


def test_joint_can_be_negative_and_is_stable_in_dp(rect_state, heaviside):
    total = {}
    for dp in (0.2, 0.1):
        val = 0.0
        for label in ("+", "-"):
            val += weak_joint_probability(0.9, label, 5.2, rect_state,
                                          heaviside, dp=dp)
        total[dp] = val
    assert total[0.2] == pytest.approx(total[0.1], rel=1e-2)
    negative = weak_joint_probability(0.05, "+", 0.05 + 8.4, rect_state,
                                      heaviside, dp=0.2)
    assert negative < 0.0


def test_joint_out_of_grid_raises(rect_state, heaviside):
    with pytest.raises(RangeError):
        weak_joint_probability(100.0, "+", 0.0, rect_state, heaviside)


# ---------------------------------------------------------------------------
# regularization limit
# ---------------------------------------------------------------------------

def test_extrapolated_pipeline_hits_ideal_narrow_form():
    spec = SlitSpec(NARROW, s=1.0)
    dist = narrow_pipeline_pwv(spec, q_grid=GridSpec.symmetric(2.0, 1025))
    exact = closed_form_pwv(spec, p_grid=dist.grid)
    p = dist.grid.points
    mask = (np.abs(p) > 0.1) & (np.abs(p) < 20.0) \
        & (np.abs(np.sin(0.5 * p)) > 0.05)
    rel = np.abs(dist.density - exact.density)[mask] / np.abs(exact.density)[mask]
    assert rel.max() <= 1e-3
    assert dist.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_char_value_with_measurement_structure(narrow_state, heaviside):
    # Phi is exactly flat across the gap and exactly 1/2 beyond the slits
    assert char_value(narrow_state, heaviside, 0.2) == pytest.approx(1.0,
                                                                     abs=1e-12)
    assert char_value(narrow_state, heaviside, 1.5) == pytest.approx(0.5,
                                                                     abs=1e-12)
