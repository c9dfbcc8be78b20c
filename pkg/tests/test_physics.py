"""States, measurement sets, momentum distributions, visibility, bounds."""

import math

import numpy as np
import pytest

from conftest import assert_density_close
from wvtransfer.errors import (CompletenessError, ConstructionError,
                               DomainError)
from wvtransfer.numerics import GridSpec, gauss_integrate, split_segments
from wvtransfer.physics import (COSINE_POWER, NARROW, RECTANGULAR,
                                MeasurementBranch, SlitSpec, build_state,
                                classical_kick_distribution,
                                final_momentum_distribution, heaviside_set,
                                identity_set, kick_set,
                                measurement_set, min_disturbance_bound,
                                momentum_distribution, partial_heaviside_set,
                                random_phase_set, random_rotation_set,
                                rotation_set, visibility)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def test_rectangular_norm_is_exact(rect_state):
    assert rect_state.norm_check == pytest.approx(1.0, abs=1e-12)


def test_cos_power_zero_equals_rectangular(rect_state):
    cos0 = build_state(SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=0))
    x = np.linspace(-1.2, 1.2, 1203)
    assert np.array_equal(cos0.amplitude(x), rect_state.amplitude(x))


def test_narrow_state_slit_overlap(narrow_state):
    # integral psi(x) psi(x + s) dx picks out half of one slit's weight
    sigma = narrow_state.spec.sigma_slit
    cuts = [-0.5 + d * sigma for d in (-4.0, -1.0, 1.0, 4.0)]
    segs = split_segments([(-0.5 - 14 * sigma, -0.5 + 14 * sigma)], cuts)
    overlap = gauss_integrate(
        lambda u: narrow_state.amplitude(u) * narrow_state.amplitude(u + 1.0),
        segs)
    assert overlap.real == pytest.approx(0.5, abs=1e-4)


def test_overlapping_slits_rejected():
    with pytest.raises(ConstructionError):
        SlitSpec(RECTANGULAR, s=1.0, w=1.0)


def test_all_catalog_states_are_normalized_and_symmetric():
    for spec in (SlitSpec(NARROW, s=1.0),
                 SlitSpec(RECTANGULAR, s=1.0, w=0.5),
                 SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=1),
                 SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=4)):
        psi = build_state(spec)
        assert psi.norm_check == pytest.approx(1.0, abs=1e-9)
        x = np.linspace(0.01, 1.4, 57)
        assert np.allclose(psi.amplitude(x), psi.amplitude(-x))


# ---------------------------------------------------------------------------
# measurement sets
# ---------------------------------------------------------------------------

def test_completeness_of_shipped_sets():
    x = np.linspace(-6.0, 6.0, 4097)
    for m in (identity_set(), heaviside_set(), partial_heaviside_set(0.7),
              kick_set([0.25, 0.75], [3.0, -1.5]), rotation_set(0.0),
              rotation_set(0.35, center=0.1, scale=0.1)):
        assert m.completeness_residual <= 1e-9
        assert np.max(np.abs(m.completeness(x) - 1.0)) <= 1e-9


def test_completeness_holds_at_the_step_itself(heaviside):
    assert heaviside.completeness(np.array([0.0]))[0] == pytest.approx(1.0)
    plus = heaviside.branch("+")
    assert abs(np.asarray(plus.value(np.array([0.0])))[0]) == pytest.approx(
        1.0 / math.sqrt(2.0))


def test_incomplete_set_is_rejected():
    half = MeasurementBranch(
        label="half", kind="tabulated",
        value=lambda x: np.full_like(np.asarray(x, dtype=float), 0.5,
                                     dtype=complex))
    with pytest.raises(CompletenessError):
        measurement_set([half])


def test_randomized_families_are_complete():
    rng = np.random.default_rng(5)
    x = np.linspace(-6.0, 6.0, 2049)
    for _ in range(10):
        for m in (random_rotation_set(rng, float(rng.uniform(0, 1))),
                  random_phase_set(rng, 2),
                  kick_set(*_random_kicks(rng))):
            assert np.max(np.abs(m.completeness(x) - 1.0)) <= 1e-9


def _random_kicks(rng):
    raw = rng.uniform(0.2, 1.0, 3)
    w = raw / raw.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return w.tolist(), rng.uniform(-4, 4, 3).tolist()


# ---------------------------------------------------------------------------
# momentum distributions
# ---------------------------------------------------------------------------

def test_initial_distribution_matches_closed_form(rect_state):
    dist = momentum_distribution(rect_state)
    p = dist.grid.points
    mask = (np.abs(p) > 1e-6) & (np.abs(p) < 20.0)
    exact = (8.0 / math.pi) * np.cos(0.5 * p[mask]) ** 2 \
        * np.sin(0.25 * p[mask]) ** 2 / p[mask] ** 2
    assert_density_close(dist.density[mask], exact, rtol=1e-3)


def test_initial_distribution_mass_and_mean(rect_state, narrow_state,
                                            cos1_state):
    for psi in (rect_state, narrow_state, cos1_state):
        dist = momentum_distribution(psi)
        assert dist.total_mass() == pytest.approx(1.0, abs=1e-6)
        mean = np.dot(dist.grid.points, dist.density) * dist.grid.spacing
        assert abs(mean) < 1e-9
        assert dist.density.min() >= 0.0


def test_fringe_spacing_is_h_over_s(narrow_state, rect_state):
    # narrow slits: the envelope is flat, so raw maxima sit h/s apart
    dist = momentum_distribution(narrow_state)
    p, d = dist.grid.points, dist.density
    inner = np.abs(p) < 3.5 * TWO_PI
    idx = np.where((d[1:-1] > d[:-2]) & (d[1:-1] > d[2:]))[0] + 1
    idx = [i for i in idx if inner[i]]
    spacings = np.diff(p[idx])
    assert np.allclose(spacings, TWO_PI, rtol=1e-2)
    # wide slits tilt the maxima, but the dark fringes stay exactly h/s apart
    dist_r = momentum_distribution(rect_state)
    p = dist_r.grid.points
    dark = [p[np.argmin(np.abs(p - target))]
            for target in (math.pi, 3 * math.pi)]
    vals = dist_r.density_at(np.array(dark))
    assert np.all(vals < 1e-6 * dist_r.density.max())


def test_final_distribution_identity_reproduces_initial(rect_state, identity):
    p_i = momentum_distribution(rect_state)
    p_f = final_momentum_distribution(rect_state, identity, p_i.grid)
    assert np.max(np.abs(p_f.density - p_i.density)) < 1e-12
    assert p_f.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_final_distribution_pure_kicks_is_shifted_mixture(rect_state):
    m = kick_set([0.3, 0.7], [2.0, -1.0])
    p_i = momentum_distribution(rect_state)
    p_f = final_momentum_distribution(rect_state, m, p_i.grid)
    p = p_i.grid.points
    shifted = (0.3 * np.interp(p - 2.0, p, p_i.density)
               + 0.7 * np.interp(p + 1.0, p, p_i.density))
    mask = np.abs(p) < 30.0
    assert np.max(np.abs(p_f.density - shifted)[mask]) \
        <= 1e-6 * p_i.density.max()


def test_final_distribution_heaviside_kills_fringes(rect_state, heaviside):
    p_f = final_momentum_distribution(rect_state, heaviside)
    p = p_f.grid.points
    # fringe visibility = |Fourier coefficient at the slit-separation lag|
    w = np.full(p.size, p_f.grid.spacing)
    coeff = np.dot(w * p_f.density, np.exp(1j * p))
    total = np.dot(w, p_f.density)
    assert abs(coeff) / total <= 1e-3
    assert p_f.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_classical_kick_distribution_atoms():
    m = kick_set([0.3, 0.7], [2.0, -1.0])
    d = classical_kick_distribution(m)
    atoms = sorted(d.atoms, key=lambda a: a.location)
    assert [a.location for a in atoms] == pytest.approx([-1.0, 2.0])
    assert [a.weight for a in atoms] == pytest.approx([0.7, 0.3])


# ---------------------------------------------------------------------------
# visibility and the disturbance bound
# ---------------------------------------------------------------------------

def test_visibility_catalog_values(heaviside, identity):
    assert visibility(identity, 1.0) == pytest.approx(1.0)
    assert visibility(heaviside, 1.0) == pytest.approx(0.0, abs=1e-15)
    alpha = 0.7
    assert visibility(partial_heaviside_set(alpha), 1.0) == pytest.approx(
        math.cos(alpha), rel=1e-12)


def test_visibility_invariant_under_branch_phase():
    alpha = 0.6
    base = partial_heaviside_set(alpha)
    v0 = visibility(base, 1.0)
    phase = np.exp(0.83j)
    rotated = [MeasurementBranch(
        label=b.label, kind=b.kind,
        value=lambda x, b=b: phase * np.asarray(b.value(x), dtype=complex),
        plane_waves=b.plane_waves, sgn_components=b.sgn_components,
        breakpoints=b.breakpoints) for b in base.branches[:1]]
    rotated.append(base.branches[1])
    v1 = visibility(measurement_set(rotated), 1.0)
    assert v1 == pytest.approx(v0, rel=1e-12)


def test_min_disturbance_bound_values():
    assert min_disturbance_bound(0.0, 1.0) == pytest.approx(math.pi / 3)
    assert min_disturbance_bound(1.0, 1.0) == 0.0
    assert min_disturbance_bound(0.5, 1.0) == pytest.approx(
        math.acos(0.75), rel=1e-12)
    with pytest.raises(DomainError):
        min_disturbance_bound(1.5, 1.0)


def test_rotation_set_hits_requested_visibility():
    rng = np.random.default_rng(17)
    for _ in range(5):
        target = float(rng.uniform(0.0, 0.9))
        m = random_rotation_set(rng, target)
        assert visibility(m, 1.0) == pytest.approx(target, abs=1e-9)
