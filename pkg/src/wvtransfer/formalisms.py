"""
First three transfer moments under five formalisms, and their comparison.

For a measurement family {O_xi} and initial state psi the implemented
formalisms are:

  wv          moments of the weak-valued transfer distribution, from the
              derivative integrands
                  m1 = -i hbar sum int |psi|^2 conj(O) O'
                  m2 = hbar^2  sum int |psi|^2 |O'|^2
                  m3 = (i hbar^3/2) sum int |psi|^2 [conj(O) O''' - O conj(O''')]
  deltaP      differences of the final and initial momentum-distribution
              moments; for sampled states computed spectrally from the
              transforms (an independent route), for delta-slit ensembles
              from the reduced forms.  The third moment carries a 3/(4 sigma^2)
              divergence and is returned as a two-term record.
  heisenberg  moments of (p_f - p_i) as operators; first two computed
              operationally (position-space p-hat algebra), the third from
              the weighted-unitary form hbar^3 sum N int |psi|^2 phi'^3
              (equal to the local Bohmian third moment).
  wigner      moments of the local phase-space transfer density, via its
              half-lag characteristic function O*(x - q/2) O(x + q/2); the
              printed full-lag form fails classical reduction (a pure kick
              would transfer 2 hbar k), so half lags are used throughout.
              m3 = (i hbar^3/4) sum int |psi|^2 [conj(O) O''' + 3 conj(O'') O'].
  bohm        the local trajectory-based density
              sum_xi N_xi int |psi|^2 delta(w - hbar phi_xi'(x)) dx,
              defined for weighted-unitary families only.

All five agree in mean and variance for slowly varying measurements; the
third moments follow the pattern {wv: phi'^3 - phi''', wigner: phi'^3 -
phi'''/4, heisenberg = bohm: phi'^3, deltaP: divergent}.  The comparator
refuses measurement families that vary on the slit scale rather than
reporting misleading agreement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .distributions import DiracAtom, MixedDistribution, atoms_only, merge_atoms
from .errors import PreconditionError, UnsupportedCaseError
from .numerics import GridSpec, gauss_nodes
from .physics import (MeasurementBranch, MeasurementSet, Wavefunction,
                      final_momentum_distribution, momentum_distribution)

TWO_PI = 2.0 * math.pi

FORMALISMS = ("wv", "deltaP", "heisenberg", "wigner_local", "bohm_local")


# ---------------------------------------------------------------------------
# Delta-slit ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSlitEnsemble:
    """Slit positions and weights |psi_k|^2 for the slowly-varying-measurement
    approximation, with the Gaussian regularization width sigma."""

    points: tuple[tuple[float, float], ...]
    sigma: float = 1e-3

    def __post_init__(self):
        total = math.fsum(w for _, w in self.points)
        if abs(total - 1.0) > 1e-12:
            raise PreconditionError("ensemble weights must sum to 1")
        if self.sigma <= 0:
            raise PreconditionError("sigma must be positive")

    @staticmethod
    def twin(s: float, sigma: float = 1e-3) -> "DeltaSlitEnsemble":
        return DeltaSlitEnsemble(((-0.5 * s, 0.5), (0.5 * s, 0.5)), sigma)


State = "Wavefunction | DeltaSlitEnsemble"


def _ensemble_sum(ens: DeltaSlitEnsemble, func) -> complex:
    x = np.array([p for p, _ in ens.points])
    w = np.array([wt for _, wt in ens.points])
    return complex(np.dot(w, np.asarray(func(x), dtype=complex)))


def _state_average(state, func, m_set: MeasurementSet | None = None) -> complex:
    """sum_k w_k f(x_k) or int |psi(x)|^2 f(x) dx."""
    if isinstance(state, DeltaSlitEnsemble):
        return _ensemble_sum(state, func)
    _check_step_branches(state, m_set)
    cuts = tuple(c for b in (m_set.branches if m_set else ()) for c in b.cuts())
    segs = state.segments(cuts)
    x, w = gauss_nodes(segs, max_phase=0.0, base_order=32)
    rho = np.asarray(state.density(x), dtype=float)
    return complex(np.dot(w * rho, np.asarray(func(x), dtype=complex)))


def _check_step_branches(psi: Wavefunction, m_set: MeasurementSet | None
                         ) -> None:
    """Derivative-based integrands ignore the delta at a step; legal only
    when the state has no weight there."""
    if m_set is None:
        return
    for b in m_set.branches:
        if b.phase_derivs is not None or b.derivs is not None:
            continue
        for bp in b.breakpoints:
            rho = float(np.asarray(psi.density(np.array([bp])))[0])
            if rho > 1e-12:
                raise PreconditionError(
                    f"branch {b.label!r} is not differentiable at x = {bp} "
                    "where the state has weight")


def _real(value: complex, what: str, tol: float = 1e-9) -> float:
    if abs(value.imag) > tol * (1.0 + abs(value.real)):
        raise PreconditionError(f"{what} came out complex ({value:.3e})")
    return float(value.real)


# ---------------------------------------------------------------------------
# Weak-valued moments
# ---------------------------------------------------------------------------

def moments_wv(state, m_set: MeasurementSet, n: int, hbar: float = 1.0) -> float:
    """Closed-form moment of the weak-valued transfer distribution."""
    if n not in (1, 2, 3):
        raise PreconditionError("moments are implemented for n = 1, 2, 3")
    total = 0.0 + 0.0j
    for b in m_set.branches:
        if n == 1:
            d1 = b.derivative(1)
            total += _state_average(
                state, lambda x, b=b, d1=d1:
                np.conj(b.value(x)) * np.asarray(d1(x), dtype=complex), m_set)
        elif n == 2:
            d1 = b.derivative(1)
            total += _state_average(
                state, lambda x, d1=d1:
                np.abs(np.asarray(d1(x), dtype=complex)) ** 2, m_set)
        else:
            d3 = b.derivative(3)
            total += _state_average(
                state, lambda x, b=b, d3=d3:
                (np.conj(b.value(x)) * np.asarray(d3(x), dtype=complex)
                 - np.asarray(b.value(x), dtype=complex)
                 * np.conj(np.asarray(d3(x), dtype=complex))), m_set)
    if n == 1:
        return _real(-1j * hbar * total, "first moment")
    if n == 2:
        return _real(hbar ** 2 * total, "second moment")
    return _real(0.5j * hbar ** 3 * total, "third moment")


# ---------------------------------------------------------------------------
# Moments of P_f - P_i
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaPMoment:
    """Moment of the distribution change, possibly sigma-divergent.

    value evaluates finite_part + inv_sigma2_coeff / sigma^2 at the
    ensemble's sigma; divergent marks a nonzero 1/sigma^2 coefficient."""

    finite_part: float
    inv_sigma2_coeff: float
    sigma: float | None
    divergent: bool

    @property
    def value(self) -> float:
        if self.inv_sigma2_coeff == 0.0 or self.sigma is None:
            return self.finite_part
        return self.finite_part + self.inv_sigma2_coeff / self.sigma ** 2


def _spectral_delta_moment(psi: Wavefunction, m_set: MeasurementSet, n: int,
                           hbar: float) -> float:
    """integral p^n (P_f - P_i) dp on a shared grid (independent route)."""
    from .numerics import simpson_mass
    p_i = momentum_distribution(psi, None, hbar)
    p_f = final_momentum_distribution(psi, m_set, p_i.grid, hbar)
    p = p_i.grid.points
    return simpson_mass((p_f.density - p_i.density) * p ** n,
                        p_i.grid.spacing)


def moments_deltaP(state, m_set: MeasurementSet, n: int,
                   hbar: float = 1.0) -> DeltaPMoment:
    """Moments of P_f(p) minus P_i(p).

    Sampled states go through the spectral route; ensembles use the reduced
    slow-variation forms, whose third moment carries the 3/(4 sigma^2) term.
    """
    if n not in (1, 2, 3):
        raise PreconditionError("moments are implemented for n = 1, 2, 3")
    if isinstance(state, DeltaSlitEnsemble):
        if n in (1, 2):
            return DeltaPMoment(moments_wv(state, m_set, n, hbar), 0.0,
                                state.sigma, False)
        finite = 0.0 + 0.0j
        coeff = 0.0 + 0.0j
        for b in m_set.branches:
            d1, d2_, d3 = (b.derivative(k) for k in (1, 2, 3))
            finite += _ensemble_sum(
                state, lambda x, b=b, d1=d1, d2_=d2_, d3=d3:
                np.conj(b.value(x)) * np.asarray(d3(x), dtype=complex)
                + 3.0 * np.conj(np.asarray(d2_(x), dtype=complex))
                * np.asarray(d1(x), dtype=complex))
            coeff += _ensemble_sum(
                state, lambda x, b=b, d1=d1:
                np.conj(b.value(x)) * np.asarray(d1(x), dtype=complex))
        finite_r = _real(0.25j * hbar ** 3 * finite, "deltaP third moment")
        coeff_r = _real(-0.75j * hbar ** 3 * coeff, "deltaP divergence")
        if abs(coeff_r) < 1e-12 * (1.0 + abs(finite_r)):
            coeff_r = 0.0
        return DeltaPMoment(finite_r, coeff_r, state.sigma, coeff_r != 0.0)
    if state.derivative is None:
        raise PreconditionError("spectral route needs a smooth state")
    value = _spectral_delta_moment(state, m_set, n, hbar)
    return DeltaPMoment(value, 0.0, None, False)


# ---------------------------------------------------------------------------
# Heisenberg-picture moments of p_f - p_i
# ---------------------------------------------------------------------------

def _unitary_only(m_set: MeasurementSet, what: str) -> None:
    if not m_set.is_unitary_family():
        raise UnsupportedCaseError(
            f"{what} requires a weighted-unitary (phase-kick) family")


def moments_heisenberg(state, m_set: MeasurementSet, n: int,
                       hbar: float = 1.0) -> float:
    """Moments of the operator difference p_f - p_i.

    n = 1, 2 are computed operationally for sampled states (p-hat algebra in
    position space) and from the reduced forms for ensembles; both coincide
    with the weak-valued expressions.  n = 3 uses the weighted-unitary form
    hbar^3 sum_xi N_xi <phi_xi'^3> (equal to the Bohmian third moment); for
    non-unitary differentiable families the derivative form
    -i hbar^3 sum int |psi|^2 conj(O) conj(O)' O'^2 is used.
    """
    if n not in (1, 2, 3):
        raise PreconditionError("moments are implemented for n = 1, 2, 3")
    if n == 3:
        if m_set.is_unitary_family():
            total = 0.0 + 0.0j
            for b in m_set.branches:
                d1 = b.phase_derivs[0]
                total += b.weight * _state_average(
                    state, lambda x, d1=d1:
                    np.asarray(d1(x), dtype=float) ** 3, m_set)
            return _real(hbar ** 3 * total, "heisenberg third moment")
        total = 0.0 + 0.0j
        for b in m_set.branches:
            d1 = b.derivative(1)
            total += _state_average(
                state, lambda x, b=b, d1=d1:
                np.conj(b.value(x)) * np.conj(np.asarray(d1(x), dtype=complex))
                * np.asarray(d1(x), dtype=complex) ** 2, m_set)
        return _real(-1j * hbar ** 3 * total, "heisenberg third moment")
    if isinstance(state, DeltaSlitEnsemble):
        return moments_wv(state, m_set, n, hbar)
    psi = state
    if psi.derivative is None or psi.second_derivative is None:
        raise PreconditionError("operational route needs psi' and psi''")
    cuts = tuple(c for b in m_set.branches for c in b.cuts())
    segs = psi.segments(cuts)
    x, w = gauss_nodes(segs, max_phase=0.0, base_order=32)
    psi_x = np.asarray(psi.amplitude(x), dtype=complex)
    dpsi = np.asarray(psi.derivative(x), dtype=complex)
    d2psi = np.asarray(psi.second_derivative(x), dtype=complex)
    if n == 1:
        # sum <(O psi)| p |(O psi)> - <psi| p |psi>
        total = 0.0 + 0.0j
        for b in m_set.branches:
            o = np.asarray(b.value(x), dtype=complex)
            do = np.asarray(b.derivative(1)(x), dtype=complex)
            f = o * psi_x
            df = do * psi_x + o * dpsi
            total += np.dot(w, np.conj(f) * df)
        total -= np.dot(w, np.conj(psi_x) * dpsi)
        return _real(-1j * hbar * complex(total), "heisenberg first moment")
    # n == 2:  <p_f^2> - 2 Re <p_f p_i> + <p_i^2> expanded operationally
    total = 0.0 + 0.0j
    for b in m_set.branches:
        o = np.asarray(b.value(x), dtype=complex)
        do = np.asarray(b.derivative(1)(x), dtype=complex)
        f = o * psi_x
        df = do * psi_x + o * dpsi
        # <f| p^2 |f> = hbar^2 int |f'|^2
        total += np.dot(w, np.abs(df) ** 2)
        # -2 Re <f| p |O p psi> = +2 hbar^2 Re int conj(f) (O psi')'
        g = do * dpsi + o * d2psi
        total += 2.0 * np.real(np.dot(w, np.conj(f) * g))
    total += np.dot(w, np.abs(dpsi) ** 2)
    return _real(hbar ** 2 * complex(total), "heisenberg second moment")


# ---------------------------------------------------------------------------
# Local Wigner moments
# ---------------------------------------------------------------------------

def wigner_char_value(state, m_set: MeasurementSet, q: float,
                      hbar: float = 1.0) -> complex:
    """Half-lag characteristic function sum int |psi|^2 O*(x-q/2) O(x+q/2)."""
    total = 0.0 + 0.0j
    for b in m_set.branches:
        def f(x, b=b):
            return (np.conj(np.asarray(b.value(x - 0.5 * q), dtype=complex))
                    * np.asarray(b.value(x + 0.5 * q), dtype=complex))
        total += _state_average(state, f, None)
    return complex(total)


def moments_wigner_local(state, m_set: MeasurementSet, n: int,
                         hbar: float = 1.0) -> float:
    """Moments of the local phase-space transfer density (half-lag
    convention); first two equal the weak-valued ones, the third is
    (i hbar^3/4) sum int |psi|^2 [conj(O) O''' + 3 conj(O'') O']."""
    if n not in (1, 2, 3):
        raise PreconditionError("moments are implemented for n = 1, 2, 3")
    if n in (1, 2):
        return moments_wv(state, m_set, n, hbar)
    total = 0.0 + 0.0j
    for b in m_set.branches:
        d1, d2_, d3 = (b.derivative(k) for k in (1, 2, 3))
        total += _state_average(
            state, lambda x, b=b, d1=d1, d2_=d2_, d3=d3:
            np.conj(b.value(x)) * np.asarray(d3(x), dtype=complex)
            + 3.0 * np.conj(np.asarray(d2_(x), dtype=complex))
            * np.asarray(d1(x), dtype=complex), m_set)
    return _real(0.25j * hbar ** 3 * total, "wigner third moment")


# ---------------------------------------------------------------------------
# Local Bohmian moments and distribution
# ---------------------------------------------------------------------------

def moments_bohm_local(state, m_set: MeasurementSet, n: int,
                       hbar: float = 1.0) -> float:
    """Moments of the local Bohmian transfer density: sum_xi N_xi
    <(hbar phi_xi')^n>; weighted-unitary families only."""
    _unitary_only(m_set, "local Bohmian moments")
    total = 0.0 + 0.0j
    for b in m_set.branches:
        d1 = b.phase_derivs[0]
        total += b.weight * _state_average(
            state, lambda x, d1=d1: np.asarray(d1(x), dtype=float) ** n, m_set)
    return _real(hbar ** n * total, "bohm moment")


def bohm_local_distribution(state, m_set: MeasurementSet,
                            p_grid: GridSpec | None = None,
                            hbar: float = 1.0) -> MixedDistribution:
    """Pushforward of hbar phi'(x) under sum_xi N_xi |psi(x)|^2 dx.

    Branches with constant phi' produce atoms; varying phi' is binned onto
    the momentum grid as a density."""
    _unitary_only(m_set, "the local Bohmian distribution")
    atoms: list[DiracAtom] = []
    if p_grid is None:
        extreme = 8.0 * hbar
        for b in m_set.branches:
            lo, hi = _phi_range(b, state, hbar)
            extreme = max(extreme, abs(lo), abs(hi))
        p_grid = GridSpec.symmetric(extreme + 1.0, 4001)
    grid = p_grid
    dens = np.zeros(grid.n_points)
    edges = np.linspace(grid.x_min - 0.5 * grid.spacing,
                        grid.x_max + 0.5 * grid.spacing, grid.n_points + 1)
    for b in m_set.branches:
        d1 = b.phase_derivs[0]
        if isinstance(state, DeltaSlitEnsemble):
            for x_k, w_k in state.points:
                loc = hbar * float(np.asarray(d1(np.array([x_k])))[0])
                atoms.append(DiracAtom(loc, b.weight * w_k))
            continue
        lo, hi = _phi_range(b, state, hbar)
        if abs(hi - lo) < 1e-12:
            atoms.append(DiracAtom(0.5 * (lo + hi), b.weight))
            continue
        segs = state.segments(b.cuts())
        x, w = gauss_nodes(segs, max_phase=0.0, base_order=48)
        rho = np.asarray(state.density(x), dtype=float)
        values = hbar * np.asarray(d1(x), dtype=float)
        hist, _ = np.histogram(values, bins=edges,
                               weights=b.weight * w * rho)
        dens += hist / grid.spacing
        densities.append(hist)
    return MixedDistribution(grid, dens, merge_atoms(atoms))


def _phi_range(branch: MeasurementBranch, state, hbar: float
               ) -> tuple[float, float]:
    d1 = branch.phase_derivs[0]
    if isinstance(state, DeltaSlitEnsemble):
        vals = [hbar * float(np.asarray(d1(np.array([x])))[0])
                for x, _ in state.points]
        return min(vals), max(vals)
    samples = []
    for a, b in state.support_windows:
        samples.append(hbar * np.asarray(
            d1(np.linspace(a, b, 101)), dtype=float))
    allv = np.concatenate(samples)
    return float(np.min(allv)), float(np.max(allv))


# ---------------------------------------------------------------------------
# Comparison table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormalismMoments:
    m1: float
    m2: float
    m3: float
    divergent: bool = False
    sigma_dependence: str = ""


@dataclass(frozen=True)
class MomentTable:
    """Per-formalism first/second/third moments of the momentum transfer."""

    entries: Mapping[str, FormalismMoments]
    regime_ok: bool = True

    def as_dict(self) -> dict:
        return {name: {"m1": fm.m1, "m2": fm.m2, "m3": fm.m3,
                       "divergent": fm.divergent,
                       "sigma_dependence": fm.sigma_dependence}
                for name, fm in self.entries.items()}


def check_slow_variation(state, m_set: MeasurementSet,
                         ratio_tol: float = 0.01) -> float:
    """max |phi'''| sigma^2 / max(|phi'|) over the slits; the slow-variation
    expansion is trusted only when this is small."""
    _unitary_only(m_set, "the moment comparison")
    sigma = state.sigma if isinstance(state, DeltaSlitEnsemble) else \
        (state.spec.sigma_slit or 0.0)
    worst = 0.0
    for b in m_set.branches:
        d1, _, d3 = b.phase_derivs
        if isinstance(state, DeltaSlitEnsemble):
            xs = np.array([x for x, _ in state.points])
        else:
            xs = np.concatenate([np.linspace(a, b_, 51)
                                 for a, b_ in state.support_windows])
        v1 = np.max(np.abs(np.asarray(d1(xs), dtype=float)))
        v3 = np.max(np.abs(np.asarray(d3(xs), dtype=float)))
        if v3 == 0.0:
            continue
        scale = max(v1, 1e-12)
        worst = max(worst, v3 * sigma ** 2 / scale)
    return worst


def compare_report(state, m_set: MeasurementSet, hbar: float = 1.0,
                   allow_outside_regime: bool = False,
                   ratio_tol: float = 0.01) -> MomentTable:
    """Five-formalism moment table for a slowly varying unitary measurement."""
    ratio = check_slow_variation(state, m_set, ratio_tol)
    regime_ok = ratio <= ratio_tol
    if not regime_ok:
        msg = (f"measurement varies on the slit scale (ratio {ratio:.3g}); "
               "moment agreement would be misleading")
        if not allow_outside_regime:
            raise PreconditionError(msg)
        warnings.warn(msg, stacklevel=2)
    entries = {}
    wv = [moments_wv(state, m_set, n, hbar) for n in (1, 2, 3)]
    entries["wv"] = FormalismMoments(*wv)
    dp = [moments_deltaP(state, m_set, n, hbar) for n in (1, 2, 3)]
    entries["deltaP"] = FormalismMoments(
        dp[0].value, dp[1].value, dp[2].finite_part,
        divergent=dp[2].divergent,
        sigma_dependence=(f"+ {dp[2].inv_sigma2_coeff:.6g}/sigma^2"
                          if dp[2].divergent else ""))
    entries["heisenberg"] = FormalismMoments(
        *[moments_heisenberg(state, m_set, n, hbar) for n in (1, 2, 3)])
    entries["wigner_local"] = FormalismMoments(
        *[moments_wigner_local(state, m_set, n, hbar) for n in (1, 2, 3)])
    entries["bohm_local"] = FormalismMoments(
        *[moments_bohm_local(state, m_set, n, hbar) for n in (1, 2, 3)])
    return MomentTable(entries, regime_ok)
