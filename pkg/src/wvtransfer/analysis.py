"""
Width measures and apodized moments of mixed momentum distributions.

Moments of the transfer distribution are often undefined in the strict sense
(oscillatory 1/p tails); they are assigned values by apodization,

    <p^n> = lim_{kappa->inf} integral D(p) p^n exp(-|p|/kappa) dp,

evaluated on a geometric kappa ladder and extrapolated to 1/kappa -> 0.
Two evaluation routes are provided:

* sample route (`apodized_moment`): Simpson over the stored density plus
  damped lobe series over the tail models.  Reliable whenever |p|^n times
  the density still decays across the grid; the extrapolation-residual check
  turns anything else into an explicit "undefined" result.

* characteristic route (`char_apodized_moment`): the same integral written
  against the characteristic function,

      <p^n>_kappa = (1/2 pi hbar) integral Phi(q) K_n(q; kappa) dq,

  with the closed-form kernel K_n = FT[p^n exp(-|p|/kappa)].  The kernel
  concentrates sign-cancelling mass at |q| ~ 1/kappa, where Phi of any
  gapped twin-slit state is exactly flat; that part integrates in closed
  form against the plateau, the rest against pointwise (breakpoint-aware)
  evaluations of Phi.  No large-number cancellation ever reaches floating
  point, so the route stays accurate for high moments at large kappa -- the
  regime where the direct integral is hopeless in double precision.

Width measures: support half-width, apodized n-norms, and the
epsilon-confidence half-width min{p : integral_{-p}^{p} D = epsilon} found
by first crossing (cumulative lobe accounting beyond the grid), plus the
disturbance-bound verdict for a measurement of visibility V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .distributions import MixedDistribution
from .errors import ConfidenceNotAttainedError, DomainError, PreconditionError
from .numerics import (cumulative_density, neville_extrapolate,
                       osc_tail_integral, polynomial_extrapolate,
                       simpson_mass)
from .physics import MeasurementSet, Wavefunction, min_disturbance_bound
from .transfer import CharFunction, char_lag_breakpoints, char_value

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Apodization ladder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApodizationSpec:
    """Exponential apodization family f_kappa(p) = exp(-|p|/kappa).

    kappa_ladder is geometric, kappa0 * 2^j for rungs entries; extrapolation
    to kappa -> inf is polynomial in 1/kappa of the given order, or the full
    Neville tableau when method = "neville".
    """

    kappa0: float = 8.0
    rungs: int = 6
    order: int = 2
    method: str = "poly"

    def __post_init__(self):
        if self.kappa0 <= 0 or self.rungs < 2:
            raise DomainError("need kappa0 > 0 and at least two rungs")
        if self.method not in ("poly", "neville"):
            raise DomainError("method must be 'poly' or 'neville'")

    @property
    def kappa_ladder(self) -> tuple[float, ...]:
        return tuple(self.kappa0 * 2.0 ** j for j in range(self.rungs))

    def extrapolate(self, values) -> tuple[float, float]:
        u = np.array([1.0 / k for k in self.kappa_ladder])
        v = np.asarray(values, dtype=float)
        if self.method == "neville":
            return neville_extrapolate(u, v)
        return polynomial_extrapolate(u, v, self.order)


@dataclass(frozen=True)
class MomentResult:
    """Extrapolated apodized moment with its bookkeeping."""

    value: float
    defined_without_apodization: bool
    residual: float
    ladder_values: tuple[float, ...]
    undefined: bool = False


def _tails_define_moment(dist: MixedDistribution, n: int) -> bool:
    """True when the unapodized tail integrals of |p|^n D converge."""
    for side, start in ((dist.tails[0], abs(dist.grid.x_min)),
                        (dist.tails[1], dist.grid.x_max)):
        for model in side:
            if model.wavenumber == 0.0:
                if model.decay_power - n <= 1.0:
                    return False
            else:
                res = osc_tail_integral(model, n, start, max_lobes=200)
                if not res.converged:
                    return False
    return True


def _ladder_value(dist: MixedDistribution, n: int, kappa: float,
                  absolute: bool) -> float:
    """integral D(p) w_n(p) exp(-|p|/kappa) dp, w_n = p^n or |p|^n."""
    p = dist.grid.points
    weight = np.abs(p) ** n if absolute else p ** n
    grid_part = simpson_mass(dist.density * weight * np.exp(-np.abs(p) / kappa),
                             dist.grid.spacing)
    atom_part = 0.0
    for a in dist.atoms:
        w_loc = abs(a.location) ** n if absolute else a.location ** n
        atom_part += a.weight * w_loc * math.exp(-abs(a.location) / kappa)
    tail_part = 0.0
    for side_idx, (side, start) in enumerate(
            ((dist.tails[0], abs(dist.grid.x_min)),
             (dist.tails[1], dist.grid.x_max))):
        sign = (-1.0) ** n if (side_idx == 0 and not absolute) else 1.0
        for model in side:
            res = osc_tail_integral(model, n, start, damping_rate=1.0 / kappa)
            if not res.converged:
                return math.nan
            tail_part += sign * res.value
    return grid_part + atom_part + tail_part


def apodized_moment(dist: MixedDistribution, n: int,
                    spec: ApodizationSpec | None = None,
                    absolute: bool = False, scale: float = 1.0,
                    residual_tol: float = 1e-4) -> MomentResult:
    """Sample-route apodized moment of a mixed distribution.

    Returns an "undefined" result (NaN value) instead of a number when the
    ladder fails to extrapolate within residual_tol * scale^n.
    """
    if n < 0:
        raise DomainError("moment order must be >= 0")
    if n > 8:
        raise DomainError("moment orders above 8 are rejected: "
                          "extrapolation noise dominates")
    spec = spec or ApodizationSpec()
    ladder = [_ladder_value(dist, n, kappa, absolute)
              for kappa in spec.kappa_ladder]
    defined = _tails_define_moment(dist, n)
    if any(math.isnan(v) for v in ladder):
        return MomentResult(math.nan, defined, math.inf, tuple(ladder), True)
    value, residual = spec.extrapolate(ladder)
    if residual > residual_tol * scale ** n:
        return MomentResult(math.nan, defined, residual, tuple(ladder), True)
    return MomentResult(value, defined, residual, tuple(ladder))


# ---------------------------------------------------------------------------
# Characteristic-function (kernel) route
# ---------------------------------------------------------------------------

def _kernel_even(q: np.ndarray, n: int, a: float, hbar: float) -> np.ndarray:
    """Even part: FT of |p|^n e^{-|p|/kappa}; also of p^n for even n."""
    zp = a + 1j * np.asarray(q, dtype=float) / hbar
    return 2.0 * math.factorial(n) * np.real(zp ** (-(n + 1)))


def _kernel_odd(q: np.ndarray, n: int, a: float, hbar: float) -> np.ndarray:
    """Odd part (as +i * this): from FT of p^n e^{-|p|/kappa}, odd n."""
    zp = a + 1j * np.asarray(q, dtype=float) / hbar
    return -2.0 * math.factorial(n) * np.imag(zp ** (-(n + 1)))


def _box_even(q: float, n: int, a: float, hbar: float) -> float:
    """integral_{-q}^{q} kernel_even dq', closed form."""
    zp = a + 1j * q / hbar
    if n == 0:
        return float(4.0 * hbar * np.angle(zp))
    return float(-4.0 * hbar * math.factorial(n - 1) * np.imag(zp ** (-n)))


def char_apodized_moment(psi: Wavefunction, m_set: MeasurementSet, n: int,
                         spec: ApodizationSpec | None = None,
                         hbar: float = 1.0, absolute: bool = False,
                         scale: float = 1.0, residual_tol: float = 1e-4,
                         plateau_tol: float = 1e-10) -> MomentResult:
    """Apodized moment via pointwise characteristic-function evaluation.

    Splits the q-axis into the exact central plateau of Phi (integrated in
    closed form against the kernel), the structured region (breakpoint-aware
    Gauss-Legendre against evaluated Phi), and the flat far zone (closed
    form against the asymptotic constant).
    """
    if n < 0 or n > 8:
        raise DomainError("moment order must lie in 0..8")
    spec = spec or ApodizationSpec()
    breaks = char_lag_breakpoints(psi, m_set)
    if not breaks:
        raise PreconditionError("state/measurement carry no structure")
    q_max = breaks[-1] * 1.05 + 0.5
    phi0 = char_value(psi, m_set, 0.0, hbar)
    if abs(phi0 - 1.0) > 1e-6:
        raise PreconditionError(f"Phi(0) = {phi0:.9g}, expected 1")
    w_inf = 0.5 * (char_value(psi, m_set, q_max, hbar)
                   + char_value(psi, m_set, -q_max, hbar))
    if abs(char_value(psi, m_set, 1.25 * q_max, hbar) - w_inf) > 1e-9:
        raise PreconditionError("Phi has not flattened beyond its structure")
    # exact plateau: the smallest structural lag, verified
    q0 = 0.9999 * breaks[0]
    if abs(char_value(psi, m_set, q0, hbar) - phi0) > plateau_tol:
        q0 = 0.0

    odd_signed = (not absolute) and (n % 2 == 1)
    # Gauss nodes on [q0, q_max], cut at the structural lags, refined near q0
    cuts = [b for b in breaks if q0 < b < q_max]
    refine = [q0 * 2.0 ** j for j in range(1, 6)] if q0 > 0 else []
    pts = sorted({q0, q_max, *cuts, *(r for r in refine if q0 < r < q_max)})
    t, w_leg = np.polynomial.legendre.leggauss(32)
    nodes, weights = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        nodes.append(0.5 * (hi - lo) * (t + 1.0) + lo)
        weights.append(0.5 * (hi - lo) * w_leg)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    phi_nodes = np.array([char_value(psi, m_set, float(q), hbar)
                          for q in nodes])
    if odd_signed:
        phi_part = 2.0 * np.imag(phi_nodes)    # from Phi(q) - Phi(-q)
    else:
        phi_part = 2.0 * np.real(phi_nodes)    # from Phi(q) + Phi(-q)

    ladder = []
    for kappa in spec.kappa_ladder:
        a = 1.0 / kappa
        if odd_signed:
            # constants integrate to zero against the odd kernel
            kern = _kernel_odd(nodes, n, a, hbar)
            total = float(np.dot(weights, phi_part * kern))
        else:
            kern = _kernel_even(nodes, n, a, hbar)
            total = float(np.dot(weights, phi_part * kern))
            if q0 > 0.0:
                total += float(np.real(phi0)) * _box_even(q0, n, a, hbar)
            s_inf = TWO_PI * hbar if n == 0 else 0.0
            total += float(np.real(w_inf)) * (s_inf - _box_even(q_max, n, a, hbar))
        ladder.append(total / (TWO_PI * hbar))
    value, residual = spec.extrapolate(ladder)
    if residual > residual_tol * scale ** n:
        return MomentResult(math.nan, False, residual, tuple(ladder), True)
    return MomentResult(value, False, residual, tuple(ladder))


def char_local_moment(phi: CharFunction, n: int, hbar: float = 1.0,
                      window: float = 0.5, degree: int | None = None) -> float:
    """Moment from a polynomial fit to Phi(q) near q = 0:
    <p^n> = (-i hbar d/dq)^n Phi |_0 evaluated on the fitted polynomial."""
    degree = degree if degree is not None else n + 4
    q = phi.q_grid.points
    mask = np.abs(q) <= window
    coeffs = np.polynomial.polynomial.polyfit(q[mask], phi.values[mask], degree)
    return float(np.real((-1j * hbar) ** n * math.factorial(n) * coeffs[n]))


# ---------------------------------------------------------------------------
# Width measures
# ---------------------------------------------------------------------------

def support_halfwidth(dist: MixedDistribution, floor: float = 1e-9) -> float:
    """Smallest p with all atoms and density mass inside (-p, p); inf when a
    tail model keeps oscillating forever."""
    for side in dist.tails:
        for model in side:
            if abs(model.amplitude) > floor:
                return math.inf
    best = 0.0
    for a in dist.atoms:
        if abs(a.weight) > floor:
            best = max(best, abs(a.location))
    mask = np.abs(dist.density) > floor
    if np.any(mask):
        best = max(best, float(np.max(np.abs(dist.grid.points[mask]))))
    return best


def n_norm(dist: MixedDistribution, n: int,
           spec: ApodizationSpec | None = None,
           char_source: tuple[Wavefunction, MeasurementSet] | None = None,
           hbar: float = 1.0, scale: float = 1.0) -> MomentResult:
    """[integral D(p) |p|^n dp]^(1/n), apodized when necessary.

    With char_source = (psi, measurement) the kernel route is used, which
    stays accurate even when the unapodized integrand diverges strongly.
    """
    if n < 1:
        raise DomainError("n-norm needs n >= 1")
    # |p|^n strips the integrand's sign alternation, so "defined without
    # apodization" here means absolute convergence of the tails
    defined = all(model.decay_power - n > 1.0
                  for side in dist.tails for model in side)
    if char_source is not None:
        raw = char_apodized_moment(char_source[0], char_source[1], n, spec,
                                   hbar, absolute=True, scale=scale)
    else:
        raw = apodized_moment(dist, n, spec, absolute=True, scale=scale)
    if raw.undefined or raw.value < 0.0:
        return MomentResult(math.nan, defined, raw.residual,
                            raw.ladder_values, True)
    return MomentResult(raw.value ** (1.0 / n), defined, raw.residual,
                        raw.ladder_values, False)


def confidence_halfwidth(dist: MixedDistribution, eps: float,
                         max_tail_lobes: int = 1000,
                         tol: float = 1e-10) -> float:
    """min{p : atoms(|loc| <= p) + integral_{-p}^{p} D = eps}, first crossing.

    The cumulative is assembled from local-cubic prefix integrals on the
    grid and compensated lobe sums beyond it; the crossing is refined by
    bisection.  Ties resolve toward smaller p.
    """
    if not 0.0 < eps <= 1.0 + 1e-12:
        raise DomainError("confidence level must lie in (0, 1]")
    p = dist.grid.points
    prefix = cumulative_density(p, dist.density)
    atom_radii = sorted({abs(a.location) for a in dist.atoms})

    def cumulative(radius: float) -> float:
        total = math.fsum(a.weight for a in dist.atoms
                          if abs(a.location) <= radius * (1 + 1e-13) + 1e-300)
        hi = float(np.interp(radius, p, prefix))
        lo = float(np.interp(-radius, p, prefix))
        return total + (hi - lo)

    zero_idx = int(np.argmin(np.abs(p)))
    radii = p[zero_idx:].copy()
    radii[0] = 0.0
    knots = np.unique(np.concatenate([radii, np.asarray(atom_radii)])) \
        if atom_radii else radii
    values = np.array([cumulative(r) for r in knots])
    hits = np.where(np.abs(values - eps) <= tol)[0]
    crossings = np.where(np.diff(np.sign(values - eps)) != 0)[0]
    candidates = []
    if hits.size:
        candidates.append(float(knots[hits[0]]))
    if crossings.size:
        k = int(crossings[0])
        lo_k, hi_k = float(knots[k]), float(knots[k + 1])
        found = None
        for r in (r for r in atom_radii if lo_k < r <= hi_k):
            below = cumulative(r * (1.0 - 1e-12))
            if (below - eps) * (cumulative(r) - eps) <= 0.0:
                found = r  # the crossing happens in an atom's jump
                break
        if found is None:
            a_, b_ = lo_k, hi_k
            fa = float(values[k]) - eps
            for _ in range(80):
                mid = 0.5 * (a_ + b_)
                fm = cumulative(mid) - eps
                if fa * fm <= 0.0:
                    b_ = mid
                else:
                    a_, fa = mid, fm
            found = 0.5 * (a_ + b_)
        candidates.append(found)
    if candidates:
        return min(candidates)

    # continue beyond the grid, lobe by lobe on the tail models
    if not dist.has_tails():
        raise ConfidenceNotAttainedError(
            f"cumulative mass reaches {values[-1]:.6f} < eps = {eps}")
    start = dist.grid.x_max
    running = float(values[-1])
    ks = [m.wavenumber for side in dist.tails for m in side if m.wavenumber > 0]
    step = math.pi / max(ks) / 2.0 if ks else start
    t16, w16 = np.polynomial.legendre.leggauss(16)

    def segment_mass(lo: float, hi: float) -> float:
        x = 0.5 * (hi - lo) * (t16 + 1.0) + lo
        out = 0.0
        for side in (0, 1):
            for model in dist.tails[side]:
                out += float(np.dot(w16, model(x))) * 0.5 * (hi - lo)
        return out

    comp = 0.0  # Neumaier compensation
    u = start
    for _ in range(2 * max_tail_lobes):
        seg = segment_mass(u, u + step)
        prev = running
        total = running + seg
        if abs(running) >= abs(seg):
            comp += (running - total) + seg
        else:
            comp += (seg - total) + running
        running = total
        if (prev + comp - eps) * (running + comp - eps) <= 0.0 and seg != 0.0:
            a_, b_ = u, u + step
            fa = prev + comp - eps
            for _ in range(60):
                mid = 0.5 * (a_ + b_)
                fm = prev + comp + segment_mass(u, mid) - eps
                if fa * fm <= 0.0:
                    b_ = mid
                else:
                    a_, fa = mid, fm
            return 0.5 * (a_ + b_)
        u += step
    raise ConfidenceNotAttainedError(
        f"confidence level {eps} not attained within {max_tail_lobes} lobes")


@dataclass(frozen=True)
class BoundVerdict:
    passed: bool
    witness: float
    outside_mass: float
    bound: float


def verify_support_bound(dist: MixedDistribution, v: float, s: float,
                         hbar: float = 1.0,
                         mass_floor: float = 1e-3) -> BoundVerdict:
    """Check that |mass| outside (-b, b), b = (hbar/s) arccos[(V+1)/2],
    exceeds the floor; returns the witnessing momentum."""
    b = min_disturbance_bound(v, s, hbar)
    if v >= 1.0 - 1e-12:
        return BoundVerdict(True, 0.0, 0.0, 0.0)  # b = 0: vacuous
    p = dist.grid.points
    outside = np.abs(p) > b
    mass = 0.0
    witness = b
    if np.any(outside):
        dens_abs = np.abs(dist.density[outside])
        mass += simpson_mass(dens_abs, dist.grid.spacing)
        if dens_abs.size:
            witness = float(p[outside][np.argmax(dens_abs)])
    for a in dist.atoms:
        if abs(a.location) > b:
            mass += abs(a.weight)
            witness = a.location
    for side, start in ((dist.tails[0], abs(dist.grid.x_min)),
                        (dist.tails[1], dist.grid.x_max)):
        for model in side:
            edge = max(start, b)
            if model.decay_power > 1.0:
                mass += (2.0 / math.pi) * abs(model.amplitude) \
                    / ((model.decay_power - 1.0) * edge ** (model.decay_power - 1.0))
            elif abs(model.amplitude) > 0:
                mass = math.inf
    return BoundVerdict(mass > mass_floor, abs(witness), mass, b)


@dataclass(frozen=True)
class WidthReport:
    """Bundle of width measures for one transfer distribution."""

    support_halfwidth: float
    n_norms: Mapping[int, MomentResult]
    confidence_halfwidth: Mapping[float, float]
    bound_h_over_6s: bool
    conjecture_h_over_4s: bool
    extras: Mapping[str, float] = field(default_factory=dict)


def width_report(dist: MixedDistribution, v: float, s: float,
                 hbar: float = 1.0, spec: ApodizationSpec | None = None,
                 char_source: tuple[Wavefunction, MeasurementSet] | None = None,
                 norms: tuple[int, ...] = (1, 2),
                 confidences: tuple[float, ...] = (1.0,)) -> WidthReport:
    """Assemble support / n-norm / confidence widths and the bound verdicts."""
    verdict = verify_support_bound(dist, v, s, hbar)
    conf = {}
    for eps in confidences:
        try:
            conf[eps] = confidence_halfwidth(dist, eps)
        except ConfidenceNotAttainedError:
            conf[eps] = math.nan
    h = TWO_PI * hbar
    conjecture = all(math.isnan(c) or c >= h / (4.0 * s) - 1e-3 * hbar / s
                     for c in conf.values())
    return WidthReport(
        support_halfwidth=support_halfwidth(dist),
        n_norms={n: n_norm(dist, n, spec, char_source=char_source, hbar=hbar)
                 for n in norms},
        confidence_halfwidth=conf,
        bound_h_over_6s=verdict.passed,
        conjecture_h_over_4s=conjecture,
        extras={"bound": verdict.bound, "witness": verdict.witness,
                "outside_mass": verdict.outside_mass})
