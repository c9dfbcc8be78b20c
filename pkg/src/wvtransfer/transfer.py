"""
Weak-valued momentum-transfer distributions by two independent routes.

Route 1 (`compute_pwv`): the spectral product formula

    P(w) = sum_xi Re{ O~_xi(w) Q~_xi*(w) },     Q_xi(x) = O_xi(x) |psi(x)|^2.

Q_xi is integrable, so Q~_xi is an ordinary function computed by quadrature.
O~_xi is distribution-valued: plane-wave parts give Dirac atoms (the only
atom sources: w = 0 from asymptotic constants and w = hbar*k from declared
plane waves), odd-step parts give principal-value poles whose products with
Q~ are regular wherever the pole residue vanishes, and the decaying
remainder is quadratured.

Route 2 (`pwv_from_char`): the characteristic function

    Phi(q) = sum_xi int |psi(x)|^2 (1/2)[O_xi(x) O_xi*(x-q)
                                         + O_xi*(x) O_xi(x+q)] dx,

which is absolutely convergent, satisfies Phi(0) = 1 and |Phi| <= 1 for any
complete measurement, and inverts to the transfer distribution.  The atom at
w = 0 is the stabilized asymptotic mean of Phi; the remainder inverts to the
continuous density.  Agreement of the two routes is the main internal
cross-check of the distributional bookkeeping.

`closed_form_pwv` evaluates the minimal-measurement (Theta(+-x)) results for
the catalog states; the cos^n family is derived here from the product
formula (binomial sinc sum, cross-checked against an equivalent
Gamma-product form) because a direct evaluation is both simple and exactly
normalized.

Conventions: a pure-kick branch sqrt(N) e^{i k x} transfers momentum +hbar k
(atom at w = +hbar k), consistent with the final distribution being the
initial one shifted by +hbar k.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

import numpy as np

from .distributions import (DiracAtom, MixedDistribution, fit_tails,
                            merge_atoms)
from .errors import (AtomExtractionError, PreconditionError, RangeError,
                     UnsupportedCaseError)
from .numerics import (GridSpec, SampledComplexFunction, TailModel,
                       gauss_nodes, inverse_transform_samples,
                       richardson_pair, split_segments, transform_callable)
from .physics import (COSINE_POWER, NARROW, RECTANGULAR, MeasurementSet,
                      SlitSpec, Wavefunction, build_state, heaviside_set,
                      is_rectangular)

TWO_PI = 2.0 * math.pi


def default_transfer_grid(hbar: float = 1.0, s: float = 1.0,
                          half_span: float = 40.0, n_points: int = 4001
                          ) -> GridSpec:
    return GridSpec.symmetric(half_span * hbar / s, n_points)


# ---------------------------------------------------------------------------
# Route 1: spectral product formula
# ---------------------------------------------------------------------------

def _branch_q_transform(branch, psi: Wavefunction, p: np.ndarray,
                        hbar: float) -> Callable[[np.ndarray], np.ndarray]:
    """Q~_xi evaluated on p, cached; Q_xi = O_xi |psi|^2 has compact support."""
    segs = psi.segments(branch.cuts())
    max_k = max([abs(pw.wavenumber) for pw in branch.plane_waves]
                + [abs(sg.wavenumber) for sg in branch.sgn_components] + [0.0])

    def q_func(x):
        return (np.asarray(branch.value(x), dtype=complex)
                * np.asarray(psi.density(x), dtype=float))

    budget = float(np.max(np.abs(p))) / hbar + max_k

    cache: dict[bytes, np.ndarray] = {}

    def at(points: np.ndarray) -> np.ndarray:
        key = points.tobytes()
        if key not in cache:
            cache[key] = transform_callable(q_func, segs, points, hbar,
                                            max_phase=budget)
        return cache[key]

    return at


def compute_pwv(psi: Wavefunction, m_set: MeasurementSet,
                p_grid: GridSpec | None = None, hbar: float = 1.0,
                fit_tail: bool = True,
                residue_tol: float = 1e-7) -> MixedDistribution:
    """Transfer distribution from the spectral product formula.

    Atoms are generated only at w = 0 (asymptotic constants) and w = hbar*k
    (declared plane waves).  Principal-value poles must have vanishing
    residue against Q~ (true for all real/rotation/step/kick families);
    otherwise the case is reported as unsupported rather than silently
    mis-assembled.
    """
    if p_grid is None:
        # smooth transition features put exponentially damped structure out
        # to momenta ~ hbar/scale; widen the span so the grid holds the mass
        scales = [sc for b in m_set.branches for _, sc in b.features if sc > 0]
        span = 40.0 * hbar / psi.spec.s
        if scales:
            span = max(span, 7.0 * hbar / min(scales))
        n = int(round(2 * span / (0.02 * hbar / psi.spec.s)))
        if n % 2 == 0:
            n += 1
        p_grid = GridSpec.symmetric(span, n)
    grid = p_grid
    p = grid.points
    density = np.zeros(p.size)
    atoms: list[DiracAtom] = []
    for branch in m_set.branches:
        if not branch.transformable:
            raise PreconditionError(
                f"branch {branch.label!r} has no Fourier decomposition")
        q_at = _branch_q_transform(branch, psi, p, hbar)
        q_on_grid = q_at(p)
        # remainder term (the signum split leaves a step at x = 0)
        if branch.has_remainder():
            segs = split_segments(_remainder_windows(branch, psi),
                                  branch.cuts() + (0.0,))
            r_tilde = transform_callable(branch.remainder, segs, p, hbar,
                                         max_phase=float(np.max(np.abs(p))) / hbar)
            density += np.real(r_tilde * np.conj(q_on_grid))
        # plane-wave atoms
        for pw in branch.plane_waves:
            loc = hbar * pw.wavenumber
            q_loc = q_at(np.array([loc]))[0]
            weight = math.sqrt(TWO_PI * hbar) * float(
                np.real(pw.amplitude * np.conj(q_loc)))
            atoms.append(DiracAtom(loc, weight))
        # signum principal parts
        for sg in branch.sgn_components:
            loc = hbar * sg.wavenumber
            coeff = np.real(-1j * sg.amplitude * math.sqrt(2.0 * hbar / math.pi)
                            * np.conj(q_on_grid))
            res = float(np.real(-1j * sg.amplitude
                                * math.sqrt(2.0 * hbar / math.pi)
                                * np.conj(q_at(np.array([loc]))[0])))
            if abs(res) > residue_tol:
                raise UnsupportedCaseError(
                    "principal-value pole with non-vanishing residue "
                    f"({res:.3e}) at w = {loc}; distribution not representable")
            delta = p - loc
            near = np.abs(delta) < 0.5 * grid.spacing
            safe = ~near
            term = np.zeros(p.size)
            term[safe] = coeff[safe] / delta[safe]
            if np.any(near):
                # removable point: derivative of the numerator (residue ~ 0),
                # five-point stencil for O(h^4) accuracy
                h = grid.spacing
                stencil = q_at(loc + h * np.array([-2.0, -1.0, 1.0, 2.0]))
                c = np.real(-1j * sg.amplitude
                            * math.sqrt(2.0 * hbar / math.pi)
                            * np.conj(stencil))
                term[near] = (8.0 * (c[2] - c[1]) - (c[3] - c[0])) / (12.0 * h)
            density += term
    merged = merge_atoms(atoms)
    tails: tuple[tuple[TailModel, ...], tuple[TailModel, ...]] = ((), ())
    if fit_tail:
        exact = _analytic_step_tails(m_set, psi, hbar)
        tails = exact if exact is not None else fit_tails(grid, density)
    return MixedDistribution(grid, density, merged, tails)


def _q_jumps(branch, psi: Wavefunction) -> list[tuple[float, complex]]:
    """One-sided jumps of Q = O(x) |psi(x)|^2 at the known breakpoints."""
    pts = sorted(set(psi.breakpoints) | set(branch.breakpoints))
    jumps = []
    for x0 in pts:
        lo = np.array([x0 - 1e-9])
        hi = np.array([x0 + 1e-9])
        left = complex(np.asarray(branch.value(lo), dtype=complex)[0]
                       * float(np.asarray(psi.density(lo))[0]))
        right = complex(np.asarray(branch.value(hi), dtype=complex)[0]
                        * float(np.asarray(psi.density(hi))[0]))
        if abs(right - left) > 1e-14:
            jumps.append((x0, right - left))
    return jumps


def _analytic_step_tails(m_set: MeasurementSet, psi: Wavefunction,
                         hbar: float) -> tuple[tuple[TailModel, ...],
                                               tuple[TailModel, ...]] | None:
    """Exact 1/w^2 tails of the transfer density for step branches on
    piecewise-constant states.

    With zero remainder and piecewise-constant Q, the branch spectrum's odd
    step against the exact Q~ jump series gives

        density(w) = sum (hbar/pi) Re{ b conj(D_j) e^{i x_j w / hbar} } / w^2

    per signum amplitude b and Q-jump D_j at x_j; anything else disqualifies.
    """
    if not is_rectangular(psi.spec):
        return None
    left: list[TailModel] = []
    right: list[TailModel] = []
    for b in m_set.branches:
        if b.kind not in ("heaviside", "partial_heaviside", "identity"):
            return None
        if b.has_remainder():
            return None
        if any(sg.wavenumber != 0.0 for sg in b.sgn_components):
            return None
        jumps = _q_jumps(b, psi)
        for sg in b.sgn_components:
            for xj, dq in jumps:
                z = sg.amplitude * np.conj(dq)
                amp = hbar / math.pi * abs(z)
                if amp == 0.0 or xj == 0.0:
                    continue
                alpha = math.atan2(float(np.imag(z)), float(np.real(z)))
                k = abs(xj) / hbar
                sgn_x = 1.0 if xj > 0 else -1.0
                # cos(k w + sgn_x alpha) on the right, conjugate on the left
                right.append(TailModel(amp, k,
                                       (sgn_x * alpha + 0.5 * math.pi) % TWO_PI,
                                       2.0))
                left.append(TailModel(amp, k,
                                      (-sgn_x * alpha + 0.5 * math.pi) % TWO_PI,
                                      2.0))
    return tuple(left), tuple(right)


def _remainder_windows(branch, psi: Wavefunction) -> list[tuple[float, float]]:
    """Where a branch remainder can be non-negligible: around its features
    and breakpoints; falls back to the state's neighborhood."""
    spans: list[tuple[float, float]] = []
    for c, scale in branch.features:
        spans.append((c - 12.0 * scale, c + 12.0 * scale))
    for bp in branch.breakpoints:
        spans.append((bp - 1.0, bp + 1.0))
    if not spans:
        half = 8.0 * psi.spec.s
        spans.append((-half, half))
    spans.sort()
    merged = [spans[0]]
    for a, b in spans[1:]:
        if a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
        else:
            merged.append((a, b))
    return merged


# ---------------------------------------------------------------------------
# Route 2: characteristic function
# ---------------------------------------------------------------------------

class CharFunction:
    """Sampled characteristic function Phi(q) with its asymptotic mean.

    Invariants checked at construction: Phi(0) = 1 (within tol) and
    max |Phi| <= 1 + tol for a complete measurement set.
    """

    def __init__(self, q_grid: GridSpec, values: np.ndarray,
                 check_tol: float = 1e-6):
        values = np.asarray(values, dtype=complex)
        if values.shape != (q_grid.n_points,):
            raise ValueError("values must match q_grid")
        self.q_grid = q_grid
        self.values = values
        at_zero = self.at(0.0)
        if abs(at_zero - 1.0) > check_tol:
            raise PreconditionError(
                f"Phi(0) = {at_zero:.12g}, expected 1 (incomplete set?)")
        mean, osc = _asymptotic_mean(q_grid, values, outer=3.0)
        self.asymptotic_mean = mean
        self.mean_oscillation = osc

    def at(self, q: float) -> complex:
        qs = self.q_grid.points
        re = np.interp(q, qs, self.values.real)
        im = np.interp(q, qs, self.values.imag)
        return complex(re) + 1j * complex(im)

    @property
    def max_modulus(self) -> float:
        return float(np.max(np.abs(self.values)))


def _asymptotic_mean(q_grid: GridSpec, values: np.ndarray,
                     outer: float = 3.0) -> tuple[float, float]:
    """Cesaro average of Re Phi over the outer 1/outer of both grid ends,
    with the shift between window sizes as a stability metric."""
    n = q_grid.n_points
    means = []
    for frac in (outer, outer + 1.0):
        m = max(4, int(n / frac))
        seg = np.concatenate([values[:m].real, values[-m:].real])
        means.append(float(np.mean(seg)))
    return means[0], abs(means[0] - means[1])


def char_value(psi: Wavefunction, m_set: MeasurementSet, q: float,
               hbar: float = 1.0) -> complex:
    """Phi at a single lag q, by breakpoint-aware Gauss-Legendre quadrature."""
    branch_cuts = sorted({c for b in m_set.branches for c in b.cuts()})
    cuts = list(branch_cuts)
    cuts += [c + q for c in branch_cuts] + [c - q for c in branch_cuts]
    segs = psi.segments(cuts)
    x, w = gauss_nodes(segs, max_phase=0.0, base_order=32)
    rho = np.asarray(psi.density(x), dtype=float)
    total = 0.0 + 0.0j
    for b in m_set.branches:
        ox = np.asarray(b.value(x), dtype=complex)
        total += 0.5 * np.dot(w * rho, ox * np.conj(b.value(x - q))
                              + np.conj(ox) * np.asarray(b.value(x + q),
                                                         dtype=complex))
    return complex(total)


def char_lag_breakpoints(psi: Wavefunction, m_set: MeasurementSet
                         ) -> tuple[float, ...]:
    """Positive lags where Phi(q) can change analytic form: all pairwise
    distances between state structure points and branch cut points."""
    base = set()
    for a, b in psi.support_windows:
        base.update((a, b))
    base.update(psi.breakpoints)
    for c, scale in psi.features:
        base.update((c - 14.0 * scale, c + 14.0 * scale))
    cuts = set()
    for br in m_set.branches:
        cuts.update(br.cuts())
    cuts = cuts or {0.0}
    out = set()
    pts = sorted(base | cuts)
    for i, a in enumerate(pts):
        for b in pts[i:]:
            d = abs(b - a)
            if d > 1e-12:
                out.add(d)
    return tuple(sorted(out))


def char_function(psi: Wavefunction, m_set: MeasurementSet,
                  q_grid: GridSpec | None = None, hbar: float = 1.0
                  ) -> CharFunction:
    """Phi(q) = sum_xi int |psi|^2 (1/2)[O(x)O*(x-q) + O*(x)O(x+q)] dx."""
    grid = q_grid or GridSpec.symmetric(4.0 * psi.spec.s, 2049)
    qs = grid.points
    out = np.array([char_value(psi, m_set, float(q), hbar) for q in qs])
    return CharFunction(grid, out)


def pwv_from_char(phi: CharFunction, p_grid: GridSpec | None = None,
                  hbar: float = 1.0, fit_tail: bool = True,
                  stability_tol: float = 1e-3) -> MixedDistribution:
    """Invert a characteristic function into atom + density + tails.

    The atom at w = 0 carries the asymptotic mean of Phi; the inversion
    integral is a direct sum over the q-grid.  An unstable asymptotic mean
    (window dependence beyond stability_tol) aborts atom extraction.
    """
    if abs(phi.at(0.0) - 1.0) > 1e-6:
        raise PreconditionError("Phi(0) must equal 1")
    if phi.mean_oscillation > stability_tol:
        raise AtomExtractionError(
            f"asymptotic mean unstable (oscillation {phi.mean_oscillation:.3e})")
    w0 = phi.asymptotic_mean
    grid = p_grid or GridSpec.symmetric(
        40.0 * hbar, 4001)
    vals = phi.values - w0
    edge = max(abs(vals[0]), abs(vals[-1]))
    if edge > 1e-3:
        warnings.warn("characteristic function has not decayed to its "
                      f"asymptotic mean at the grid edge (|residual| = {edge:.2e})",
                      stacklevel=2)
    dens_c = inverse_transform_samples(phi.q_grid.points, vals, grid.points, hbar)
    imag_max = float(np.max(np.abs(dens_c.imag)))
    if imag_max > 1e-9:
        raise PreconditionError(
            f"inverted density has imaginary part {imag_max:.3e}")
    density = dens_c.real
    atoms = (DiracAtom(0.0, w0),) if abs(w0) > 1e-14 else ()
    tails = fit_tails(grid, density) if fit_tail else ((), ())
    return MixedDistribution(grid, density, atoms, tails)


# ---------------------------------------------------------------------------
# Closed forms for the catalog (minimal which-way measurement Theta(+-x))
# ---------------------------------------------------------------------------

def _cosn_density_binomial(spec: SlitSpec, hbar: float) -> Callable:
    """density(w) = A^2/pi * sin(w s/2hbar) T_n(w)/w via the sinc sum,
    T_n = FT of cos^(2n) over one slit window."""
    w_slit, n, s = spec.w, spec.n, spec.s
    norm = _cosn_norm(spec)
    coeff = [math.comb(2 * n, j) for j in range(2 * n + 1)]

    def t_n(p):
        y = np.asarray(p, dtype=float) * w_slit / (TWO_PI * hbar)
        out = np.zeros_like(y)
        for j, c in enumerate(coeff):
            out += c * np.sinc(y - (n - j))
        return w_slit * out / 4.0 ** n

    def density(p):
        p = np.asarray(p, dtype=float)
        core = np.where(p == 0.0, 1.0, p)
        base = norm / math.pi * np.sin(0.5 * p * s / hbar) * t_n(p) / core
        limit = norm / math.pi * (0.5 * s / hbar) * t_n(0.0)
        return np.where(p == 0.0, limit, base)

    return density


def _cosn_density_product(spec: SlitSpec, hbar: float) -> Callable:
    """Equivalent Gamma-product form: sin(pi y)/(pi y prod_j (j^2 - y^2))."""
    w_slit, n, s = spec.w, spec.n, spec.s
    norm = _cosn_norm(spec)
    fact = math.factorial(2 * n) / 4.0 ** n

    def density(p):
        p = np.asarray(p, dtype=float)
        y = p * w_slit / (TWO_PI * hbar)
        # nudge removable 0/0 points (y at integers <= n) off the pole
        near_pole = (np.abs(y - np.round(y)) < 1e-12) \
            & (np.abs(np.round(y)) <= n) & (y != 0.0)
        y = np.where(near_pole, y + 1e-9, y)
        p_eff = y * TWO_PI * hbar / w_slit
        prod = np.ones_like(y)
        for j in range(1, n + 1):
            prod *= (j * j - y * y)
        piy = np.where(y == 0.0, 1.0, math.pi * y)
        sinc0 = np.where(y == 0.0, 1.0, np.sin(math.pi * y) / piy)
        t_n = w_slit * fact * sinc0 / prod
        core = np.where(p_eff == 0.0, 1.0, p_eff)
        base = norm / math.pi * np.sin(0.5 * p_eff * s / hbar) * t_n / core
        limit = (norm / math.pi * (0.5 * s / hbar) * w_slit * fact
                 / math.factorial(n) ** 2)
        return np.where(p_eff == 0.0, limit, base)

    return density


def _cosn_norm(spec: SlitSpec) -> float:
    """A^2 for the cos^n pair: 1 / (2 integral cos^(2n))."""
    n, w = spec.n, spec.w
    integral = w * math.factorial(2 * n) / (4.0 ** n * math.factorial(n) ** 2)
    return 1.0 / (2.0 * integral)


def paper_cosn_norm(spec: SlitSpec) -> float:
    """Published normalization constant (4w/sqrt(pi)) G(1/2+n)/G(1+n); kept
    for side-by-side reporting, twice the numerically correct value."""
    return (4.0 * spec.w / math.sqrt(math.pi) * math.gamma(0.5 + spec.n)
            / math.gamma(1.0 + spec.n))


def closed_form_pwv(spec: SlitSpec, p_grid: GridSpec | None = None,
                    hbar: float = 1.0) -> MixedDistribution:
    """Analytic transfer distribution for a catalog state under Theta(+-x).

    narrow:       (1/2)[delta(w) + sin(w s/2hbar)/(pi w)]
    rectangular:  (1/2)[delta(w) + (2 hbar/(pi w_slit w^2))
                                   sin(w s/2hbar) sin(w w_slit/2hbar)]
    cos^n:        (1/2) delta(w) + A^2/pi sin(w s/2hbar) T_n(w)/w
    """
    grid = p_grid or default_transfer_grid(hbar, spec.s)
    p = grid.points
    s = spec.s
    if spec.kind == NARROW:
        core = np.where(p == 0.0, 1.0, p)
        density = np.where(p == 0.0, s / (4.0 * math.pi * hbar),
                           np.sin(0.5 * p * s / hbar) / (TWO_PI * core))
        tail = TailModel(1.0 / TWO_PI, 0.5 * s / hbar, 0.0, 1.0)
        tails = ((tail,), (tail,))
    elif is_rectangular(spec):
        w_slit = spec.w
        core = np.where(p == 0.0, 1.0, p)
        density = np.where(
            p == 0.0, s * w_slit / (8.0 * math.pi * hbar ** 2) * 2.0 * hbar / w_slit,
            hbar / (math.pi * w_slit * core ** 2)
            * np.sin(0.5 * p * s / hbar) * np.sin(0.5 * p * w_slit / hbar))
        # product-to-sum: sin a sin b = (cos(a-b) - cos(a+b))/2
        amp = hbar / (2.0 * math.pi * w_slit)
        k_minus = 0.5 * abs(s - w_slit) / hbar
        k_plus = 0.5 * (s + w_slit) / hbar
        comps = (TailModel(amp, k_minus, 0.5 * math.pi, 2.0),
                 TailModel(amp, k_plus, 1.5 * math.pi, 2.0))
        tails = (comps, comps)
    elif spec.kind == COSINE_POWER:
        density = _cosn_density_binomial(spec, hbar)(p)
        # leading asymptotics: density ~ A sin(ws/2hbar) sin(ww/2hbar) / w^(2n+2)
        n, w_slit = spec.n, spec.w
        lead = (_cosn_norm(spec) / math.pi
                * w_slit * math.factorial(2 * n) / 4.0 ** n
                * (-1.0) ** n * (TWO_PI * hbar / w_slit) ** (2 * n + 1)
                / math.pi)
        amp = abs(lead) / 2.0
        k_minus = 0.5 * abs(s - w_slit) / hbar
        k_plus = 0.5 * (s + w_slit) / hbar
        ph = (0.5 * math.pi, 1.5 * math.pi) if lead > 0 \
            else (1.5 * math.pi, 0.5 * math.pi)
        comps = (TailModel(amp, k_minus, ph[0], 2.0 * n + 2.0),
                 TailModel(amp, k_plus, ph[1], 2.0 * n + 2.0))
        tails = (comps, comps)
    else:
        raise UnsupportedCaseError(f"no closed form for {spec.kind!r}")
    atoms = (DiracAtom(0.0, 0.5),)
    return MixedDistribution(grid, density, atoms, tails)


# ---------------------------------------------------------------------------
# Weak-valued joint probability (binned projectors)
# ---------------------------------------------------------------------------

def _require_analytic_spectrum(branch) -> None:
    if branch.has_remainder():
        raise UnsupportedCaseError(
            f"branch {branch.label!r} needs a purely analytic spectrum "
            "(plane waves + steps) for bin-projected amplitudes")


def pv_bin_integral(f: Callable[[np.ndarray], np.ndarray],
                    lo: float, hi: float, pole: float,
                    order: int = 48) -> complex:
    """PV integral_lo^hi f(p) / (pole - p) dp for analytic f."""
    return complex(pv_bin_integral_many(f, lo, hi, np.array([pole]), order)[0])


def pv_bin_integral_many(f: Callable[[np.ndarray], np.ndarray],
                         lo: float, hi: float, poles: np.ndarray,
                         order: int = 48) -> np.ndarray:
    """PV integral_lo^hi f(p) / (pole - p) dp for an array of poles."""
    t, w = np.polynomial.legendre.leggauss(order)
    p = 0.5 * (hi - lo) * (t + 1.0) + lo
    wp = 0.5 * (hi - lo) * w
    fv = np.asarray(f(p), dtype=complex)
    poles = np.asarray(poles, dtype=float)
    out = np.empty(poles.size, dtype=complex)
    inside = (poles > lo) & (poles < hi)
    if np.any(~inside):
        po = poles[~inside]
        out[~inside] = (wp * fv) @ (1.0 / (po[None, :] - p[:, None]))
    if np.any(inside):
        po = poles[inside]
        f0 = np.asarray(f(po), dtype=complex)
        diff = (fv[:, None] - f0[None, :]) / (po[None, :] - p[:, None])
        reg = wp @ diff
        out[inside] = reg + f0 * np.log(np.abs((po - lo) / (hi - po)))
    return out


def branch_bin_amplitude(branch, psi: Wavefunction,
                         bin_lo: float, bin_hi: float,
                         p_f: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """<p_f| O_xi pi_bin |psi> for a top-hat momentum-bin projector.

    Uses the branch's exact spectrum: plane waves pick out psi~ inside the
    shifted bin; odd steps contribute (-i b / pi) PV integral_bin
    psi~(p') / (p_f - hbar kappa - p') dp'.
    """
    _require_analytic_spectrum(branch)
    if psi.momentum_amplitude is None:
        raise PreconditionError("state lacks a momentum-space amplitude")
    p_f = np.atleast_1d(np.asarray(p_f, dtype=float))
    out = np.zeros(p_f.size, dtype=complex)
    for pw in branch.plane_waves:
        shifted = p_f - hbar * pw.wavenumber
        inside = (shifted >= bin_lo) & (shifted <= bin_hi)
        out[inside] += pw.amplitude * np.asarray(
            psi.momentum_amplitude(shifted[inside]), dtype=complex)
    for sg in branch.sgn_components:
        coeff = -1j * sg.amplitude / math.pi
        poles = p_f - hbar * sg.wavenumber
        out += coeff * pv_bin_integral_many(psi.momentum_amplitude,
                                            bin_lo, bin_hi, poles)
    return out


def branch_full_amplitude(branch, psi: Wavefunction, p_f: np.ndarray,
                          hbar: float = 1.0) -> np.ndarray:
    """<p_f| O_xi |psi> by position-space quadrature (psi is compact)."""
    segs = psi.segments(branch.cuts())
    max_k = max([abs(pw.wavenumber) for pw in branch.plane_waves]
                + [abs(sg.wavenumber) for sg in branch.sgn_components] + [0.0])
    p_f = np.atleast_1d(np.asarray(p_f, dtype=float))

    def product(x):
        return (np.asarray(branch.value(x), dtype=complex)
                * np.asarray(psi.amplitude(x), dtype=complex))

    budget = float(np.max(np.abs(p_f))) / hbar + max_k
    return transform_callable(product, segs, p_f, hbar, max_phase=budget)


def weak_joint_probability(p_i: float, label: str, p_f: float,
                           psi: Wavefunction, m_set: MeasurementSet,
                           dp: float | None = None, hbar: float = 1.0,
                           p_grid: GridSpec | None = None) -> float:
    """Re{<p_f| O_xi pi(p_i) |psi> <psi| O_xi^dag |p_f>} / dp with a top-hat
    momentum-bin projector of width dp around p_i; may be negative.

    The continuum expression is the dp -> 0 limit; halving dp and checking
    stability to 1% is part of the verification suite.
    """
    grid = p_grid or default_transfer_grid(hbar, psi.spec.s)
    if dp is None:
        dp = grid.spacing
    if not grid.contains(p_i) or not grid.contains(p_f):
        raise RangeError("momenta outside the declared grid")
    branch = m_set.branch(label)
    pf = np.array([p_f])
    a_val = branch_bin_amplitude(branch, psi, p_i - 0.5 * dp, p_i + 0.5 * dp,
                                 pf, hbar)[0]
    full = branch_full_amplitude(branch, psi, pf, hbar)[0]
    return float(np.real(a_val * np.conj(full))) / dp


# ---------------------------------------------------------------------------
# Narrow-slit regularization limit
# ---------------------------------------------------------------------------

def narrow_limit(make: Callable[[float], MixedDistribution],
                 sigmas: Sequence[float], fit_tail: bool = True
                 ) -> MixedDistribution:
    """Richardson extrapolation (linear in sigma^2) of a narrow-slit pipeline.

    make(sigma) must return distributions on identical grids with identical
    atom locations.
    """
    if len(sigmas) != 2:
        raise ValueError("two-point extrapolation expects two sigmas")
    d1, d2 = make(sigmas[0]), make(sigmas[1])
    if d1.grid != d2.grid:
        raise ValueError("extrapolation requires matching grids")
    a1, a2 = sigmas[0] ** 2, sigmas[1] ** 2
    density = (a1 * d2.density - a2 * d1.density) / (a1 - a2)
    locs1 = {a.location: a.weight for a in d1.atoms}
    locs2 = {a.location: a.weight for a in d2.atoms}
    atoms = []
    for loc in sorted(set(locs1) | set(locs2)):
        w1 = locs1.get(loc, 0.0)
        w2 = locs2.get(loc, 0.0)
        atoms.append(DiracAtom(loc, richardson_pair((w1, w2), (a1, a2))))
    tails = fit_tails(d1.grid, density) if fit_tail else ((), ())
    return MixedDistribution(d1.grid, density, tuple(atoms), tails)


def narrow_pipeline_pwv(spec: SlitSpec, m_set: MeasurementSet | None = None,
                        p_grid: GridSpec | None = None, hbar: float = 1.0,
                        q_grid: GridSpec | None = None,
                        route: str = "char") -> MixedDistribution:
    """sigma -> 0 extrapolated transfer distribution for narrow slits.

    route = "char" inverts the characteristic function; route = "product"
    uses the spectral product formula.  The regularization ladder is
    (sigma, sigma/2) around the spec's sigma_slit.
    """
    if spec.kind != NARROW:
        raise UnsupportedCaseError("extrapolated pipeline is for narrow slits")
    m_set = m_set or heaviside_set()
    base = spec.sigma_slit

    def make(sigma: float) -> MixedDistribution:
        psi = build_state(spec.with_sigma(sigma), hbar)
        if route == "char":
            phi = char_function(psi, m_set, q_grid, hbar)
            return pwv_from_char(phi, p_grid, hbar, fit_tail=False)
        return compute_pwv(psi, m_set, p_grid, hbar, fit_tail=False)

    return narrow_limit(make, (base, 0.5 * base))
