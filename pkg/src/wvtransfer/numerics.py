"""
Grid, quadrature, oscillatory-integral and Fourier-transform infrastructure.

Everything downstream (momentum distributions, transfer distributions, width
measures) is built on four primitives implemented here:

1. Uniform grids and sampled complex functions (`GridSpec`,
   `SampledComplexFunction`) with composite trapezoid quadrature (`quad`).

2. Improper oscillatory integrals of power-law-decaying sinusoids,

       integral_start^inf  A sin(k p + phi) / p^m * p^n dp,

   evaluated as a half-period (lobe) series accelerated with Wynn's epsilon
   algorithm (`osc_tail_integral`).  A non-decaying lobe series is reported
   with a divergence flag rather than a number.

3. The sine integral Si(x), power series for small argument and the
   continued fraction of the exponential integral E1(ix) (the resummed
   asymptotic expansion) for large argument (`sine_integral`).

4. Continuous Fourier transforms in physicist normalization,

       f~(p) = (2 pi hbar)^(-1/2) integral f(x) exp(-i x p / hbar) dx,

   by direct summation.  Functions that do not decay (Heaviside steps, plane
   waves) are handled by splitting off their asymptotic constants and plane
   wave factors; those parts transform exactly into Dirac atoms and
   principal-value poles, and only the integrable remainder is quadratured.

Direct summation is O(N*M); grids are chosen small enough that this is never
a bottleneck at desk scale.  No FFT path is provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import PreconditionError, RangeError

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Grids and sampled functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of n_points on [x_min, x_max], spacing (x_max-x_min)/(n-1)."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("grid needs at least 2 points")
        if not (self.x_max > self.x_min):
            raise ValueError("grid span must have positive length")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def half_span(self) -> float:
        return 0.5 * (self.x_max - self.x_min)

    def contains(self, a: float, b: float | None = None) -> bool:
        b = a if b is None else b
        lo, hi = min(a, b), max(a, b)
        eps = 1e-12 * max(1.0, abs(self.x_min), abs(self.x_max))
        return lo >= self.x_min - eps and hi <= self.x_max + eps

    @staticmethod
    def symmetric(half_span: float, n_points: int) -> "GridSpec":
        return GridSpec(-half_span, half_span, n_points)


@dataclass(frozen=True)
class SampledComplexFunction:
    """Complex samples aligned with a GridSpec; all entries must be finite."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (self.grid.n_points,):
            raise ValueError("values length must equal grid n_points")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", vals)

    @staticmethod
    def from_callable(grid: GridSpec, func: Callable[[np.ndarray], np.ndarray]
                      ) -> "SampledComplexFunction":
        return SampledComplexFunction(grid, np.asarray(func(grid.points), dtype=complex))


def quad(f: SampledComplexFunction, interval: tuple[float, float]) -> complex:
    """Composite trapezoid integral of a sampled function over a sub-interval.

    The interval must lie within the grid span.  Endpoint values are linearly
    interpolated, so the rule stays O(spacing^2) for smooth integrands.
    """
    a, b = interval
    if a > b:
        a, b = b, a
    if not f.grid.contains(a, b):
        raise RangeError(f"interval [{a}, {b}] outside grid span "
                         f"[{f.grid.x_min}, {f.grid.x_max}]")
    x = f.grid.points
    v = f.values
    fa = complex(np.interp(a, x, v.real)) + 1j * complex(np.interp(a, x, v.imag))
    fb = complex(np.interp(b, x, v.real)) + 1j * complex(np.interp(b, x, v.imag))
    inside = (x > a) & (x < b)
    xs = np.concatenate(([a], x[inside], [b]))
    vs = np.concatenate(([fa], v[inside], [fb]))
    return complex(np.trapezoid(vs, xs))


def simpson_mass(values: np.ndarray, spacing: float) -> float:
    """Composite Simpson integral of real samples on a uniform grid."""
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 2:
        return 0.0
    if n == 2:
        return 0.5 * spacing * (y[0] + y[1])
    total = 0.0
    m = n if n % 2 == 1 else n - 1
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    total += spacing / 3.0 * float(np.dot(w, y[:m]))
    if n % 2 == 0:
        total += 0.5 * spacing * (y[-2] + y[-1])
    return total


def cumulative_density(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cumulative integral of samples with a local-cubic (O(h^4)) rule.

    Returns C with C[0] = 0 and C[i] = integral_{x0}^{xi} y dx.  Each cell is
    integrated with the cubic through its four nearest samples.
    """
    n = x.size
    h = x[1] - x[0]
    cells = np.empty(n - 1)
    # interior cells: cubic through (i-1, i, i+1, i+2)
    if n >= 4:
        y0, y1, y2, y3 = y[:-3], y[1:-2], y[2:-1], y[3:]
        cells[1:-1] = h * (-y0 + 13.0 * y1 + 13.0 * y2 - y3) / 24.0
        cells[0] = h * (9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3]) / 24.0
        cells[-1] = h * (9.0 * y[-1] + 19.0 * y[-2] - 5.0 * y[-3] + y[-4]) / 24.0
    else:
        cells[:] = 0.5 * h * (y[:-1] + y[1:])
    out = np.empty(n)
    out[0] = 0.0
    np.cumsum(cells, out=out[1:])
    return out


# ---------------------------------------------------------------------------
# Gauss-Legendre piecewise quadrature for analytic integrands
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


def gauss_nodes(segments: Sequence[tuple[float, float]],
                max_phase: float = 0.0,
                base_order: int = 32,
                max_order: int = 96) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights over a list of segments.

    max_phase is the largest |d(phase)/dx| the integrand will see (e.g.
    p_max/hbar for a Fourier kernel); segments are subdivided so each piece
    carries a bounded phase span, and the order grows with the local span.
    """
    xs: list[np.ndarray] = []
    ws: list[np.ndarray] = []
    for a, b in segments:
        if not b > a:
            continue
        span = b - a
        pieces = max(1, int(math.ceil(max_phase * span / 50.0)))
        sub = span / pieces
        order = int(min(max_order, base_order + 0.8 * max_phase * sub))
        t, w = _leggauss(order)
        for j in range(pieces):
            lo = a + j * sub
            xs.append(0.5 * sub * (t + 1.0) + lo)
            ws.append(0.5 * sub * w)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)


def split_segments(windows: Sequence[tuple[float, float]],
                   breakpoints: Sequence[float] = ()) -> list[tuple[float, float]]:
    """Cut each window at the breakpoints that fall strictly inside it."""
    out: list[tuple[float, float]] = []
    bps = sorted(set(float(b) for b in breakpoints))
    for a, b in windows:
        cuts = [a] + [c for c in bps if a < c < b] + [b]
        out.extend((cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1))
    return out


def gauss_integrate(func: Callable[[np.ndarray], np.ndarray],
                    segments: Sequence[tuple[float, float]],
                    max_phase: float = 0.0) -> complex:
    x, w = gauss_nodes(segments, max_phase)
    if x.size == 0:
        return 0.0 + 0.0j
    return complex(np.dot(w, np.asarray(func(x), dtype=complex)))


# ---------------------------------------------------------------------------
# Oscillatory tail integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailModel:
    """Asymptotic lobe model  A sin(k p + phi) / p^decay_power.

    decay_power >= 0 is accepted at construction; whether the model (times an
    extra p^n weight) is integrable is decided per use by the lobe series,
    not assumed here.
    """

    amplitude: float
    wavenumber: float
    phase: float
    decay_power: float

    def __post_init__(self):
        if self.decay_power < 0:
            raise ValueError("decay_power must be >= 0")
        if self.wavenumber < 0:
            raise ValueError("wavenumber must be >= 0 (flip phase instead)")

    def __call__(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (self.amplitude * np.sin(self.wavenumber * p + self.phase)
                / p ** self.decay_power)


@dataclass(frozen=True)
class TailIntegral:
    """Value of an improper tail integral plus a convergence verdict."""

    value: float
    converged: bool


def wynn_epsilon(partial_sums: Sequence[float]) -> tuple[float, float]:
    """Accelerate a slowly convergent sequence; returns (estimate, spread).

    Standard Wynn epsilon table; the estimate is the deepest even column and
    the spread is the change over the last two stages (an error proxy).
    """
    s = [float(v) for v in partial_sums]
    n = len(s)
    if n == 0:
        return 0.0, math.inf
    if n == 1:
        return s[0], math.inf
    eps_prev = [0.0] * (n + 1)
    eps_curr = s[:]
    best = [s[-1]]
    for _ in range(n - 1):
        eps_next = []
        for j in range(len(eps_curr) - 1):
            diff = eps_curr[j + 1] - eps_curr[j]
            if abs(diff) < 1e-300:
                eps_next = []
                break
            eps_next.append(eps_prev[j + 1] + 1.0 / diff)
        if not eps_next:
            break
        eps_prev = eps_curr
        eps_curr = eps_next
        if (n - len(eps_curr)) % 2 == 0:  # even column: valid estimates
            best.append(eps_curr[-1])
    if len(best) >= 3:
        spread = max(abs(best[-1] - best[-2]), abs(best[-2] - best[-3]))
    elif len(best) == 2:
        spread = abs(best[-1] - best[-2])
    else:
        spread = math.inf
    return best[-1], spread


def _lobe_series(integrand: Callable[[np.ndarray], np.ndarray],
                 start: float,
                 wavenumber: float,
                 phase: float,
                 max_lobes: int,
                 tol: float) -> TailIntegral:
    """Sum integral_start^inf integrand dp lobe by lobe with acceleration.

    Lobe boundaries are consecutive zeros of sin(wavenumber*p + phase).  The
    series of lobes must alternate in sign and decay in magnitude; otherwise
    the integral is flagged divergent.
    """
    k = wavenumber
    m0 = math.ceil((k * start + phase) / math.pi)
    z = (m0 * math.pi - phase) / k
    if z <= start:
        z += math.pi / k
    order = 32
    t, w = _leggauss(order)

    def piece(a: float, b: float) -> float:
        x = 0.5 * (b - a) * (t + 1.0) + a
        return 0.5 * (b - a) * float(np.dot(w, integrand(x)))

    head = piece(start, z) if z > start else 0.0
    half = math.pi / k
    lobes: list[float] = []
    partial: list[float] = []
    total = 0.0
    a = z
    estimate, spread = 0.0, math.inf
    for j in range(max_lobes):
        b = a + half
        lobe = piece(a, b)
        lobes.append(lobe)
        total += lobe
        partial.append(total)
        a = b
        if len(lobes) >= 8:
            # must alternate and (eventually strictly) decay
            tail_window = lobes[-6:]
            signs_ok = all(tail_window[i] * tail_window[i + 1] < 0
                           for i in range(len(tail_window) - 1))
            mags = [abs(v) for v in tail_window]
            decay_ok = all(mags[i + 1] <= mags[i] * (1.0 - 1e-12)
                           for i in range(len(mags) - 1))
            if not signs_ok or not decay_ok:
                if max(mags) < 1e-14 * (1.0 + abs(total)):
                    return TailIntegral(head + total, True)
                return TailIntegral(math.nan, False)
        if len(partial) >= 12 and len(partial) % 4 == 0:
            estimate, spread = wynn_epsilon(partial[-48:])
            if spread < tol * (1.0 + abs(estimate)):
                return TailIntegral(head + estimate, True)
    if math.isfinite(spread) and spread < 1e3 * tol * (1.0 + abs(estimate)):
        return TailIntegral(head + estimate, True)
    return TailIntegral(math.nan, False)


def osc_tail_integral(env: TailModel,
                      weight_power: int,
                      start: float,
                      damping_rate: float = 0.0,
                      max_lobes: int = 400,
                      tol: float = 1e-11) -> TailIntegral:
    """integral_start^inf  env(p) * p^weight_power * exp(-damping_rate*p) dp.

    Evaluated by half-period partial sums plus Wynn acceleration.  Returns a
    divergence flag (value NaN) when the lobe series fails the
    alternating-decay test.  damping_rate > 0 applies an exponential
    apodization factor using the same machinery.
    """
    if weight_power < 0:
        raise ValueError("weight_power must be >= 0")
    A, k, phi, m = env.amplitude, env.wavenumber, env.phase, env.decay_power
    if A == 0.0:
        return TailIntegral(0.0, True)
    if k == 0.0:
        # Non-oscillatory power law: A sin(phi) / p^(m - n), analytic.
        net = m - weight_power
        if damping_rate > 0.0:
            # integral p^-net e^(-c p): finite for any net >= 0 given start>0.
            t, w = _leggauss(48)
            val, a = 0.0, start
            # integrate in exponential-scale blocks until negligible
            block = max(1.0 / damping_rate, start)
            for _ in range(200):
                b = a + block
                x = 0.5 * (b - a) * (t + 1.0) + a
                val += 0.5 * (b - a) * float(
                    np.dot(w, x ** (-net) * np.exp(-damping_rate * x)))
                a = b
                if math.exp(-damping_rate * a) * a ** (-net + 1) < 1e-16:
                    break
            return TailIntegral(A * math.sin(phi) * val, True)
        if net <= 1.0:
            return TailIntegral(math.nan, False)
        if start <= 0.0:
            raise PreconditionError("power-law tail requires start > 0")
        return TailIntegral(A * math.sin(phi) * start ** (1.0 - net) / (net - 1.0), True)
    if start < 0.0:
        raise PreconditionError("tail integrals start at a nonnegative momentum")

    def integrand(p: np.ndarray) -> np.ndarray:
        out = A * np.sin(k * p + phi) * p ** (float(weight_power) - m)
        if damping_rate > 0.0:
            out = out * np.exp(-damping_rate * p)
        return out

    eff_start = start
    if start == 0.0 and weight_power - m < 0:
        # integrand may be singular only as a removable limit; lobes handle it
        eff_start = 0.0
    return _lobe_series(integrand, eff_start, k, phi, max_lobes, tol)


# ---------------------------------------------------------------------------
# Sine integral
# ---------------------------------------------------------------------------

def _si_power_series(x: float) -> float:
    term = x
    total = x
    k = 0
    while True:
        ratio = -x * x * (2 * k + 1) / ((2 * k + 2) * (2 * k + 3) ** 2)
        term *= ratio
        total += term
        k += 1
        if abs(term) < 1e-18 * (1.0 + abs(total)) or k > 200:
            return total


def _e1_continued_fraction(z: complex, max_iter: int = 200) -> complex:
    """E1(z) by the modified Lentz continued fraction, Re z >= 0, z != 0."""
    tiny = 1e-290
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    f = d
    for i in range(1, max_iter):
        a = -float(i * i)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        if c == 0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return f * np.exp(-z)


def sine_integral(x: float) -> float:
    """Si(x) = integral_0^x sin(t)/t dt, abs err <= 1e-10 over the real line."""
    if x == 0.0:
        return 0.0
    if x < 0.0:
        return -sine_integral(-x)
    if x <= 4.0:
        return _si_power_series(x)
    e1 = _e1_continued_fraction(1j * x)
    # E1(ix) = -Ci(x) + i (Si(x) - pi/2)  for x > 0
    return 0.5 * math.pi + float(np.imag(e1))


# ---------------------------------------------------------------------------
# Fourier transforms with constant / plane-wave / signum splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlaneWaveComponent:
    """Analytic component  amplitude * exp(i wavenumber x)  over all space."""

    amplitude: complex
    wavenumber: float


@dataclass(frozen=True)
class SignumComponent:
    """Analytic component  amplitude * sgn(x) * exp(i wavenumber x)."""

    amplitude: complex
    wavenumber: float


@dataclass(frozen=True)
class SpectralAtom:
    """Dirac delta in momentum: weight * delta(p - location)."""

    location: float
    weight: complex


@dataclass(frozen=True)
class PrincipalPart:
    """Principal-value pole in momentum: coefficient * PV 1/(p - location)."""

    location: float
    coefficient: complex


@dataclass(frozen=True)
class TransformResult:
    """Continuous samples plus the exactly-transformed distributional parts."""

    density: SampledComplexFunction
    atoms: tuple[SpectralAtom, ...]
    principal_parts: tuple[PrincipalPart, ...]

    def total_density(self) -> np.ndarray:
        """Continuous part plus PV poles evaluated off their singular nodes."""
        p = self.density.grid.points
        out = self.density.values.copy()
        for pole in self.principal_parts:
            d = p - pole.location
            safe = np.abs(d) > 0.5 * self.density.grid.spacing
            out[safe] += pole.coefficient / d[safe]
        return out


def plane_wave_atom(component: PlaneWaveComponent, hbar: float) -> SpectralAtom:
    """FT of c exp(ikx) is sqrt(2 pi hbar) c delta(p - hbar k)."""
    return SpectralAtom(hbar * component.wavenumber,
                        math.sqrt(TWO_PI * hbar) * component.amplitude)


def signum_principal_part(component: SignumComponent, hbar: float) -> PrincipalPart:
    """FT of c sgn(x) exp(ikx) is -i c sqrt(2 hbar / pi) PV 1/(p - hbar k)."""
    return PrincipalPart(hbar * component.wavenumber,
                         -1j * component.amplitude * math.sqrt(2.0 * hbar / math.pi))


def direct_transform(x: np.ndarray, weights: np.ndarray, values: np.ndarray,
                     p: np.ndarray, hbar: float = 1.0, sign: float = -1.0,
                     chunk: int = 512) -> np.ndarray:
    """(2 pi hbar)^(-1/2) sum_j w_j f_j exp(sign i x_j p / hbar), chunked in p."""
    out = np.empty(p.size, dtype=complex)
    wf = weights * values
    for lo in range(0, p.size, chunk):
        hi = min(lo + chunk, p.size)
        kernel = np.exp((sign * 1j / hbar) * np.outer(x, p[lo:hi]))
        out[lo:hi] = wf @ kernel
    return out / math.sqrt(TWO_PI * hbar)


def transform_callable(func: Callable[[np.ndarray], np.ndarray],
                       segments: Sequence[tuple[float, float]],
                       p: np.ndarray,
                       hbar: float = 1.0,
                       sign: float = -1.0,
                       max_phase: float | None = None) -> np.ndarray:
    """Fourier transform of an analytic integrand via piecewise Gauss-Legendre.

    max_phase overrides the phase budget used to size the quadrature (needed
    when the integrand itself carries oscillations, e.g. plane-wave factors).
    """
    p = np.asarray(p, dtype=float)
    if max_phase is None:
        max_phase = float(np.max(np.abs(p))) / hbar if p.size else 0.0
    x, w = gauss_nodes(segments, max_phase)
    if x.size == 0:
        return np.zeros(p.size, dtype=complex)
    return direct_transform(x, w, np.asarray(func(x), dtype=complex), p, hbar, sign)


def fourier_transform(f: SampledComplexFunction,
                      p_grid: GridSpec,
                      hbar: float = 1.0,
                      const_left: complex = 0.0,
                      const_right: complex = 0.0,
                      plane_waves: Sequence[PlaneWaveComponent] = (),
                      endpoint_tol: float = 1e-6) -> TransformResult:
    """Continuous FT of grid samples with declared non-decaying parts.

    The declared constants at x -> -inf / +inf and any plane-wave factors are
    split off and transformed exactly (atoms at p = hbar k, a PV pole from
    the odd step); the remainder is required to decay to zero at both grid
    ends and is transformed by direct summation with trapezoid weights.
    """
    x = f.grid.points
    values = f.values.copy()
    c_l = complex(const_left)
    c_r = complex(const_right)
    for pw in plane_waves:
        values = values - pw.amplitude * np.exp(1j * pw.wavenumber * x)
    c_avg = 0.5 * (c_r + c_l)
    c_diff = 0.5 * (c_r - c_l)
    if c_avg != 0 or c_diff != 0:
        values = values - c_avg - c_diff * np.sign(x)
    scale = max(1.0, float(np.max(np.abs(f.values))))
    if abs(values[0]) > endpoint_tol * scale or abs(values[-1]) > endpoint_tol * scale:
        raise PreconditionError(
            "undeclared non-decaying component: remainder does not vanish at "
            f"grid ends (|r| = {abs(values[0]):.3g}, {abs(values[-1]):.3g})")

    w = np.full(x.size, f.grid.spacing)
    w[0] = w[-1] = 0.5 * f.grid.spacing
    cont = direct_transform(x, w, values, p_grid.points, hbar)

    atoms = [plane_wave_atom(pw, hbar) for pw in plane_waves]
    if c_avg != 0:
        atoms.append(plane_wave_atom(PlaneWaveComponent(c_avg, 0.0), hbar))
    poles = []
    if c_diff != 0:
        poles.append(signum_principal_part(SignumComponent(c_diff, 0.0), hbar))
    # merge atoms that share a location
    merged: dict[float, complex] = {}
    for a in atoms:
        merged[a.location] = merged.get(a.location, 0.0) + a.weight
    atom_tuple = tuple(SpectralAtom(loc, wt) for loc, wt in sorted(merged.items()))
    return TransformResult(SampledComplexFunction(p_grid, cont), atom_tuple,
                           tuple(poles))


def inverse_transform_samples(q: np.ndarray, values: np.ndarray,
                              p: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """(2 pi hbar)^(-1) integral values(q) exp(-i p q / hbar) dq, trapezoid."""
    dq = q[1] - q[0]
    w = np.full(q.size, dq)
    w[0] = w[-1] = 0.5 * dq
    out = direct_transform(q, w, values, p, hbar, sign=-1.0)
    return out / math.sqrt(TWO_PI * hbar)


# ---------------------------------------------------------------------------
# Extrapolation helpers
# ---------------------------------------------------------------------------

def polynomial_extrapolate(u: np.ndarray, v: np.ndarray, order: int
                           ) -> tuple[float, float]:
    """Least-squares polynomial fit v(u); returns (value at u=0, fit residual)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    order = min(order, u.size - 1)
    coeffs = np.polynomial.polynomial.polyfit(u, v, order)
    fit = np.polynomial.polynomial.polyval(u, coeffs)
    residual = float(np.max(np.abs(fit - v)))
    return float(coeffs[0]), residual


def neville_extrapolate(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Full-degree polynomial extrapolation to u = 0 (Neville tableau).

    Returns (value, change in the last tableau stage) so callers can judge
    whether the extrapolation is trustworthy.
    """
    u = np.asarray(u, dtype=float)
    t = np.asarray(v, dtype=float).copy()
    n = t.size
    last_change = math.inf
    for level in range(1, n):
        prev_tip = t[0]
        for j in range(n - level):
            denom = u[j] - u[j + level]
            t[j] = (0.0 - u[j + level]) / denom * t[j] + (u[j] - 0.0) / denom * t[j + 1]
        last_change = abs(t[0] - prev_tip)
    return float(t[0]), last_change


def richardson_pair(values: Sequence[float], params: Sequence[float]) -> float:
    """Two-point Richardson extrapolation, linear in the given parameter.

    values = f(params[0]), f(params[1]); the parameter is typically sigma^2.
    """
    (f1, f2), (a1, a2) = values, params
    return (a1 * f2 - a2 * f1) / (a1 - a2)
