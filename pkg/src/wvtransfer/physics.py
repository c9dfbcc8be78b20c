"""
Twin-slit states, which-way measurement sets, and momentum distributions.

States
------
All catalog states are symmetric superpositions of a single-slit profile u
centered at +-s/2,

    psi(x) = A [ u(x + s/2) + u(x - s/2) ],

with u one of: a Gaussian of width sigma (regularized "infinitely narrow"
slit, |u|^2 -> delta as sigma -> 0), a rectangle of width w, or
cos^n(pi x / w) on |x| < w/2.  Normalization is always computed numerically;
the momentum-space amplitude is available in closed form for every family,

    psi~(p) = 2 A cos(p s / 2 hbar) u~(p).

Measurements
------------
A which-way measurement is a finite set of functions O_xi(x) with
sum_xi |O_xi(x)|^2 = 1 everywhere.  For Fourier purposes every branch is
stored as declared plane waves + odd-step (signum) components + a remainder
that decays at both ends; the non-decaying parts transform exactly.  Branch
values exactly at a discontinuity use the RMS of the one-sided limits so
completeness holds pointwise there too.

The far-field fringe visibility of a twin-slit pattern under a measurement
set is V = |sum_xi O_xi(-s/2) O_xi*(s/2)|, and a visibility-V measurement
must disturb the transfer distribution beyond (hbar/s) arccos[(V+1)/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import DiracAtom, MixedDistribution, atoms_only, merge_atoms
from .errors import (CompletenessError, ConstructionError, DomainError,
                     PreconditionError)
from .numerics import (GridSpec, PlaneWaveComponent, SignumComponent,
                       TailModel, gauss_integrate, split_segments,
                       transform_callable)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Slit specifications and wavefunctions
# ---------------------------------------------------------------------------

NARROW = "narrow"
RECTANGULAR = "rectangular"
COSINE_POWER = "cosine_power"


@dataclass(frozen=True)
class SlitSpec:
    """Geometry of the twin-slit initial state.

    s: slit separation, w: slit width (0 for narrow slits), n: cosine power,
    sigma_slit: Gaussian regularization width for narrow slits.
    """

    kind: str
    s: float = 1.0
    w: float = 0.0
    n: int = 0
    sigma_slit: float | None = None

    def __post_init__(self):
        if self.kind not in (NARROW, RECTANGULAR, COSINE_POWER):
            raise ConstructionError(f"unknown slit kind {self.kind!r}")
        if self.s <= 0:
            raise ConstructionError("slit separation must be positive")
        if self.kind == NARROW:
            sigma = self.sigma_slit if self.sigma_slit is not None else self.s / 200.0
            if sigma <= 0:
                raise ConstructionError("sigma_slit must be positive")
            if sigma >= self.s / 8.0:
                raise ConstructionError("narrow-slit regularization too wide")
            object.__setattr__(self, "sigma_slit", sigma)
        else:
            if self.w <= 0:
                raise ConstructionError("slit width must be positive")
            if self.w >= self.s:
                raise ConstructionError("slits overlap: need w < s")
            if self.kind == COSINE_POWER and self.n < 0:
                raise ConstructionError("cosine power must be >= 0")

    def with_sigma(self, sigma: float) -> "SlitSpec":
        return SlitSpec(NARROW, self.s, self.w, self.n, sigma)


@dataclass(frozen=True)
class Wavefunction:
    """Real symmetric twin-slit state with analytic samplers.

    amplitude / density / derivative are vectorized callables; support_windows
    lists the intervals where the state is nonzero, breakpoints the points of
    non-smoothness inside them, features (center, scale) hints for quadrature
    refinement.  momentum_amplitude is the closed-form Fourier transform.
    """

    spec: SlitSpec
    amplitude: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], np.ndarray]
    support_windows: tuple[tuple[float, float], ...]
    breakpoints: tuple[float, ...]
    features: tuple[tuple[float, float], ...]
    norm_check: float
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    second_derivative: Callable[[np.ndarray], np.ndarray] | None = None
    momentum_amplitude: Callable[[np.ndarray], np.ndarray] | None = None

    def segments(self, extra_breaks: Sequence[float] = ()) -> list[tuple[float, float]]:
        cuts = list(self.breakpoints) + list(extra_breaks)
        for c, scale in self.features:
            cuts += [c - 4.0 * scale, c, c + 4.0 * scale]
        return split_segments(self.support_windows, cuts)


def _norm_over_windows(density, windows, features) -> float:
    segs = split_segments(windows, [c for c, _ in features])
    refined = []
    for a, b in segs:
        for c, scale in features:
            for cut in (c - 6 * scale, c + 6 * scale):
                if a < cut < b:
                    refined.append(cut)
    segs = split_segments(windows, refined + [c for c, _ in features])
    return float(np.real(gauss_integrate(density, segs)))


def cos_window_transform(n: int, w: float, hbar: float) -> Callable:
    """FT of cos^n(pi x/w) on |x| < w/2: integral ... e^(-i x p/hbar) dx.

    Binomial expansion into plane waves gives an exact, numerically stable
    sinc sum: w 2^-n sum_j C(n,j) sinc(y - (n-2j)/2), y = w p / (2 pi hbar).
    """
    coeff = [math.comb(n, j) for j in range(n + 1)]

    def tr(p: np.ndarray) -> np.ndarray:
        y = np.asarray(p, dtype=float) * w / (TWO_PI * hbar)
        out = np.zeros_like(y)
        for j, c in enumerate(coeff):
            out += c * np.sinc(y - 0.5 * (n - 2 * j))
        return w * out / 2.0 ** n

    return tr


def build_state(spec: SlitSpec, hbar: float = 1.0) -> Wavefunction:
    """Construct a normalized twin-slit state from its geometry."""
    s = spec.s
    centers = (-0.5 * s, 0.5 * s)

    if spec.kind == NARROW:
        sigma = spec.sigma_slit
        half = 14.0 * sigma

        def profile(u):
            return np.exp(-u * u / (4.0 * sigma * sigma))

        def dprofile(u):
            return -u / (2.0 * sigma * sigma) * profile(u)

        def d2profile(u):
            s2 = 2.0 * sigma * sigma
            return (u * u / (s2 * s2) - 1.0 / s2) * profile(u)

        windows = tuple((c - half, c + half) for c in centers)
        breakpoints: tuple[float, ...] = ()
        features = tuple((c, sigma) for c in centers)

        def window_transform(p):
            p = np.asarray(p, dtype=float)
            return (math.sqrt(4.0 * math.pi) * sigma
                    * np.exp(-(sigma * p / hbar) ** 2))

    else:
        w = spec.w
        n = spec.n if spec.kind == COSINE_POWER else 0
        half = 0.5 * w

        def profile(u):
            u = np.asarray(u, dtype=float)
            inside = np.abs(u) < half
            if n == 0:
                out = np.where(inside, 1.0, 0.0)
                return np.where(np.abs(u) == half, 0.5, out)
            return np.where(inside, np.cos(math.pi * u / w) ** n, 0.0)

        def dprofile(u):
            u = np.asarray(u, dtype=float)
            inside = np.abs(u) < half
            if n == 0:
                return np.zeros_like(u)
            return np.where(
                inside,
                -n * math.pi / w * np.cos(math.pi * u / w) ** (n - 1)
                * np.sin(math.pi * u / w), 0.0)

        def d2profile(u):
            u = np.asarray(u, dtype=float)
            inside = np.abs(u) < half
            if n == 0:
                return np.zeros_like(u)
            c_, s_ = np.cos(math.pi * u / w), np.sin(math.pi * u / w)
            if n == 1:
                core = c_
            else:
                core = c_ ** n - (n - 1) * c_ ** (n - 2) * s_ * s_
            return np.where(inside, -n * (math.pi / w) ** 2 * core, 0.0)

        windows = tuple((c - half, c + half) for c in centers)
        breakpoints = tuple(c + e for c in centers for e in (-half, half))
        features = ()
        window_transform = cos_window_transform(n, w, hbar)

    def raw_amplitude(x):
        x = np.asarray(x, dtype=float)
        return profile(x - centers[0]) + profile(x - centers[1])

    norm_sq = _norm_over_windows(lambda x: raw_amplitude(x) ** 2, windows, features)
    a_norm = 1.0 / math.sqrt(norm_sq)

    def amplitude(x):
        return a_norm * raw_amplitude(x)

    def density(x):
        return amplitude(x) ** 2

    def derivative(x):
        x = np.asarray(x, dtype=float)
        return a_norm * (dprofile(x - centers[0]) + dprofile(x - centers[1]))

    def second_derivative(x):
        x = np.asarray(x, dtype=float)
        return a_norm * (d2profile(x - centers[0]) + d2profile(x - centers[1]))

    def momentum_amplitude(p):
        p = np.asarray(p, dtype=float)
        return (2.0 * a_norm * np.cos(0.5 * p * s / hbar)
                * window_transform(p) / math.sqrt(TWO_PI * hbar))

    smooth = not is_rectangular(spec)
    psi = Wavefunction(
        spec=spec, amplitude=amplitude, density=density,
        support_windows=windows, breakpoints=breakpoints, features=features,
        norm_check=norm_sq * a_norm ** 2,
        derivative=derivative if smooth else None,
        second_derivative=second_derivative if smooth else None,
        momentum_amplitude=momentum_amplitude)
    return psi


# ---------------------------------------------------------------------------
# Measurement branches and sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementBranch:
    """One measurement function O_xi(x) with its analytic decomposition.

    value(x) must equal  sum plane_waves + sum sgn_components + remainder(x)
    with the remainder decaying to zero at both ends.  weight/phase_derivs
    are populated for weighted-unitary (phase-kick) branches and drive the
    closed-form moment formulas.
    """

    label: str
    kind: str
    value: Callable[[np.ndarray], np.ndarray]
    plane_waves: tuple[PlaneWaveComponent, ...] = ()
    sgn_components: tuple[SignumComponent, ...] = ()
    breakpoints: tuple[float, ...] = ()
    features: tuple[tuple[float, float], ...] = ()
    weight: float | None = None
    phase_derivs: tuple[Callable, Callable, Callable] | None = None
    derivs: tuple[Callable, Callable, Callable] | None = None
    transformable: bool = True

    def remainder(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.value(x), dtype=complex).copy()
        for pw in self.plane_waves:
            out -= pw.amplitude * np.exp(1j * pw.wavenumber * x)
        for sg in self.sgn_components:
            out -= sg.amplitude * np.sign(x) * np.exp(1j * sg.wavenumber * x)
        return out

    def cuts(self) -> tuple[float, ...]:
        """Quadrature cut points: breakpoints plus feature transition edges."""
        out = list(self.breakpoints)
        for c, scale in self.features:
            out += [c - 4.0 * scale, c, c + 4.0 * scale]
        return tuple(out)

    def has_remainder(self) -> bool:
        probes = np.array([b + d for b in (self.breakpoints or (0.0,))
                           for d in (-0.37, 0.41)]
                          + [c + d * sc for c, sc in self.features
                             for d in (-2.1, 0.0, 1.7)] or [0.3])
        return bool(np.max(np.abs(self.remainder(probes))) > 1e-13)

    def derivative(self, order: int) -> Callable[[np.ndarray], np.ndarray]:
        """d^order O / dx^order as a callable; distributional parts at
        breakpoints are not represented (callers must check the state
        vanishes there)."""
        if order == 0:
            return self.value
        if self.derivs is not None:
            return self.derivs[order - 1]
        if self.phase_derivs is not None:
            d1, d2, d3 = self.phase_derivs
            if order == 1:
                return lambda x: 1j * d1(x) * np.asarray(self.value(x))
            if order == 2:
                return lambda x: ((1j * d2(x) - d1(x) ** 2)
                                  * np.asarray(self.value(x)))
            if order == 3:
                return lambda x: ((1j * d3(x) - 3.0 * d1(x) * d2(x)
                                   - 1j * d1(x) ** 3)
                                  * np.asarray(self.value(x)))
        if self.kind in ("heaviside", "partial_heaviside"):
            # flat away from the step; the delta at the step is handled by
            # the precondition |psi|^2(step) ~ 0 in the moment formulas
            return lambda x: np.zeros_like(np.asarray(x, dtype=float),
                                           dtype=complex)
        raise PreconditionError(
            f"branch {self.label!r} does not provide derivatives")


@dataclass(frozen=True)
class MeasurementSet:
    """Complete family of measurement functions, sum |O_xi|^2 = 1."""

    branches: tuple[MeasurementBranch, ...]
    completeness_residual: float = field(default=0.0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))

    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.branches)

    def branch(self, label: str) -> MeasurementBranch:
        for b in self.branches:
            if b.label == label:
                return b
        raise KeyError(label)

    def completeness(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape)
        for b in self.branches:
            total += np.abs(np.asarray(b.value(x), dtype=complex)) ** 2
        return total

    def is_unitary_family(self) -> bool:
        return all(b.phase_derivs is not None and b.weight is not None
                   for b in self.branches)

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(sorted({bp for b in self.branches for bp in b.breakpoints}))


def measurement_set(branches: Sequence[MeasurementBranch],
                    check_grid: GridSpec | None = None,
                    tol: float = 1e-9) -> MeasurementSet:
    """Bundle branches, enforcing the completeness relation on a check grid."""
    branches = tuple(branches)
    grid = check_grid or GridSpec.symmetric(8.0, 4097)
    xs = [grid.points]
    for b in branches:
        for bp in b.breakpoints:
            xs.append(np.array([bp - 1e-7, bp, bp + 1e-7]))
    x = np.concatenate(xs)
    total = np.zeros(x.shape)
    for b in branches:
        total += np.abs(np.asarray(b.value(x), dtype=complex)) ** 2
    residual = float(np.max(np.abs(total - 1.0)))
    if residual > tol:
        raise CompletenessError(
            f"sum |O(x)|^2 deviates from 1 by {residual:.3e}")
    return MeasurementSet(branches, residual)


def _step_value(left: complex, right: complex):
    """Value assigned exactly at a step: RMS magnitude, mean phase."""
    mag = math.sqrt(0.5 * (abs(left) ** 2 + abs(right) ** 2))
    mean = 0.5 * (left + right)
    if abs(mean) < 1e-300:
        return mag
    return mag * mean / abs(mean)


def _step_function(left: complex, right: complex, at: float = 0.0) -> Callable:
    mid = _step_value(left, right)

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < at, left, right).astype(complex)
        return np.where(x == at, mid, out)

    return f


def identity_set() -> MeasurementSet:
    branch = MeasurementBranch(
        label="id", kind="identity",
        value=lambda x: np.ones_like(np.asarray(x, dtype=float), dtype=complex),
        plane_waves=(PlaneWaveComponent(1.0 + 0.0j, 0.0),),
        weight=1.0,
        phase_derivs=(lambda x: np.zeros_like(np.asarray(x, dtype=float)),) * 3)
    return measurement_set([branch])


def heaviside_set() -> MeasurementSet:
    """Minimal which-way measurement: O_+- = Theta(+-x)."""
    plus = MeasurementBranch(
        label="+", kind="heaviside",
        value=_step_function(0.0, 1.0),
        plane_waves=(PlaneWaveComponent(0.5 + 0.0j, 0.0),),
        sgn_components=(SignumComponent(0.5 + 0.0j, 0.0),),
        breakpoints=(0.0,))
    minus = MeasurementBranch(
        label="-", kind="heaviside",
        value=_step_function(1.0, 0.0),
        plane_waves=(PlaneWaveComponent(0.5 + 0.0j, 0.0),),
        sgn_components=(SignumComponent(-0.5 + 0.0j, 0.0),),
        breakpoints=(0.0,))
    return measurement_set([plus, minus])


def partial_heaviside_set(alpha: float) -> MeasurementSet:
    """Partially distinguishing measurement with visibility cos(alpha).

    O_1 = Theta(-x) + cos(alpha) Theta(x),  O_2 = sin(alpha) Theta(x).
    """
    ca, sa = math.cos(alpha), math.sin(alpha)
    one = MeasurementBranch(
        label="1", kind="partial_heaviside",
        value=_step_function(1.0, ca),
        plane_waves=(PlaneWaveComponent(0.5 * (1.0 + ca), 0.0),),
        sgn_components=(SignumComponent(0.5 * (ca - 1.0), 0.0),),
        breakpoints=(0.0,))
    two = MeasurementBranch(
        label="2", kind="partial_heaviside",
        value=_step_function(0.0, sa),
        plane_waves=(PlaneWaveComponent(0.5 * sa, 0.0),),
        sgn_components=(SignumComponent(0.5 * sa, 0.0),),
        breakpoints=(0.0,))
    return measurement_set([one, two])


def kick_branch(weight: float, wavenumber: float, label: str) -> MeasurementBranch:
    """Pure classical kick sqrt(N) e^{i k x}: momentum kick +hbar k."""
    root = math.sqrt(weight)
    k = wavenumber
    return MeasurementBranch(
        label=label, kind="phase_kick",
        value=lambda x: root * np.exp(1j * k * np.asarray(x, dtype=float)),
        plane_waves=(PlaneWaveComponent(root + 0.0j, k),),
        weight=weight,
        phase_derivs=(lambda x: np.full_like(np.asarray(x, dtype=float), k),
                      lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                      lambda x: np.zeros_like(np.asarray(x, dtype=float))))


def kick_set(weights: Sequence[float], wavenumbers: Sequence[float]) -> MeasurementSet:
    """Classical random-kick measurement; weights must sum to one."""
    weights = [float(w) for w in weights]
    if abs(math.fsum(weights) - 1.0) > 1e-12:
        raise ConstructionError("kick weights must sum to 1")
    if any(w <= 0 for w in weights):
        raise ConstructionError("kick weights must be positive")
    branches = [kick_branch(w, k, label=f"k{i}")
                for i, (w, k) in enumerate(zip(weights, wavenumbers))]
    return measurement_set(branches)


def phase_kick_branch(weight: float, phase: Callable, d1: Callable,
                      d2: Callable, d3: Callable, label: str = "u",
                      transformable: bool = False) -> MeasurementBranch:
    """Weighted unitary branch sqrt(N) exp(i phi(x)) with analytic phi'."""
    root = math.sqrt(weight)

    def value(x):
        return root * np.exp(1j * np.asarray(phase(x), dtype=float))

    return MeasurementBranch(
        label=label, kind="phase_kick", value=value, weight=weight,
        phase_derivs=(d1, d2, d3), transformable=transformable)


def rotation_branch_pair(theta: Callable, center: float, scale: float,
                         theta_minus: float, theta_plus: float
                         ) -> list[MeasurementBranch]:
    """Two real branches cos(theta(x)), sin(theta(x)); complete by identity.

    theta must saturate to theta_minus / theta_plus away from the transition
    region (center, scale) so the signum split leaves a decaying remainder.
    """
    def c_value(x):
        return np.cos(theta(np.asarray(x, dtype=float))).astype(complex)

    def s_value(x):
        return np.sin(theta(np.asarray(x, dtype=float))).astype(complex)

    cl, cr = math.cos(theta_minus), math.cos(theta_plus)
    sl, sr = math.sin(theta_minus), math.sin(theta_plus)
    feats = ((center, scale),)
    return [
        MeasurementBranch(label="c", kind="rotation", value=c_value,
                          plane_waves=(PlaneWaveComponent(0.5 * (cl + cr), 0.0),),
                          sgn_components=(SignumComponent(0.5 * (cr - cl), 0.0),),
                          features=feats),
        MeasurementBranch(label="s", kind="rotation", value=s_value,
                          plane_waves=(PlaneWaveComponent(0.5 * (sl + sr), 0.0),),
                          sgn_components=(SignumComponent(0.5 * (sr - sl), 0.0),),
                          features=feats),
    ]


def rotation_set(visibility_value: float, center: float = 0.0,
                 scale: float = 0.08, s: float = 1.0,
                 theta0: float = 0.0) -> MeasurementSet:
    """Smooth two-branch rotation measurement with a prescribed visibility.

    theta steps by arccos(V) between the slits through a tanh profile, so
    V = |cos(theta(s/2) - theta(-s/2))| = visibility_value exactly.
    """
    if not 0.0 <= visibility_value <= 1.0:
        raise DomainError("visibility must lie in [0, 1]")
    dtheta_target = math.acos(visibility_value)

    def sigmoid(x):
        return 0.5 * (1.0 + np.tanh((x - center) / scale))

    denom = float(sigmoid(0.5 * s) - sigmoid(-0.5 * s))
    amp = dtheta_target / denom

    def theta(x):
        return theta0 + amp * sigmoid(x)

    branches = rotation_branch_pair(theta, center, scale,
                                    theta_minus=theta0, theta_plus=theta0 + amp)
    return measurement_set(branches)


# -- randomized families used by the verification sweeps --------------------

def random_rotation_set(rng: np.random.Generator, visibility_value: float,
                        s: float = 1.0) -> MeasurementSet:
    center = float(rng.uniform(-0.2, 0.2)) * s
    scale = float(rng.uniform(0.06, 0.15)) * s
    theta0 = float(rng.uniform(0.0, math.pi))
    return rotation_set(visibility_value, center, scale, s, theta0)


def random_kick_set(rng: np.random.Generator, n_kicks: int = 3,
                    k_scale: float = 5.0) -> MeasurementSet:
    raw = rng.uniform(0.2, 1.0, size=n_kicks)
    weights = raw / raw.sum()
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    ks = rng.uniform(-k_scale, k_scale, size=n_kicks)
    return kick_set(weights.tolist(), ks.tolist())


def random_phase_set(rng: np.random.Generator, n_branches: int = 2
                     ) -> MeasurementSet:
    """Weighted unitary branches with smooth saturating phases."""
    raw = rng.uniform(0.3, 1.0, size=n_branches)
    weights = raw / raw.sum()
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    branches = []
    for i in range(n_branches):
        a = float(rng.uniform(-2.0, 2.0))
        x0 = float(rng.uniform(-0.3, 0.3))
        ell = float(rng.uniform(0.15, 0.6))
        w_i = float(weights[i])
        root = math.sqrt(w_i)

        def make(a=a, x0=x0, ell=ell, root=root):
            def phase(x):
                return a * np.tanh((np.asarray(x, dtype=float) - x0) / ell)

            def d1(x):
                return a / ell / np.cosh((np.asarray(x, dtype=float) - x0) / ell) ** 2

            def d2(x):
                u = (np.asarray(x, dtype=float) - x0) / ell
                return -2.0 * a / ell ** 2 * np.tanh(u) / np.cosh(u) ** 2

            def d3(x):
                u = (np.asarray(x, dtype=float) - x0) / ell
                return (a / ell ** 3) * (4.0 * np.tanh(u) ** 2 - 2.0
                                         / np.cosh(u) ** 2) / np.cosh(u) ** 2

            def value(x):
                return root * np.exp(1j * phase(x))

            cl = root * np.exp(1j * -a)
            cr = root * np.exp(1j * a)
            return value, (d1, d2, d3), cl, cr, x0, ell

        value, derivs, cl, cr, x0_, ell_ = make()
        branches.append(MeasurementBranch(
            label=f"u{i}", kind="phase_kick", value=value, weight=w_i,
            phase_derivs=derivs,
            plane_waves=(PlaneWaveComponent(0.5 * (cl + cr), 0.0),),
            sgn_components=(SignumComponent(0.5 * (cr - cl), 0.0),),
            features=((x0_, ell_),)))
    return measurement_set(branches)


# ---------------------------------------------------------------------------
# Visibility and the minimum-disturbance bound
# ---------------------------------------------------------------------------

def visibility(m_set: MeasurementSet, s: float) -> float:
    """Fringe visibility |sum_xi O_xi(-s/2) O_xi*(s/2)| in [0, 1]."""
    left = np.array([-0.5 * s])
    right = np.array([0.5 * s])
    total = 0.0 + 0.0j
    for b in m_set.branches:
        total += complex(np.asarray(b.value(left), dtype=complex)[0]
                         * np.conj(np.asarray(b.value(right), dtype=complex)[0]))
    return abs(total)


def min_disturbance_bound(v: float, s: float, hbar: float = 1.0) -> float:
    """Half-width (hbar/s) arccos[(V+1)/2] below which the transfer
    distribution cannot be confined."""
    if not 0.0 <= v <= 1.0 + 1e-12:
        raise DomainError("visibility must lie in [0, 1]")
    v = min(v, 1.0)
    return hbar / s * math.acos(0.5 * (v + 1.0))


def classical_kick_distribution(m_set: MeasurementSet,
                                hbar: float = 1.0) -> MixedDistribution:
    """Mixture of momentum kicks sum_xi N_xi delta(p - hbar k_xi).

    Only defined for pure-kick sets (a single plane wave per branch)."""
    atoms = []
    for b in m_set.branches:
        if len(b.plane_waves) != 1 or b.has_remainder() or b.sgn_components:
            raise PreconditionError("classical distribution needs a pure-kick set")
        pw = b.plane_waves[0]
        atoms.append(DiracAtom(hbar * pw.wavenumber, abs(pw.amplitude) ** 2))
    return atoms_only(atoms)


# ---------------------------------------------------------------------------
# Momentum distributions before / after the measurement
# ---------------------------------------------------------------------------

def _pair_tail_components(jumps: list[tuple[float, complex]], hbar: float
                          ) -> tuple[TailModel, ...]:
    """Exact 1/p^2 tail of |FT f|^2 for piecewise-constant f with the given
    jumps: (hbar / 2 pi) |sum_j D_j e^{-i x_j p / hbar}|^2 / p^2."""
    pref = hbar / TWO_PI
    comps: list[TailModel] = []
    const = pref * math.fsum(abs(d) ** 2 for _, d in jumps)
    if const > 0:
        comps.append(TailModel(const, 0.0, 0.5 * math.pi, 2.0))
    for i in range(len(jumps)):
        for j in range(i + 1, len(jumps)):
            xi, di = jumps[i]
            xj, dj = jumps[j]
            z = di * np.conj(dj)
            theta = (xj - xi) / hbar  # cos(theta p + arg z) term
            amp = 2.0 * pref * abs(z)
            if amp == 0.0:
                continue
            phase = math.atan2(float(np.imag(z)), float(np.real(z)))
            k = abs(theta)
            ph = phase if theta >= 0 else -phase
            comps.append(TailModel(amp, k, (ph + 0.5 * math.pi) % TWO_PI, 2.0))
    return tuple(comps)


def fitted_positive_tails(eval_density, start: float,
                          frequencies: Sequence[float], decay: float,
                          n_samples: int = 2400,
                          mass_tol: float = 1e-8
                          ) -> tuple[TailModel, ...]:
    """Tail components A sin(k p + phi) / p^decay for a nonnegative density
    whose oscillation frequencies are known (slit-edge distances).

    Amplitudes come from a linear least-squares fit to exact samples on
    [start, 3 start]; the whole set is then rescaled so its improper
    integral matches the numerically integrated remainder, which is what
    mass accounting actually needs.  Returns () when the remainder is
    negligible.
    """
    t, w = np.polynomial.legendre.leggauss(32)
    # exact remainder mass over [start, 16 start] in geometric blocks
    remainder = 0.0
    edges = start * 2.0 ** np.arange(0, 5)
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces = max(8, int((hi - lo) * max(frequencies) / 3.0)) \
            if frequencies else 8
        sub = np.linspace(lo, hi, pieces + 1)
        for a, b in zip(sub[:-1], sub[1:]):
            x = 0.5 * (b - a) * (t + 1.0) + a
            remainder += 0.5 * (b - a) * float(
                np.dot(w, np.asarray(eval_density(x), dtype=float)))
    if remainder < mass_tol:
        return ()
    p = np.linspace(start, 3.0 * start, n_samples)
    target = np.asarray(eval_density(p), dtype=float) * p ** decay
    cols = [np.ones_like(p)]
    keys: list[tuple[float, str]] = [(0.0, "cos")]
    for f in sorted({f for f in frequencies if f > 0}):
        cols.append(np.cos(f * p))
        keys.append((f, "cos"))
        cols.append(np.sin(f * p))
        keys.append((f, "sin"))
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), target, rcond=None)
    comps = []
    idx = 0
    for f, kind in keys:
        c = coef[idx]
        idx += 1
        if abs(c) < 1e-16:
            continue
        if kind == "cos":
            amp, phase = abs(c), (0.5 * math.pi if c > 0 else 1.5 * math.pi)
        else:
            amp, phase = abs(c), (0.0 if c > 0 else math.pi)
        comps.append(TailModel(amp, f, phase, decay))
    from .numerics import osc_tail_integral
    model_mass = 0.0
    for m in comps:
        res = osc_tail_integral(m, 0, start)
        if not res.converged:
            return ()
        model_mass += res.value
    if model_mass <= 0:
        return ()
    scale = remainder / model_mass
    return tuple(TailModel(m.amplitude * scale, m.wavenumber, m.phase,
                           m.decay_power) for m in comps)


def _branch_state_jumps(branch: MeasurementBranch, psi: Wavefunction
                        ) -> list[tuple[float, complex]] | None:
    """Jumps of O(x) psi(x) when the product is piecewise constant; else None."""
    if not is_rectangular(psi.spec):
        return None
    if branch.kind not in ("heaviside", "partial_heaviside", "identity"):
        return None
    pts = sorted(set(psi.breakpoints) | set(branch.breakpoints))
    jumps = []
    for x0 in pts:
        left = complex(np.asarray(branch.value(np.array([x0 - 1e-9])))[0]
                       * np.asarray(psi.amplitude(np.array([x0 - 1e-9])))[0])
        right = complex(np.asarray(branch.value(np.array([x0 + 1e-9])))[0]
                        * np.asarray(psi.amplitude(np.array([x0 + 1e-9])))[0])
        if abs(right - left) > 1e-14:
            jumps.append((x0, right - left))
    return jumps


def is_rectangular(spec: SlitSpec) -> bool:
    return spec.kind == RECTANGULAR or (spec.kind == COSINE_POWER and spec.n == 0)


def default_momentum_grid(psi: Wavefunction, hbar: float = 1.0,
                          half_span: float | None = None,
                          spacing: float = 0.02) -> GridSpec:
    """Symmetric momentum grid wide enough to hold the state's spectrum."""
    s = psi.spec.s
    span = half_span if half_span is not None else 40.0 * hbar / s
    if psi.spec.kind == NARROW:
        span = max(span, 3.2 * hbar / psi.spec.sigma_slit)
        spacing = max(spacing, TWO_PI * hbar / s / 24.0)
    elif psi.spec.kind == COSINE_POWER and psi.spec.n >= 1:
        span = max(span, 60.0 * hbar / s)
    n = int(round(2 * span / spacing))
    if n % 2 == 0:
        n += 1  # odd point count so p = 0 is a node
    return GridSpec.symmetric(span, n)


def momentum_distribution(psi: Wavefunction, p_grid: GridSpec | None = None,
                          hbar: float = 1.0) -> MixedDistribution:
    """P_i(p) = |psi~(p)|^2 with exact tail components where they matter."""
    if abs(psi.norm_check - 1.0) > 1e-6:
        raise PreconditionError("state is not normalized")
    grid = p_grid or default_momentum_grid(psi, hbar)
    p = grid.points
    if psi.momentum_amplitude is not None:
        amp = np.asarray(psi.momentum_amplitude(p), dtype=complex)
    else:
        amp = transform_callable(psi.amplitude, psi.segments(), p, hbar)
    density = np.abs(amp) ** 2
    tails: tuple[tuple[TailModel, ...], tuple[TailModel, ...]] = ((), ())
    if is_rectangular(psi.spec):
        a = 1.0 / math.sqrt(2.0 * psi.spec.w)
        jumps = [(x0, complex(d)) for x0, d in (
            (-0.5 * psi.spec.s - 0.5 * psi.spec.w, a),
            (-0.5 * psi.spec.s + 0.5 * psi.spec.w, -a),
            (0.5 * psi.spec.s - 0.5 * psi.spec.w, a),
            (0.5 * psi.spec.s + 0.5 * psi.spec.w, -a))]
        comps = _pair_tail_components(jumps, hbar)
        tails = (comps, comps)
    elif psi.spec.kind == COSINE_POWER and psi.spec.n >= 1:
        s, w = psi.spec.s, psi.spec.w
        freqs = [0.0, w / hbar, s / hbar, (s - w) / hbar, (s + w) / hbar]
        comps = fitted_positive_tails(
            lambda q: np.abs(psi.momentum_amplitude(q)) ** 2,
            grid.x_max, freqs, 2.0 * psi.spec.n + 2.0)
        tails = (comps, comps)
    return MixedDistribution(grid, density, (), tails)


def final_momentum_distribution(psi: Wavefunction, m_set: MeasurementSet,
                                p_grid: GridSpec | None = None,
                                hbar: float = 1.0) -> MixedDistribution:
    """P_f(p) = sum_xi |<p| O_xi |psi>|^2 after the which-way measurement."""
    grid = p_grid or default_momentum_grid(psi, hbar)
    p = grid.points
    density = np.zeros(p.size)
    left_comps: list[TailModel] = []
    right_comps: list[TailModel] = []
    for b in m_set.branches:
        if not b.transformable:
            raise PreconditionError(f"branch {b.label!r} is not transformable")
        segs = psi.segments(b.cuts())
        max_k = max([abs(pw.wavenumber) for pw in b.plane_waves] or [0.0])

        def product(x, b=b):
            return (np.asarray(b.value(x), dtype=complex)
                    * np.asarray(psi.amplitude(x), dtype=complex))

        # plane-wave factors shift the spectrum: widen the phase budget
        phase_budget = (float(np.max(np.abs(p))) / hbar + max_k)
        amp = transform_callable(product, segs, p, hbar, max_phase=phase_budget)
        density += np.abs(amp) ** 2
        jumps = _branch_state_jumps(b, psi)
        if jumps:
            comps = _pair_tail_components(jumps, hbar)
            left_comps.extend(comps)
            right_comps.extend(comps)
    step_kinds = ("heaviside", "partial_heaviside", "identity")
    if (not left_comps and psi.spec.kind == COSINE_POWER and psi.spec.n >= 1
            and all(b.kind in step_kinds for b in m_set.branches)):
        s, w = psi.spec.s, psi.spec.w
        freqs = [0.0, w / hbar, s / hbar, (s - w) / hbar, (s + w) / hbar]

        def eval_density(q):
            q = np.asarray(q, dtype=float)
            total = np.zeros(q.size)
            budget = float(np.max(np.abs(q))) / hbar
            for b in m_set.branches:
                def product(x, b=b):
                    return (np.asarray(b.value(x), dtype=complex)
                            * np.asarray(psi.amplitude(x), dtype=complex))
                total += np.abs(transform_callable(
                    product, psi.segments(b.cuts()), q, hbar,
                    max_phase=budget)) ** 2
            return total

        comps = fitted_positive_tails(eval_density, grid.x_max, freqs,
                                      2.0 * psi.spec.n + 2.0)
        left_comps.extend(comps)
        right_comps.extend(comps)
    return MixedDistribution(grid, density, (),
                             (tuple(left_comps), tuple(right_comps)))
