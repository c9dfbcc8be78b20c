"""
Mixed momentum distributions: Dirac atoms + sampled density + oscillatory tails.

One container represents every distribution in the toolkit (transfer
distributions, initial/final momentum distributions, classical kick
mixtures): a finite list of point masses, a real density sampled on a
uniform grid, and per-side tail models

    density(p) ~ sum_j  A_j sin(k_j |p| + phi_j) / |p|^m_j      for |p| > grid edge

describing the lobes that continue beyond the grid.  Tail models are stored
as functions of |p|, one tuple per side, so asymmetric distributions remain
representable.  Total mass = atoms + grid quadrature + accelerated tail
integrals; weights may be negative (pseudo-probabilities), so none of the
accounting assumes positivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RangeError
from .numerics import (GridSpec, TailModel, osc_tail_integral, simpson_mass,
                       cumulative_density)


@dataclass(frozen=True)
class DiracAtom:
    """Point mass: weight * delta(p - location); weight may be negative."""

    location: float
    weight: float


def merge_atoms(atoms, tol: float = 1e-12) -> tuple[DiracAtom, ...]:
    """Coalesce atoms whose locations coincide within tol; drop zero weights."""
    merged: list[DiracAtom] = []
    for a in sorted(atoms, key=lambda a: a.location):
        if merged and abs(merged[-1].location - a.location) <= tol:
            prev = merged.pop()
            merged.append(DiracAtom(prev.location, prev.weight + a.weight))
        else:
            merged.append(DiracAtom(a.location, a.weight))
    return tuple(a for a in merged if abs(a.weight) > 0.0)


@dataclass(frozen=True)
class MixedDistribution:
    """Atoms + real density on a grid + oscillatory tails beyond the grid."""

    grid: GridSpec
    density: np.ndarray
    atoms: tuple[DiracAtom, ...] = ()
    tails: tuple[tuple[TailModel, ...], tuple[TailModel, ...]] = ((), ())

    def __post_init__(self):
        dens = np.asarray(self.density, dtype=float)
        if dens.shape != (self.grid.n_points,):
            raise ValueError("density length must match grid")
        if not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite")
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", tuple(self.atoms))

    # -- mass accounting ---------------------------------------------------

    def atom_mass(self) -> float:
        return math.fsum(a.weight for a in self.atoms)

    def density_mass(self) -> float:
        return simpson_mass(self.density, self.grid.spacing)

    def tail_mass(self) -> float:
        total = 0.0
        for side, start in ((self.tails[0], abs(self.grid.x_min)),
                            (self.tails[1], self.grid.x_max)):
            for model in side:
                res = osc_tail_integral(model, 0, start)
                if not res.converged:
                    raise RangeError("tail mass integral failed to converge")
                total += res.value
        return total

    def total_mass(self) -> float:
        return self.atom_mass() + self.density_mass() + self.tail_mass()

    # -- evaluation ---------------------------------------------------------

    def density_at(self, p) -> np.ndarray:
        """Density interpolated on the grid, tail models beyond it."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.interp(p, self.grid.points, self.density, left=0.0, right=0.0)
        left = p < self.grid.x_min
        right = p > self.grid.x_max
        for model in self.tails[0]:
            out[left] += model(np.abs(p[left]))
        for model in self.tails[1]:
            out[right] += model(p[right])
        return out

    def cumulative_on_grid(self) -> np.ndarray:
        """Cumulative density integral from the left grid edge (no atoms)."""
        return cumulative_density(self.grid.points, self.density)

    def has_tails(self) -> bool:
        return bool(self.tails[0]) or bool(self.tails[1])


def atoms_only(atoms, half_span: float | None = None) -> MixedDistribution:
    """Distribution with no continuous part (classical kick mixtures)."""
    atoms = tuple(atoms)
    span = half_span or max([abs(a.location) for a in atoms] + [1.0]) + 1.0
    grid = GridSpec.symmetric(span, 3)
    return MixedDistribution(grid, np.zeros(3), merge_atoms(atoms))


# ---------------------------------------------------------------------------
# Tail fitting
# ---------------------------------------------------------------------------

def fit_oscillatory_tail(p: np.ndarray, d: np.ndarray,
                         rel_tol: float = 0.05) -> TailModel | None:
    """Fit A sin(k p + phi) / p^m to tail samples at p > 0.

    The wavenumber and phase come from a straight-line fit to the zero
    crossings, the amplitude and decay power from log-log regression on the
    inter-zero extrema.  Returns None when the samples carry no oscillatory
    signal (all negligible) or the fitted model fails to reproduce them.
    """
    p = np.asarray(p, dtype=float)
    d = np.asarray(d, dtype=float)
    scale = float(np.max(np.abs(d))) if d.size else 0.0
    if scale < 1e-13:
        return None
    sign_change = np.where(np.diff(np.sign(d)) != 0)[0]
    if sign_change.size < 4:
        return None
    # linear interpolation of each crossing
    zeros = []
    for i in sign_change:
        x0, x1, y0, y1 = p[i], p[i + 1], d[i], d[i + 1]
        zeros.append(x0 - y0 * (x1 - x0) / (y1 - y0))
    zeros = np.asarray(zeros)
    idx = np.arange(zeros.size)
    # k z_i + phi = c + i pi  => regress z on i
    slope, intercept = np.polyfit(idx, zeros, 1)
    k = math.pi / slope
    # phase chosen so sin(k z_0 + phi) = 0 with the observed lobe sign
    phi = (-k * intercept) % (2.0 * math.pi)
    # extrema between consecutive zeros, refined parabolically
    ext_p, ext_d = [], []
    for i in range(zeros.size - 1):
        lo, hi = zeros[i], zeros[i + 1]
        mask = (p > lo) & (p < hi)
        if np.count_nonzero(mask) < 3:
            continue
        sub_p, sub_d = p[mask], d[mask]
        j = int(np.argmax(np.abs(sub_d)))
        if 0 < j < sub_p.size - 1:
            y0, y1, y2 = sub_d[j - 1], sub_d[j], sub_d[j + 1]
            denom = y0 - 2.0 * y1 + y2
            if abs(denom) > 1e-300:
                delta = 0.5 * (y0 - y2) / denom
                h = sub_p[1] - sub_p[0]
                ext_p.append(sub_p[j] + delta * h)
                ext_d.append(y1 - 0.25 * (y0 - y2) * delta)
                continue
        ext_p.append(sub_p[j])
        ext_d.append(sub_d[j])
    if len(ext_p) < 3:
        return None
    ext_p = np.asarray(ext_p)
    ext_d = np.asarray(ext_d)
    mfit, _ = np.polyfit(np.log(ext_p), np.log(np.abs(ext_d)), 1)
    decay = max(0.0, -mfit)
    # physical tails carry (half-)integer powers; snap when unambiguous so
    # the amplitude-decay degeneracy of a short window cannot skew the
    # extrapolated integrals
    snapped = round(2.0 * decay) / 2.0
    if abs(snapped - decay) < 0.08:
        decay = snapped
    # amplitude from all samples against the fixed shape (least squares)
    shape = np.sin(k * p + phi) / p ** decay
    denom = float(np.dot(shape, shape))
    if denom <= 0.0:
        return None
    amplitude = float(np.dot(shape, d)) / denom
    if amplitude < 0:
        amplitude = -amplitude
        phi = (phi + math.pi) % (2.0 * math.pi)
        shape = -shape
    model = TailModel(amplitude, k, phi, decay)
    err = float(np.max(np.abs(model(p) - d))) / float(np.max(np.abs(d)))
    if err > rel_tol:
        return None
    return model


def fit_tails(dist_grid: GridSpec, density: np.ndarray,
              fraction: float = 0.25) -> tuple[tuple[TailModel, ...],
                                               tuple[TailModel, ...]]:
    """Fit per-side tail models on the outer fraction of the grid.

    Slowly oscillating tails may show too few zero crossings in the default
    window; the window is widened (up to half the grid) until a fit lands.
    """
    p = dist_grid.points
    left = right = None
    for frac in (fraction, 2.0 * fraction, 0.5):
        n_out = max(8, int(frac * dist_grid.n_points))
        if right is None:
            right = fit_oscillatory_tail(p[-n_out:], density[-n_out:])
        if left is None:
            left = fit_oscillatory_tail(-p[:n_out][::-1], density[:n_out][::-1])
        if left is not None and right is not None:
            break
    return ((left,) if left else (), (right,) if right else ())
