"""
Monte-Carlo weak measurements with post-selection, and the end-to-end
reconstruction of the transfer distribution.

A measurement of imprecision sigma on an observable X draws results from
P_sigma(x) = <psi| E_sigma(x) |psi> with the Gaussian probability operator
E_sigma(x) = (2 pi sigma^2)^(-1/2) exp[-(x - X)^2 / (2 sigma^2)].  The
minimally disturbing conditional state is E^(1/2)|psi> (normalized); the
probability to then pass a post-selection onto |phi> after a unitary U is
|<phi| U E^(1/2) |psi>|^2 / P_sigma(x).  Accepted results x are averaged;
as sigma -> infinity the average converges to the weak value

    Re <phi| U X |psi> / <phi| U |psi>

with an O(1/sigma^2) bias that a three-rung sigma ladder extrapolates away.
As sigma -> 0 the same estimator converges to the post-selected strong
value, which always lies inside the spectrum of X.

`reconstruct_pwv` runs the full protocol at desk scale: for every initial
momentum bin, weakly measure the bin projector, apply the which-way
measurement, record its branch and the final momentum bin, and accumulate
E[y * 1(branch, p_f bin)].  Rebinned to w = p_f - p_i and summed over bins
and branches this estimates the weak-valued transfer distribution,
including its negative regions.  Randomness comes from counter-based
Philox streams keyed by the seed, so results are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (InsufficientStatisticsError, PreconditionError,
                     UndefinedWeakValueError)
from .numerics import GridSpec
from .physics import MeasurementSet, Wavefunction
from .transfer import branch_bin_amplitude, branch_full_amplitude

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Finite systems and meters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeterSpec:
    """Measurement imprecision (same units as the observable), trial count,
    and the 64-bit stream seed."""

    sigma: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise PreconditionError("meter imprecision must be positive")
        if self.trials < 1:
            raise PreconditionError("at least one trial is required")


@dataclass(frozen=True)
class FiniteSystem:
    """State, observable, post-measurement evolution and post-selection."""

    psi: np.ndarray
    observable: np.ndarray
    evolution: np.ndarray
    postselect: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex)
        phi = np.asarray(self.postselect, dtype=complex)
        x = np.asarray(self.observable, dtype=complex)
        u = np.asarray(self.evolution, dtype=complex)
        d = psi.size
        if x.shape != (d, d) or u.shape != (d, d) or phi.shape != (d,):
            raise PreconditionError("dimension mismatch")
        for vec, name in ((psi, "psi"), (phi, "postselect")):
            if abs(np.vdot(vec, vec) - 1.0) > 1e-10:
                raise PreconditionError(f"{name} must be normalized")
        if np.max(np.abs(x - x.conj().T)) > 1e-12:
            raise PreconditionError("observable must be Hermitian")
        if np.max(np.abs(u @ u.conj().T - np.eye(d))) > 1e-12:
            raise PreconditionError("evolution must be unitary")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "observable", x)
        object.__setattr__(self, "evolution", u)
        object.__setattr__(self, "postselect", phi)


def weak_value(sys: FiniteSystem) -> float:
    """Re <phi|U X|psi> / <phi|U|psi>; may exceed the spectrum of X."""
    denom = complex(np.vdot(sys.postselect, sys.evolution @ sys.psi))
    if abs(denom) <= 1e-12:
        raise UndefinedWeakValueError("post-selection amplitude vanishes")
    numer = complex(np.vdot(sys.postselect,
                            sys.evolution @ (sys.observable @ sys.psi)))
    return float(np.real(numer / denom))


def strong_value(sys: FiniteSystem) -> float:
    """Post-selected mean of a projective measurement of X; always within
    the eigenvalue range."""
    evals, evecs = np.linalg.eigh(sys.observable)
    c = evecs.conj().T @ sys.psi                       # <x|psi>
    d = sys.postselect.conj() @ (sys.evolution @ evecs)  # <phi|U|x>
    weights = np.abs(d) ** 2 * np.abs(c) ** 2
    denom = float(np.sum(weights))
    if denom <= 1e-12:
        raise UndefinedWeakValueError("post-selection never succeeds")
    return float(np.dot(weights, evals) / denom)


def _philox(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed + (stream << 32)))


def _postselected_samples(sys: FiniteSystem, sigma: float, trials: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Accepted weak-measurement results for one sigma."""
    evals, evecs = np.linalg.eigh(sys.observable)
    c = evecs.conj().T @ sys.psi
    d = sys.postselect.conj() @ (sys.evolution @ evecs)
    probs = np.abs(c) ** 2
    probs = probs / probs.sum()
    accepted = []
    block = 1 << 16
    remaining = trials
    while remaining > 0:
        m = min(block, remaining)
        remaining -= m
        idx = rng.choice(evals.size, size=m, p=probs)
        x = evals[idx] + sigma * rng.standard_normal(m)
        # conditional pass probability |<phi|U E^(1/2)|psi>|^2 / P_sigma(x)
        g = np.exp(-(x[:, None] - evals[None, :]) ** 2 / (4.0 * sigma ** 2))
        amp = g @ (d * c)
        p_x = g ** 2 @ np.abs(c) ** 2
        ratio = np.abs(amp) ** 2 / p_x
        keep = rng.random(m) < ratio
        accepted.append(x[keep])
    return np.concatenate(accepted) if accepted else np.empty(0)


def simulate_postselected_mean(sys: FiniteSystem, meter: MeterSpec,
                               ladder: tuple[float, ...] = (1.0, math.sqrt(2.0), 2.0),
                               min_accepted: int = 100
                               ) -> tuple[float, float]:
    """Monte-Carlo estimate of the post-selected mean, sigma-ladder
    extrapolated to remove the O(1/sigma^2) weak-measurement bias.

    Runs meter.trials trials per rung at sigma = meter.sigma * ladder[j],
    fits estimate(sigma) = a + b/sigma^2 by weighted least squares, and
    returns (a, stderr of a).  Raises when any rung accepts fewer than
    min_accepted samples.
    """
    estimates, variances, sigmas = [], [], []
    for j, mult in enumerate(ladder):
        sigma = meter.sigma * mult
        rng = _philox(meter.seed, j)
        x = _postselected_samples(sys, sigma, meter.trials, rng)
        if x.size < min_accepted:
            raise InsufficientStatisticsError(
                f"only {x.size} accepted samples at sigma = {sigma}")
        estimates.append(float(np.mean(x)))
        variances.append(float(np.var(x, ddof=1) / x.size))
        sigmas.append(sigma)
    if len(ladder) == 1:
        return estimates[0], math.sqrt(variances[0])
    a_mat = np.column_stack([np.ones(len(sigmas)),
                             1.0 / np.asarray(sigmas) ** 2])
    w = 1.0 / np.asarray(variances)
    awa = a_mat.T @ (w[:, None] * a_mat)
    awy = a_mat.T @ (w * np.asarray(estimates))
    cov = np.linalg.inv(awa)
    coef = cov @ awy
    return float(coef[0]), float(math.sqrt(cov[0, 0]))


# ---------------------------------------------------------------------------
# Transfer-distribution reconstruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionResult:
    """Per-bin estimates of the transfer density with standard errors.

    stderr combines the statistical error with the quoted systematic from
    the finite initial-momentum range (stored separately in truncation)."""

    bin_grid: GridSpec           # transfer bin centers
    estimates: np.ndarray        # density estimate per bin
    stderr: np.ndarray
    sigma_ladder: tuple[float, ...]
    flagged_bins: tuple[int, ...]
    statistical: np.ndarray | None = None
    truncation: np.ndarray | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.estimates)):
            raise PreconditionError("estimates must be finite")
        if np.any(self.stderr <= 0):
            raise PreconditionError("standard errors must be positive")


def _bin_gauss_nodes(edges: np.ndarray, order: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights per bin, flattened bin-major.

    Nodes never coincide with bin edges, which matters because the
    bin-projected amplitudes are log-singular exactly there."""
    t, w = np.polynomial.legendre.leggauss(order)
    width = edges[1] - edges[0]
    nodes = (edges[:-1, None] + 0.5 * width * (t[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * width * w, edges.size - 1)
    return nodes, weights


def _bin_masses(values: np.ndarray, weights: np.ndarray, n_bins: int,
                order: int) -> np.ndarray:
    """Per-bin integrals of samples taken at the per-bin Gauss nodes."""
    return (values.reshape(n_bins, order)
            * weights.reshape(n_bins, order)).sum(axis=1)


def weak_bias_factor(sigma: float) -> float:
    """Exact attenuation of the interference term for a Gaussian meter of
    imprecision sigma: the estimator converges to a + c e^{-1/(8 sigma^2)},
    so regressing on g = 1 - e^{-1/(8 sigma^2)} recovers a + c at g = 0."""
    return 1.0 - math.exp(-1.0 / (8.0 * sigma * sigma))


def reconstruct_pwv(psi: Wavefunction, m_set: MeasurementSet,
                    bin_grid: GridSpec, meter: MeterSpec,
                    hbar: float = 1.0,
                    ladder: tuple[float, ...] = (1.0, math.sqrt(2.0), 2.0),
                    rung_shares: tuple[float, ...] | None = None,
                    pi_halfspan: float | None = None,
                    fine_per_bin: int = 8,
                    alloc_floor: float = 0.1,
                    min_counts: int = 25) -> ReconstructionResult:
    """Observe the transfer distribution through the weak-measurement protocol.

    bin_grid gives the transfer-bin centers (uniform width = spacing);
    initial and final momenta are binned with the same width over
    +-pi_halfspan.  For every initial bin and ladder rung, up to
    meter.trials trials are simulated (importance allocation: bins carrying
    little initial-momentum mass get a reduced share, never below
    alloc_floor): a weak projector measurement (result y), the which-way
    branch, and a strong final-momentum bin; E[y 1(branch, bin)] accumulates
    into the w = p_f - p_i histogram.  The rungs remove the exact
    e^{-1/(8 sigma^2)} weak-measurement attenuation by regression; bins with
    too few effective counts are flagged.
    """
    if bin_grid.n_points % 2 == 0:
        raise PreconditionError("transfer bin grid needs an odd point count "
                                "so a bin is centered at zero")
    width = bin_grid.spacing
    n_w = bin_grid.n_points
    center = (n_w - 1) // 2
    pi_halfspan = pi_halfspan or 40.0 * hbar / psi.spec.s
    n_half = int(math.ceil(pi_halfspan / width))
    n_pi = 2 * n_half + 1
    pi_edges = width * (np.arange(n_pi + 1) - 0.5 * n_pi)
    pf_edges = pi_edges
    n_pf = n_pi
    pf_nodes, pf_weights = _bin_gauss_nodes(pf_edges, fine_per_bin)
    n_br = len(m_set.branches)

    sums = np.zeros((len(ladder), n_w))
    sumsq = np.zeros((len(ladder), n_w))
    counts = np.zeros((len(ladder), n_w))
    sq_means = np.zeros((len(ladder), n_w))  # sum over bins of E[y 1]^2

    # per-branch full amplitudes once (they do not depend on the bin)
    full = np.stack([branch_full_amplitude(b, psi, pf_nodes, hbar)
                     for b in m_set.branches])
    t24, w24 = np.polynomial.legendre.leggauss(24)

    # initial-bin masses (used for the truncation systematic) and trial
    # allocation: the noise an initial bin injects into the histogram falls
    # off roughly hyperbolically with |p_i|, so so does its trial share
    w1_all = np.empty(n_pi)
    for i_bin in range(n_pi):
        lo, hi = pi_edges[i_bin], pi_edges[i_bin + 1]
        pb = 0.5 * (hi - lo) * (t24 + 1.0) + lo
        wb = 0.5 * (hi - lo) * w24
        w1_all[i_bin] = float(np.dot(
            wb, np.abs(psi.momentum_amplitude(pb)) ** 2))
    pi_centers = 0.5 * (pi_edges[:-1] + pi_edges[1:])
    taper = 12.0 * hbar / psi.spec.s
    alloc = np.clip(1.0 / (1.0 + np.abs(pi_centers) / taper),
                    alloc_floor, 1.0)
    if rung_shares is None:
        rung_shares = tuple(1.0 for _ in ladder)
    shares = np.asarray(rung_shares, dtype=float)
    shares = shares / shares.mean()

    for i_bin in range(n_pi):
        w1 = w1_all[i_bin]
        if w1 < 1e-9:
            continue
        lo, hi = pi_edges[i_bin], pi_edges[i_bin + 1]
        w0 = 1.0 - w1
        t_per = max(int(meter.trials * alloc[i_bin]), 1000)
        a_amp = np.stack([branch_bin_amplitude(b, psi, lo, hi, pf_nodes, hbar)
                          for b in m_set.branches])
        b_amp = full - a_amp
        # per (branch, pf-bin) quadratic forms, plus an overflow cell that
        # represents final momenta beyond the simulated span (discarded but
        # needed so the conditional sampling stays unbiased)
        aa = np.stack([_bin_masses(np.abs(a_amp[k]) ** 2, pf_weights, n_pf,
                                   fine_per_bin) for k in range(n_br)])
        bb = np.stack([_bin_masses(np.abs(b_amp[k]) ** 2, pf_weights, n_pf,
                                   fine_per_bin) for k in range(n_br)])
        cc = np.stack([_bin_masses(np.real(a_amp[k] * np.conj(b_amp[k])),
                                   pf_weights, n_pf, fine_per_bin)
                       for k in range(n_br)])
        flat_a = np.append(aa.ravel(), max(w1 - float(aa.sum()), 0.0))
        flat_b = np.append(bb.ravel(), max(w0 - float(bb.sum()), 0.0))
        flat_c = np.append(cc.ravel(), -float(cc.sum()))
        # Cauchy-Schwarz can only be violated by rounding; clip to keep the
        # rejection bound valid
        cap = np.sqrt(np.maximum(flat_a, 0.0) * np.maximum(flat_b, 0.0))
        flat_c = np.clip(flat_c, -cap, cap)
        sum_a = float(flat_a.sum())
        sum_b = float(flat_b.sum())
        cdf_a = np.cumsum(flat_a) / sum_a
        cdf_b = np.cumsum(flat_b) / sum_b
        overflow = flat_a.size - 1

        for j, mult in enumerate(ladder):
            sigma = meter.sigma * mult
            t_rung = max(int(t_per * shares[j]), 400)
            rng = _philox(meter.seed, (i_bin << 8) | j)
            # meter result y ~ w1 N(1, sigma) + w0 N(0, sigma)
            picks = rng.random(t_rung) < w1
            y = picks + sigma * rng.standard_normal(t_rung)
            alpha2 = np.exp(-(y - 1.0) ** 2 / (2.0 * sigma ** 2))
            beta2 = np.exp(-y ** 2 / (2.0 * sigma ** 2))
            cross = 2.0 * np.sqrt(alpha2 * beta2)
            # cell sampling given y: propose from the y-dependent mixture
            # alpha^2 a + beta^2 b (exact), accept with the cross-term
            # correction; |2 alpha beta c| <= alpha^2 a + beta^2 b makes the
            # acceptance probability exactly 1/2 for every y
            cell = np.empty(t_rung, dtype=np.int64)
            pending = np.arange(t_rung)
            guard = 0
            while pending.size and guard < 200:
                guard += 1
                a2, b2, cr = alpha2[pending], beta2[pending], cross[pending]
                pick_a = (rng.random(pending.size) * (a2 * sum_a + b2 * sum_b)
                          < a2 * sum_a)
                u = rng.random(pending.size)
                cand = np.where(pick_a,
                                np.searchsorted(cdf_a, u),
                                np.searchsorted(cdf_b, u))
                num = (a2 * flat_a[cand] + b2 * flat_b[cand]
                       + cr * flat_c[cand])
                den = 2.0 * (a2 * flat_a[cand] + b2 * flat_b[cand])
                accept = rng.random(pending.size) * den <= num
                cell[pending[accept]] = cand[accept]
                pending = pending[~accept]
            if pending.size:
                raise InsufficientStatisticsError(
                    "cell sampling failed to terminate")
            keep = cell != overflow
            w_bin = (cell[keep] % n_pf) - i_bin + center
            valid = (w_bin >= 0) & (w_bin < n_w)
            wb_valid = w_bin[valid]
            yk = y[keep][valid]
            bin_sums = np.bincount(wb_valid, weights=yk, minlength=n_w)
            bin_sq = np.bincount(wb_valid, weights=yk * yk, minlength=n_w)
            bin_cnt = np.bincount(wb_valid, minlength=n_w)
            sums[j] += bin_sums / t_rung
            sq_means[j] += (bin_sums / t_rung) ** 2 / t_rung
            sumsq[j] += bin_sq / t_rung ** 2
            counts[j] += bin_cnt

    # combine rungs: estimate(sigma) = a + b * g(sigma), report a = g -> 0
    estimates = np.zeros(n_w)
    stat = np.zeros(n_w)
    flagged = []
    sig_arr = np.asarray([meter.sigma * m for m in ladder])
    g_arr = np.asarray([weak_bias_factor(s) for s in sig_arr])
    a_mat = np.column_stack([np.ones(len(ladder)), g_arr])
    for k in range(n_w):
        means = sums[:, k]
        var = np.maximum(sumsq[:, k] - sq_means[:, k], 1e-300)
        w = 1.0 / var
        awa = a_mat.T @ (w[:, None] * a_mat)
        awy = a_mat.T @ (w * means)
        cov = np.linalg.inv(awa)
        coef = cov @ awy
        estimates[k] = coef[0] / width
        stat[k] = math.sqrt(max(cov[0, 0], 1e-300)) / width
        if counts[:, k].min() < min_counts:
            flagged.append(k)

    # quoted systematic from the finite initial-momentum range: the omitted
    # joint mass concentrates in the zero-transfer bin (its projected part
    # lands in the same final bin exactly); the spread into other bins is
    # principal-value leakage, bounded well below the omitted mass
    omitted = max(1.0 - float(w1_all.sum()), 0.0)
    frac = np.full(n_w, 0.02)
    frac[center] = 1.0
    for off, f in ((1, 0.3), (2, 0.15)):
        for k in (center - off, center + off):
            if 0 <= k < n_w:
                frac[k] = f
    trunc = omitted * frac / width
    stderr = np.sqrt(stat ** 2 + trunc ** 2)
    return ReconstructionResult(bin_grid, estimates, stderr, tuple(sig_arr),
                                tuple(flagged), statistical=stat,
                                truncation=trunc)
