"""Uniqueness checks, Cramer-Rao bounds, error metrics and threshold calibration."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .channel import SupportSet, build_ula_basis, draw_channel_ensemble, draw_support
from .errors import BudgetExceededError, DimensionError, InvalidParameterError, RankDeficiencyError
from .pilots import assemble_sensing_matrix, db_to_linear, measure, random_phase_pilot_bank
from .recovery import ls_on_support

RANK_TOL = 1e-10
BRIDGE_TOL = 1e-8
MIN_CALIBRATION_TRIALS = 1000

# Default thresholds per SNR in dB: (p_th, epsilon).
DEFAULT_THRESHOLDS = {
    10.0: (0.06, 0.08),
    15.0: (0.02, 0.03),
    20.0: (0.01, 0.009),
    25.0: (0.008, 0.003),
    30.0: (0.005, 0.001),
}


# uniqueness


@dataclass(frozen=True)
class UniquenessReport:
    spark: int
    rank: int
    margin: int
    unique: bool
    bridge_error: float = 0.0


def _numerical_rank(a: np.ndarray, scale: float | None = None) -> int:
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    top = s.max() if scale is None else scale
    if top == 0:
        return 0
    return int(np.count_nonzero(s > RANK_TOL * top))


def spark_bruteforce(matrix: np.ndarray, budget: int = 2_000_000) -> int:
    """Smallest number of linearly dependent columns.

    Returns ``D + 1`` when no dependent subset of at most ``D`` columns exists.
    Singular values below ``1e-10`` times the largest singular value of the
    whole matrix count as zero.
    """
    A = np.asarray(matrix)
    if A.ndim != 2:
        raise DimensionError("spark needs a 2-D matrix")
    D, F = A.shape
    kmax = min(D, F)
    total = sum(math.comb(F, k) for k in range(1, kmax + 1))
    if total > budget:
        raise BudgetExceededError(f"{total} column subsets exceed the budget of {budget}")
    scale = float(np.linalg.svd(A, compute_uv=False).max()) if A.size else 0.0
    if scale == 0:
        return 1 if F else D + 1
    for k in range(1, kmax + 1):
        combos = np.array(list(itertools.combinations(range(F), k)), dtype=np.intp)
        sub = np.moveaxis(A[:, combos], 1, 0)  # (C, D, k)
        s = np.linalg.svd(sub, compute_uv=False)
        if np.any(s[:, -1] <= RANK_TOL * scale):
            return k
    return D + 1


def gmmv_uniqueness_margin(phi_list, support, sparse_columns, spark_budget: int = 2_000_000) -> UniquenessReport:
    """Check the generalized-MMV uniqueness condition ``2S < spark(Phi_1) - 1 + rank(D~)``.

    ``phi_list`` holds L sensing matrices of shape ``(D, N)``; ``sparse_columns``
    is ``(N, L)`` with column l supported on ``support``.  Each ``Phi_l`` is
    related to ``Phi_1`` on the support through the full-rank bridge
    ``Psi_l = A_l A_1^+ + (I - A_1 A_1^+)`` with ``A_l = (Phi_l)_support``.
    """
    phis = [np.asarray(p) for p in phi_list]
    if not phis:
        raise InvalidParameterError("need at least one sensing matrix")
    D, N = phis[0].shape
    if any(p.shape != (D, N) for p in phis):
        raise DimensionError("all sensing matrices must share one shape")
    Fm = np.asarray(sparse_columns)
    if Fm.ndim == 1:
        Fm = Fm[:, None]
    L = len(phis)
    if Fm.shape != (N, L):
        raise DimensionError(f"sparse columns must be {(N, L)}, got {Fm.shape}")
    xi = (support if isinstance(support, SupportSet) else SupportSet(tuple(support))).as_array()
    S = xi.size
    if S > D:
        raise InvalidParameterError(f"support size {S} exceeds the measurement count {D}")

    A1 = phis[0][:, xi]
    A1_pinv = np.linalg.pinv(A1, rcond=1e-12)
    proj = A1 @ A1_pinv
    eye = np.eye(D)
    cols = [phis[0] @ Fm[:, 0]]
    bridge_error = 0.0
    for l in range(1, L):
        Al = phis[l][:, xi]
        psi = Al @ A1_pinv + (eye - proj)
        bridge_error = max(bridge_error, float(np.max(np.abs(psi @ A1 - Al))) if S else 0.0)
        s = np.linalg.svd(psi, compute_uv=False)
        if s.min() <= RANK_TOL * s.max():
            raise RankDeficiencyError(
                f"bridge matrix for l={l + 1} is singular (smallest/largest singular value {s.min() / s.max():.3e})"
            )
        cols.append(np.linalg.solve(psi, phis[l] @ Fm[:, l]))
    if bridge_error > BRIDGE_TOL:
        raise RankDeficiencyError(f"bridge reproduces the sensing columns only to {bridge_error:.3e}")
    d_tilde = np.stack(cols, axis=1)
    rank = _numerical_rank(d_tilde)
    spark = spark_bruteforce(phis[0], budget=spark_budget)
    margin = spark - 1 + rank - 2 * S
    return UniquenessReport(spark=spark, rank=rank, margin=margin, unique=margin > 0, bridge_error=bridge_error)


# Cramer-Rao bounds


def crlb_on_support(phi: np.ndarray, support, noise_power: float) -> float:
    """``sigma^2 Tr{((Phi)_S^* (Phi)_S)^-1}``; a ``(P, G, M)`` stack gives the mean over p."""
    if noise_power < 0:
        raise InvalidParameterError("noise power must be non-negative")
    phi = np.asarray(phi)
    stack = phi[None] if phi.ndim == 2 else phi
    idx = (support if isinstance(support, SupportSet) else SupportSet(tuple(support))).as_array()
    cols = stack[:, :, idx]
    k = idx.size
    if k == 0:
        return 0.0
    if k > cols.shape[1]:
        raise RankDeficiencyError(f"{k} support columns cannot be full rank with {cols.shape[1]} rows")
    gram = np.conj(np.swapaxes(cols, 1, 2)) @ cols
    lam = np.linalg.eigvalsh(gram)
    if np.any(lam <= RANK_TOL * lam.max(axis=1, keepdims=True)):
        raise RankDeficiencyError("restricted sensing matrix is rank deficient; the bound is undefined")
    return float(noise_power * np.mean(np.sum(1.0 / lam, axis=1)))


def harmonic_lower_bound(phi: np.ndarray, support, noise_power: float) -> float:
    """``sigma^2 S^2 / Tr{(Phi)_S^* (Phi)_S}``, a lower bound on :func:`crlb_on_support`."""
    phi = np.asarray(phi)
    stack = phi[None] if phi.ndim == 2 else phi
    idx = (support if isinstance(support, SupportSet) else SupportSet(tuple(support))).as_array()
    tr = np.sum(np.abs(stack[:, :, idx]) ** 2, axis=(1, 2))
    return float(noise_power * np.mean(idx.size**2 / tr))


# metrics


@dataclass(frozen=True)
class Metrics:
    mse: float
    nmse: float
    support_detected: bool


def _row_support(x: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.flatnonzero(np.any(x != 0, axis=1)))


def metrics(estimates: np.ndarray, truth: np.ndarray, est_support=None, true_support=None) -> Metrics:
    """MSE over subcarriers, energy-normalized MSE and exact support detection.

    Supports default to the nonzero rows of each matrix.
    """
    estimates = np.asarray(estimates)
    truth = np.asarray(truth)
    if estimates.shape != truth.shape:
        raise DimensionError(f"estimate shape {estimates.shape} differs from truth {truth.shape}")
    if estimates.ndim == 1:
        estimates, truth = estimates[:, None], truth[:, None]
    err = float(np.mean(np.sum(np.abs(estimates - truth) ** 2, axis=0)))
    energy = float(np.mean(np.sum(np.abs(truth) ** 2, axis=0)))
    nmse = err / energy if energy > 0 else (0.0 if err == 0 else math.inf)
    es = tuple(est_support) if est_support is not None else _row_support(estimates)
    ts = tuple(true_support) if true_support is not None else _row_support(truth)
    return Metrics(mse=err, nmse=nmse, support_detected=tuple(es) == tuple(ts))


# thresholds


def default_thresholds(snr_db: float) -> tuple:
    """``(p_th, epsilon)`` for an SNR, log-linearly interpolated between table points."""
    snrs = np.array(sorted(DEFAULT_THRESHOLDS))
    vals = np.array([DEFAULT_THRESHOLDS[s] for s in snrs])
    x = float(np.clip(snr_db, snrs[0], snrs[-1]))
    p_th = float(np.exp(np.interp(x, snrs, np.log(vals[:, 0]))))
    eps = float(np.exp(np.interp(x, snrs, np.log(vals[:, 1]))))
    return p_th, eps


@dataclass
class ThresholdCalibration:
    snr_grid: tuple
    p_th: tuple
    epsilon: tuple
    rho2_h0: dict = field(repr=False, default_factory=dict)
    rho2_h1: dict = field(repr=False, default_factory=dict)
    rho1_h0: dict = field(repr=False, default_factory=dict)
    rho1_h1: dict = field(repr=False, default_factory=dict)

    def table(self) -> list:
        return [
            {"snr_db": float(s), "p_th": float(p), "epsilon": float(e)}
            for s, p, e in zip(self.snr_grid, self.p_th, self.epsilon)
        ]


def _kde(samples: np.ndarray) -> gaussian_kde:
    return gaussian_kde(samples, bw_method="silverman")


def density_crossing(low: np.ndarray, high: np.ndarray, points: int = 2000) -> float:
    """Point between the two sample medians where the KDE of ``high`` overtakes that of ``low``."""
    lo, hi = float(np.median(low)), float(np.median(high))
    if not lo < hi:
        raise InvalidParameterError("the 'low' samples must sit below the 'high' samples")
    f_low, f_high = _kde(low), _kde(high)
    grid = np.linspace(lo, hi, points)
    diff = f_high.logpdf(grid) - f_low.logpdf(grid)
    above = np.flatnonzero(diff >= 0)
    if above.size == 0:
        return hi
    k = int(above[0])
    if k == 0:
        return lo
    # linear interpolation of the sign change
    d0, d1 = diff[k - 1], diff[k]
    return float(grid[k - 1] + (grid[k] - grid[k - 1]) * (-d0) / (d1 - d0))


def minimax_threshold(h0: np.ndarray, h1: np.ndarray, points: int = 400) -> float:
    """Threshold minimizing ``max(P(x > t | H0), P(x <= t | H1))`` under KDE fits."""
    f0, f1 = _kde(h0), _kde(h1)
    both = np.concatenate([h0, h1])
    grid = np.linspace(both.min(), both.max(), points)
    false_alarm = np.array([f0.integrate_box_1d(t, np.inf) for t in grid])
    miss = np.array([f1.integrate_box_1d(-np.inf, t) for t in grid])
    return float(grid[int(np.argmin(np.maximum(false_alarm, miss)))])


def _calibration_samples(snr_db, M, P, S_a_grid, G_grid, trials, rng, basis):
    cells = [(s, g) for s in S_a_grid for g in G_grid if g >= s + 2]
    if not cells:
        raise InvalidParameterError("need at least one (S_a, G) pair with G >= S_a + 2")
    noise = 1.0 / db_to_linear(snr_db)
    r2h0, r2h1, r1h0, r1h1 = [], [], [], []
    for _ in range(trials):
        S_a, G = cells[int(rng.integers(len(cells)))]
        support = draw_support(M, S_a, min(2, S_a), rng)
        chan = draw_channel_ensemble(M, P, support, rng, 1.0 / S_a)
        phi = assemble_sensing_matrix(random_phase_pilot_bank(P, G, M, rng), basis)
        ens = measure(phi, chan, noise, rng)
        idx = support.as_array()

        fit = ls_on_support(ens, support)
        b = ens.r - (phi @ fit.estimates.T[..., None])[..., 0]
        r1h0.append(np.sum(np.abs(b) ** 2) / (P * G))

        # the stage T = S_a + 1 superset: the strongest off-support proxy joins
        proxy = np.sum(np.abs(np.conj(np.swapaxes(phi, 1, 2)) @ b[..., None])[..., 0] ** 2, axis=0)
        proxy[idx] = -np.inf
        extra = int(np.argmax(proxy))
        sup = SupportSet(tuple(sorted(set(support.indices) | {extra})))
        c = ls_on_support(ens, sup).estimates
        coord = np.sum(np.abs(c) ** 2, axis=1) / P
        r2h0.append(coord[idx].min())
        r2h1.append(coord[extra])

        # a wrong support of the right size: one true index swapped for the intruder
        drop = int(idx[rng.integers(S_a)])
        wrong = SupportSet(tuple(sorted((set(support.indices) - {drop}) | {extra})))
        c = ls_on_support(ens, wrong).estimates
        b = ens.r - (phi @ c.T[..., None])[..., 0]
        r1h1.append(np.sum(np.abs(b) ** 2) / (P * G))
    return tuple(np.asarray(v, dtype=float) for v in (r2h0, r2h1, r1h0, r1h1))


def calibrate_thresholds(
    snr_grid,
    M: int,
    P: int,
    S_a_grid,
    G_grid,
    trials: int,
    rng: np.random.Generator,
) -> ThresholdCalibration:
    """Monte-Carlo threshold selection.

    For each SNR, ``trials`` random (S_a, G) cells are simulated.  ``p_th`` is
    placed where the density of the off-support coordinate energy (index not
    in the support) meets that of the weakest on-support coordinate in a
    one-too-large stage.  ``epsilon`` minimizes the larger of the false-alarm
    and miss rates between the per-measurement residual of the correct
    support and that of a support with one index swapped.
    """
    if trials < MIN_CALIBRATION_TRIALS:
        raise InvalidParameterError(f"calibration needs at least {MIN_CALIBRATION_TRIALS} trials per SNR, got {trials}")
    snr_grid = tuple(float(s) for s in snr_grid)
    basis = build_ula_basis(M)
    seeds = rng.integers(0, 2**63 - 1, size=len(snr_grid))
    out = ThresholdCalibration(snr_grid=snr_grid, p_th=(), epsilon=())
    p_th, eps = [], []
    for snr, seed in zip(snr_grid, seeds):
        cell_rng = np.random.default_rng(int(seed))
        r2h0, r2h1, r1h0, r1h1 = _calibration_samples(snr, M, P, S_a_grid, G_grid, trials, cell_rng, basis)
        out.rho2_h0[snr], out.rho2_h1[snr] = r2h0, r2h1
        out.rho1_h0[snr], out.rho1_h1[snr] = r1h0, r1h1
        p_th.append(density_crossing(r2h1, r2h0))
        eps.append(minimax_threshold(r1h0, r1h1))
    out.p_th, out.epsilon = tuple(p_th), tuple(eps)
    return out
