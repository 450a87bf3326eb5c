"""Greedy joint-sparse recovery over P pilot subcarriers.

All solvers take a :class:`~csikit.pilots.MeasurementEnsemble` (``phi`` is
``(P, G, M)``, ``r`` is ``(P, G)``) and return a :class:`RecoveryResult` whose
``estimates`` are ``(M, P)``.

Multiplication tallies use one cost model everywhere, per sparse signal:
a dense G x n matrix-vector product costs ``G*n``, a squared-magnitude vector
of length n costs ``n``, and a least-squares solve on G x k columns costs
``2*G*k**2 + k**3``.  Each trace record carries the per-signal count of its
iteration; ``RecoveryResult.mult_count`` sums those over all signals.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import SupportSet
from .errors import BudgetExceededError, InvalidParameterError
from .pilots import PINV_RCOND, MeasurementEnsemble

# trace events
CONTINUE = "continue"
ADVANCE = "advance"
QUIT_PTH = "quit_threshold"
QUIT_RESIDUAL = "quit_stage_residual"
STAGE_CAP = "stage_cap"
DONE = "done"
INIT = "init"

NO_COMPLETED_STAGE = "no_completed_stage"
ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class TraceRecord:
    stage: int
    iteration: int
    sparsity: int
    residual_energy: float
    event: str
    mults: int
    union_size: int = 0
    min_coordinate_energy: float = float("nan")
    active_signals: int = 1


@dataclass(frozen=True)
class RecoveryResult:
    algorithm: str
    estimates: np.ndarray
    support: SupportSet
    trace: tuple = ()
    mult_count: int = 0
    flags: frozenset = frozenset()
    column_supports: tuple | None = None
    info: dict = field(default_factory=dict)

    @property
    def sparsity_level(self) -> int:
        return self.support.S_a

    def residual_energy(self, ensemble: MeasurementEnsemble) -> float:
        """Aggregate ``sum_p ||r_p - Phi_p h_p||^2`` of these estimates."""
        return float(np.sum(np.abs(ensemble.r - _apply(ensemble.phi, self.estimates)) ** 2))


def ls_cost(G: int, k: int) -> int:
    return 2 * G * k * k + k**3


# Cholesky pivot ratio below which the normal equations are abandoned for the
# SVD pseudo-inverse (ratio**2 approximates the inverse condition number).
_CHOL_RATIO = 1e-6


def _solve(cols: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Batched least squares: ``cols`` (P, G, k), ``r`` (P, G) -> (P, k).

    Well-conditioned tall systems go through the normal equations; wide or
    near-singular ones use the minimum-norm pseudo-inverse.
    """
    n, G, k = cols.shape
    if k == 0 or G == 0:
        return np.zeros((n, k), dtype=complex)
    return _normal_or_pinv(cols, r, np.zeros((n, k), dtype=bool))


def _normal_or_pinv(cols: np.ndarray, r: np.ndarray, pad: np.ndarray) -> np.ndarray:
    """Solve each row by normal equations, falling back per row to ``pinv``.

    ``pad`` marks all-zero padding columns, pinned to a zero coefficient.
    """
    n, G, k = cols.shape
    cols_h = np.conj(np.swapaxes(cols, 1, 2))
    gram = cols_h @ cols
    diag = np.arange(k)
    gram[:, diag, diag] += pad
    rhs = (cols_h @ r[..., None])[..., 0]
    good = (k - pad.sum(axis=1)) <= G
    # cholesky on an identity-patched copy so one bad row cannot abort the batch
    safe = np.where(good[:, None, None], gram, np.eye(k))
    try:
        chol = np.linalg.cholesky(safe)
        d = np.abs(np.diagonal(chol, axis1=1, axis2=2))
        good &= np.isfinite(d).all(axis=1) & (d.min(axis=1) > _CHOL_RATIO * d.max(axis=1))
    except np.linalg.LinAlgError:
        good[:] = False
    out = np.empty((n, k), dtype=complex)
    if good.any():
        out[good] = np.linalg.solve(gram[good], rhs[good][..., None])[..., 0]
    bad = ~good
    if bad.any():
        out[bad] = (np.linalg.pinv(cols[bad], rcond=PINV_RCOND) @ r[bad][..., None])[..., 0]
    return out


def _apply(phi: np.ndarray, estimates: np.ndarray) -> np.ndarray:
    """``Phi_p h_p`` for every subcarrier: (P, G, M) x (M, P) -> (P, G)."""
    return (phi @ estimates.T[..., None])[..., 0]


def _proxy(phi_h: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (phi_h @ b[..., None])[..., 0]


def max_stage_sparsity(G: int, M: int) -> int:
    """Largest stage sparsity the adaptive solvers may reach."""
    return max(1, min(G - 1, M))


def _top(energy: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries along the last axis; ties go to the lower index."""
    return np.argsort(-energy, axis=-1, kind="stable")[..., :k]


def _embed(M: int, P: int, idx: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Place joint-support coefficients ``values`` (P, k) into an (M, P) estimate."""
    out = np.zeros((M, P), dtype=complex)
    out[idx] = values.T
    return out


def _support(idx) -> SupportSet:
    return SupportSet(tuple(sorted(int(i) for i in idx)))


# DSAMP


def dsamp(ensemble: MeasurementEnsemble, p_th: float, max_iterations: int | None = None) -> RecoveryResult:
    """Distributed sparsity-adaptive matching pursuit.

    Stage-wise greedy search over a joint support of growing size T.  Each
    iteration picks T candidates by aggregate proxy energy, runs LS on the
    union with the retained support, prunes back to T, and re-fits.  The
    search stops when the weakest retained coordinate's mean energy drops
    below ``p_th`` or when a stage ends with a larger residual than the
    previous stage.  The estimate of the last completed stage is returned.

    If the threshold fires before any stage completes, the current estimate
    is returned and the result is flagged ``no_completed_stage``.  Stages
    never grow beyond ``G - 1`` columns (a G-column fit leaves no residual to
    judge it by); hitting that bound ends the search with a ``stage_cap``
    trace event.
    """
    if not p_th > 0:
        raise InvalidParameterError(f"p_th must be positive, got {p_th}")
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    if G < 1:
        raise InvalidParameterError("DSAMP needs at least one measurement per subcarrier")
    if max_iterations is None:
        max_iterations = 50 * min(G, M) + 50
    phi_h = np.conj(np.swapaxes(phi, 1, 2))
    stage_cap = max_stage_sparsity(G, M)

    T, i, j = 1, 1, 1
    c = np.zeros((M, P), dtype=complex)
    c_last = c
    omega_last = np.zeros(0, dtype=np.intp)
    omega_prev = np.zeros(0, dtype=np.intp)
    omega = omega_prev
    b_prev = r
    res_prev = float(np.sum(np.abs(r) ** 2))
    res_last = math.inf
    completed = False
    flags = set()
    trace = []

    for _ in range(max_iterations):
        a = _proxy(phi_h, b_prev)
        gamma = _top(np.sum(np.abs(a) ** 2, axis=0), T)
        union = np.union1d(omega_prev, gamma)
        t = _solve(phi[:, :, union], r)
        omega = np.sort(union[_top(np.sum(np.abs(t) ** 2, axis=0), T)])
        c_omega = _solve(phi[:, :, omega], r)
        c = _embed(M, P, omega, c_omega)
        b = r - _apply(phi, c)
        res = float(np.sum(np.abs(b) ** 2))
        coord = np.sum(np.abs(c_omega) ** 2, axis=0) / P
        weakest = float(coord[int(np.argmin(coord))])
        k = union.size
        mults = 2 * G * M + G + M + k + T + ls_cost(G, k) + ls_cost(G, T)

        if weakest < p_th:
            event = QUIT_PTH
        elif res_last < res:
            event = QUIT_RESIDUAL
        elif res_prev <= res:
            event = ADVANCE
        else:
            event = CONTINUE
        trace.append(TraceRecord(j, i, T, res, event, mults, k, weakest, P))

        if event in (QUIT_PTH, QUIT_RESIDUAL):
            break
        if event == ADVANCE:
            completed = True
            c_last, omega_last, res_last = c, omega, res
            j += 1
            T = j
            if T > stage_cap:
                trace.append(TraceRecord(j, i, T, res, STAGE_CAP, 0, 0, float("nan"), P))
                break
        else:
            omega_prev, b_prev, res_prev = omega, b, res
            i += 1
    else:
        flags.add(ITERATION_CAP)

    if completed:
        estimates, support = c_last, omega_last
    else:
        flags.add(NO_COMPLETED_STAGE)
        estimates, support = c, omega
    return RecoveryResult(
        algorithm="dsamp",
        estimates=estimates,
        support=_support(support),
        trace=tuple(trace),
        mult_count=P * sum(rec.mults for rec in trace),
        flags=frozenset(flags),
    )


# per-subcarrier baselines


def _gather(phi: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-subcarrier column selection: ``phi`` (P, G, M), ``idx`` (P, k) -> (P, G, k)."""
    return np.take_along_axis(phi, idx[:, None, :], axis=2)


def _scatter(M: int, idx: np.ndarray, values: np.ndarray) -> np.ndarray:
    P = idx.shape[0]
    out = np.zeros((P, M), dtype=complex)
    np.put_along_axis(out, idx, values, axis=1)
    return out.T


def _per_column_result(name, M, idx_rows, estimates, trace, flags=()):
    column_supports = tuple(_support(row) for row in idx_rows)
    union = sorted(set().union(*(s.indices for s in column_supports))) if column_supports else []
    return RecoveryResult(
        algorithm=name,
        estimates=estimates,
        support=SupportSet(tuple(union)),
        trace=tuple(trace),
        mult_count=sum(rec.mults * rec.active_signals for rec in trace),
        flags=frozenset(flags),
        column_supports=column_supports,
    )


def _check_sparsity(S_a: int, G: int):
    if S_a < 0:
        raise InvalidParameterError(f"sparsity must be non-negative, got {S_a}")
    if S_a > G:
        raise InvalidParameterError(f"sparsity {S_a} exceeds measurement count G={G}; LS is unsolvable")


def omp(ensemble: MeasurementEnsemble, S_a: int) -> RecoveryResult:
    """Orthogonal matching pursuit run independently on each subcarrier for S_a steps."""
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    _check_sparsity(S_a, G)
    phi_h = np.conj(np.swapaxes(phi, 1, 2))
    idx = np.zeros((P, 0), dtype=np.intp)
    b = r
    x = np.zeros((P, 0), dtype=complex)
    trace = []
    for i in range(1, S_a + 1):
        energy = np.abs(_proxy(phi_h, b)) ** 2
        np.put_along_axis(energy, idx, -np.inf, axis=1)
        idx = np.concatenate([idx, np.argmax(energy, axis=1)[:, None]], axis=1)
        x = _solve(_gather(phi, idx), r)
        b = r - _apply(phi, _scatter(M, idx, x))
        res = float(np.sum(np.abs(b) ** 2))
        trace.append(TraceRecord(1, i, i, res, CONTINUE, 2 * G * M + M + ls_cost(G, i), i, active_signals=P))
    return _per_column_result("omp", M, idx, _scatter(M, idx, x), trace)


def joint_omp(ensemble: MeasurementEnsemble, S_a: int) -> RecoveryResult:
    """OMP selecting one joint-support index per step by aggregate proxy energy."""
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    _check_sparsity(S_a, G)
    phi_h = np.conj(np.swapaxes(phi, 1, 2))
    chosen = []
    b = r
    x = np.zeros((P, 0), dtype=complex)
    trace = []
    for i in range(1, S_a + 1):
        energy = np.sum(np.abs(_proxy(phi_h, b)) ** 2, axis=0)
        energy[chosen] = -np.inf
        chosen.append(int(np.argmax(energy)))
        x = _solve(phi[:, :, chosen], r)
        b = r - _apply(phi, _embed(M, P, np.asarray(chosen), x))
        res = float(np.sum(np.abs(b) ** 2))
        trace.append(TraceRecord(1, i, i, res, CONTINUE, 2 * G * M + M + ls_cost(G, i), i, active_signals=P))
    idx = np.asarray(sorted(chosen), dtype=np.intp)
    x = _solve(phi[:, :, idx], r) if idx.size else x
    return RecoveryResult(
        algorithm="joint_omp",
        estimates=_embed(M, P, idx, x),
        support=_support(idx),
        trace=tuple(trace),
        mult_count=P * sum(rec.mults for rec in trace),
    )


def sp(ensemble: MeasurementEnsemble, S_a: int, max_iterations: int = 100) -> RecoveryResult:
    """Subspace pursuit on each subcarrier with known sparsity S_a."""
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    _check_sparsity(S_a, G)
    if S_a == 0:
        return _per_column_result("sp", M, np.zeros((P, 0), dtype=np.intp), np.zeros((M, P), complex), [])
    phi_h = np.conj(np.swapaxes(phi, 1, 2))

    idx = _top(np.abs(_proxy(phi_h, r)) ** 2, S_a)
    x = _solve(_gather(phi, idx), r)
    b = r - _apply(phi, _scatter(M, idx, x))
    res = np.sum(np.abs(b) ** 2, axis=1)
    trace = [
        TraceRecord(0, 0, S_a, float(res.sum()), INIT, 2 * G * M + M + G + ls_cost(G, S_a), S_a, active_signals=P)
    ]
    active = np.ones(P, dtype=bool)
    flags = set()
    for it in range(1, max_iterations + 1):
        if not active.any():
            break
        cand = _top(np.abs(_proxy(phi_h, b)) ** 2, S_a)
        merged = np.concatenate([idx, cand], axis=1)
        union = np.sort(merged, axis=1)
        # duplicates contribute zero columns after de-duplication below
        dup = np.zeros_like(union, dtype=bool)
        dup[:, 1:] = union[:, 1:] == union[:, :-1]
        cols = _gather(phi, union)
        cols[np.broadcast_to(dup[:, None, :], cols.shape)] = 0
        t = _solve(cols, r)
        t[dup] = 0
        new_idx = np.take_along_axis(union, _top(np.abs(t) ** 2, S_a), axis=1)
        new_x = _solve(_gather(phi, new_idx), r)
        new_b = r - _apply(phi, _scatter(M, new_idx, new_x))
        new_res = np.sum(np.abs(new_b) ** 2, axis=1)
        k = int(np.max(np.sum(~dup, axis=1)))
        improved = active & (new_res < res)
        n_active = int(active.sum())
        trace.append(
            TraceRecord(
                1,
                it,
                S_a,
                float(np.where(improved, new_res, res).sum()),
                CONTINUE,
                2 * G * M + G + M + k + ls_cost(G, k) + ls_cost(G, S_a),
                k,
                active_signals=n_active,
            )
        )
        idx = np.where(improved[:, None], new_idx, idx)
        x = np.where(improved[:, None], new_x, x)
        b = np.where(improved[:, None], new_b, b)
        res = np.where(improved, new_res, res)
        active = improved
    else:
        flags.add(ITERATION_CAP)
    return _per_column_result("sp", M, idx, _scatter(M, idx, x), trace, flags)


def _solve_padded(cols: np.ndarray, r: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """LS where ``valid`` (P, k) marks real columns; padded slots solve to zero."""
    if cols.shape[2] == 0:
        return np.zeros(cols.shape[:1] + (0,), dtype=complex)
    return _normal_or_pinv(np.where(valid[:, None, :], cols, 0), r, ~valid)


def samp(ensemble: MeasurementEnsemble, p_th: float, max_iterations: int | None = None) -> RecoveryResult:
    """Sparsity-adaptive matching pursuit with unit step, run on each subcarrier.

    A subcarrier halts once its per-measurement residual energy ``||b||^2 / G``
    drops below ``p_th``; its stage size grows by one whenever an iteration
    fails to reduce the residual.  Subcarriers are processed in lockstep with
    per-subcarrier supports padded to a common width.
    """
    if not p_th > 0:
        raise InvalidParameterError(f"p_th must be positive, got {p_th}")
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    if G < 1:
        raise InvalidParameterError("SAMP needs at least one measurement per subcarrier")
    if max_iterations is None:
        max_iterations = 50 * min(G, M) + 50
    cap = max_stage_sparsity(G, M)
    # sentinel column M is all zeros
    phi_pad = np.concatenate([phi, np.zeros((P, G, 1), dtype=phi.dtype)], axis=2)
    phi_h = np.conj(np.swapaxes(phi, 1, 2))
    rows = np.arange(P)

    L = np.ones(P, dtype=np.intp)
    stage = np.ones(P, dtype=np.intp)
    F = np.full((P, 0), M, dtype=np.intp)
    x = np.zeros((P, 0), dtype=complex)
    b = r.copy()
    res = np.sum(np.abs(r) ** 2, axis=1)
    active = np.ones(P, dtype=bool)
    trace = []
    flags = set()

    for it in range(1, max_iterations + 1):
        if not active.any():
            break
        # halted subcarriers are frozen, so only the active rows are solved
        act = np.flatnonzero(active)
        La = L[act]
        Lmax = int(La.max())
        ra, phi_a = r[act], phi_pad[act]
        energy = np.abs(_proxy(phi_h[act], b[act])) ** 2
        cand = _top(energy, Lmax)
        cand = np.where(np.arange(Lmax)[None, :] < La[:, None], cand, M)
        union = np.sort(np.concatenate([F[act], cand], axis=1), axis=1)
        dup = np.zeros(union.shape, dtype=bool)
        dup[:, 1:] = union[:, 1:] == union[:, :-1]
        union = np.where(dup, M, union)
        valid_u = union < M
        t = _solve_padded(_gather(phi_a, union), ra, valid_u)
        score = np.where(valid_u, np.abs(t) ** 2, -np.inf)
        pick = _top(score, Lmax)
        new_F = np.take_along_axis(union, pick, axis=1)
        new_F = np.where(np.arange(Lmax)[None, :] < La[:, None], new_F, M)
        new_F = np.sort(new_F, axis=1)
        valid_f = new_F < M
        cols_f = _gather(phi_a, new_F)
        new_x = _solve_padded(cols_f, ra, valid_f)
        new_b = ra - (cols_f @ np.where(valid_f, new_x, 0)[..., None])[..., 0]
        new_res = np.sum(np.abs(new_b) ** 2, axis=1)

        done = new_res / G < p_th
        advance = ~done & (new_res >= res[act])
        cont = ~done & ~advance
        k = valid_u.sum(axis=1)
        for j, p in enumerate(act):
            event = DONE if done[j] else ADVANCE if advance[j] else CONTINUE
            kp, Lp = int(k[j]), int(La[j])
            mults = 2 * G * M + G + M + kp + ls_cost(G, kp) + ls_cost(G, Lp)
            trace.append(TraceRecord(int(stage[p]), it, Lp, float(new_res[j]), event, mults, kp))

        width = max(F.shape[1], Lmax)
        F = _pad(F, width, M)
        x = _pad(x, width, 0)
        upd = act[done | cont]
        sel = done | cont
        F[upd] = _pad(new_F[sel], width, M)
        x[upd] = _pad(np.where(valid_f, new_x, 0)[sel], width, 0)
        b[act[cont]] = new_b[cont]
        res[act[cont]] = new_res[cont]
        adv = act[advance]
        stage[adv] += 1
        L[adv] += 1
        capped = adv[L[adv] > cap]
        for p in capped:
            trace.append(TraceRecord(int(stage[p]), it, int(L[p]), float(res[p]), STAGE_CAP, 0, 0))
        active[act[done]] = False
        active[capped] = False
    else:
        flags.add(ITERATION_CAP)

    keep = F < M
    estimates = np.zeros((P, M + 1), dtype=complex)
    estimates[rows[:, None], F] = np.where(keep, x, 0)
    column_supports = tuple(_support(F[p][keep[p]]) for p in range(P))
    union_all = sorted(set().union(*(s.indices for s in column_supports)))
    return RecoveryResult(
        algorithm="samp",
        estimates=estimates[:, :M].T.copy(),
        support=SupportSet(tuple(union_all)),
        trace=tuple(trace),
        mult_count=sum(rec.mults for rec in trace),
        flags=frozenset(flags),
        column_supports=column_supports,
    )


def _pad(a: np.ndarray, width: int, fill) -> np.ndarray:
    if a.shape[1] >= width:
        return a
    extra = np.full((a.shape[0], width - a.shape[1]), fill, dtype=a.dtype)
    return np.concatenate([a, extra], axis=1)


# support-restricted LS


def ls_on_support(ensemble: MeasurementEnsemble, support) -> RecoveryResult:
    """Per-subcarrier LS restricted to a given joint support."""
    support = support if isinstance(support, SupportSet) else _support(support)
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    if support.S_a > G:
        raise InvalidParameterError(f"support size {support.S_a} exceeds G={G}")
    if support.S_a and support.indices[-1] >= M:
        raise InvalidParameterError(f"support index {support.indices[-1]} out of range for M={M}")
    idx = support.as_array()
    x = _solve(phi[:, :, idx], r)
    k = support.S_a
    return RecoveryResult(
        algorithm="ls",
        estimates=_embed(M, P, idx, x),
        support=support,
        trace=(TraceRecord(1, 1, k, float("nan"), DONE, ls_cost(G, k), k, active_signals=P),),
        mult_count=P * ls_cost(G, k),
    )


def oracle_ls(ensemble: MeasurementEnsemble, true_support) -> RecoveryResult:
    """LS on the true support: the genie-aided benchmark."""
    res = ls_on_support(ensemble, true_support)
    return RecoveryResult(
        algorithm="oracle_ls",
        estimates=res.estimates,
        support=res.support,
        trace=res.trace,
        mult_count=res.mult_count,
    )


# exhaustive l0 search


def brute_force_l0(
    ensemble: MeasurementEnsemble,
    S_max: int,
    budget: int = 250_000,
    tol: float = 1e-9,
    noiseless: bool | None = None,
) -> RecoveryResult:
    """Exhaustive joint-support search up to cardinality ``S_max``.

    Noiseless mode returns the smallest-cardinality support whose aggregate
    residual is at most ``tol`` (scaled by ``max(1, ||r||^2)``), with ties
    resolved lexicographically.  Noisy mode returns the minimum-residual
    support of size ``S_max``.  ``info`` records, per cardinality, the best
    residual and how many supports fit to within the tolerance.
    """
    phi, r = ensemble.phi, ensemble.r
    P, G, M = phi.shape
    if S_max < 0:
        raise InvalidParameterError("S_max must be non-negative")
    S_max = min(S_max, M)
    total = sum(math.comb(M, s) for s in range(S_max + 1))
    if total > budget:
        raise BudgetExceededError(f"{total} candidate supports exceed the budget of {budget}")
    if noiseless is None:
        noiseless = ensemble.noise_power == 0
    energy = float(np.sum(np.abs(r) ** 2))
    thresh = tol * max(1.0, energy)

    best_idx = np.zeros(0, dtype=np.intp)
    best_x = np.zeros((P, 0), dtype=complex)
    best_res = energy
    per_card = {0: {"best_residual": energy, "fits": int(energy <= thresh)}}
    found = energy <= thresh and noiseless
    for s in range(1, S_max + 1):
        if found:
            break
        combos = np.array(list(itertools.combinations(range(M), s)), dtype=np.intp)
        C = combos.shape[0]
        cols = phi[:, :, combos]  # (P, G, C, s)
        cols = np.moveaxis(cols, 2, 0).reshape(C * P, G, s)
        rr = np.broadcast_to(r, (C, P, G)).reshape(C * P, G)
        x = _solve(cols, rr)
        resid = rr - np.einsum("ngs,ns->ng", cols, x)
        res = np.sum(np.abs(resid) ** 2, axis=1).reshape(C, P).sum(axis=1)
        k = int(np.argmin(res))  # first minimum = lexicographically smallest
        fits = int(np.count_nonzero(res <= thresh))
        per_card[s] = {"best_residual": float(res[k]), "fits": fits}
        if noiseless:
            if fits:
                k = int(np.flatnonzero(res <= thresh)[0])
                found = True
            elif s < S_max:
                continue
        best_idx = combos[k]
        best_x = x.reshape(C, P, s)[k]
        best_res = float(res[k])

    return RecoveryResult(
        algorithm="brute_force_l0",
        estimates=_embed(M, P, best_idx, best_x),
        support=_support(best_idx),
        info={
            "residual": best_res,
            "per_cardinality": per_card,
            "unique": (per_card[len(best_idx)]["fits"] == 1) if found else None,
            "exact": bool(found),
        },
    )


# closed-form complexity


def closed_form_cost(algorithm: str, G: int, M: int, S_a: int, j: int) -> int:
    """Closed-form per-iteration complex multiplications for one signal.

    ``j`` is the iteration index for OMP and the stage index for SAMP/DSAMP;
    SP ignores it.
    """
    if j < 1:
        raise InvalidParameterError(f"stage/iteration index must be >= 1, got {j}")
    if algorithm in ("omp", "joint_omp"):
        return 2 * G * M + M + ls_cost(G, j)
    if algorithm == "sp":
        return 2 * G * M + G + M + 2 * S_a + 2 * ls_cost(G, S_a)
    if algorithm in ("samp", "dsamp"):
        return 2 * G * M + G + M + 3 * S_a + 2 * ls_cost(G, j)
    raise InvalidParameterError(f"unknown algorithm {algorithm!r}")


def count_multiplications(algorithm: str, G: int, M: int, S_a: int, trace) -> np.ndarray:
    """Closed-form cost of every record in ``trace`` (zero for bookkeeping records).

    OMP records carry the iteration index in ``sparsity``; SAMP and DSAMP
    records carry the stage size ``T = j``.
    """
    if algorithm not in ("omp", "joint_omp", "sp", "samp", "dsamp"):
        raise InvalidParameterError(f"unknown algorithm {algorithm!r}")
    out = np.zeros(len(trace), dtype=np.int64)
    for n, rec in enumerate(trace):
        if rec.event == STAGE_CAP:
            continue
        out[n] = closed_form_cost(algorithm, G, M, S_a, rec.sparsity)
    return out


ALGORITHMS = {
    "dsamp": dsamp,
    "omp": omp,
    "joint_omp": joint_omp,
    "sp": sp,
    "samp": samp,
}
