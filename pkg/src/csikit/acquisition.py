"""Two-stage CSI acquisition: adaptive-overhead CS acquisition, then LS tracking.

Stage 1 grows the training overhead one time slot at a time, re-running DSAMP
until the per-measurement residual falls under a threshold.  Stage 2 reuses
the acquired support for the remaining blocks of the common-support window with
a scaled-unitary pilot of length ``G = S_a_hat``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelEvolution, SparseAngularChannel, SteeringBasis
from .errors import InvalidParameterError
from .pilots import (
    MeasurementEnsemble,
    append_sensing_rows,
    assemble_sensing_matrix,
    measure,
    random_phase_pilot_bank,
    tracking_pilot,
)
from .recovery import RecoveryResult, dsamp, ls_on_support

CAP_REACHED = "cap_reached"
TRACKING_SKIPPED = "tracking_skipped"


@dataclass(frozen=True)
class AcquisitionStep:
    G: int
    rho1: float
    result: RecoveryResult


@dataclass
class AcquisitionSession:
    G0: int
    epsilon: float
    p_th: float
    ensemble: MeasurementEnsemble
    history: list = field(default_factory=list)
    flags: set = field(default_factory=set)

    @property
    def final(self) -> AcquisitionStep:
        return self.history[-1]

    @property
    def result(self) -> RecoveryResult:
        return self.final.result

    @property
    def G_final(self) -> int:
        return self.final.G

    @property
    def support(self):
        return self.result.support

    @property
    def sparsity_level(self) -> int:
        return self.result.sparsity_level

    @property
    def suggested_G0(self) -> int:
        # one below the final overhead, so the next window can still grow
        return max(1, self.G_final - 1)

    @property
    def cap_reached(self) -> bool:
        return CAP_REACHED in self.flags


@dataclass(frozen=True)
class TrackingOutcome:
    results: tuple
    G: int
    mse: tuple

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse)) if self.mse else float("nan")


def residual_statistic(ensemble: MeasurementEnsemble, estimates: np.ndarray) -> float:
    """``sum_p ||r_p - Phi_p h_p||^2 / (P G)``."""
    fit = (ensemble.phi @ estimates.T[..., None])[..., 0]
    return float(np.sum(np.abs(ensemble.r - fit) ** 2) / (ensemble.P * ensemble.G))


def mse(estimates: np.ndarray, truth: np.ndarray) -> float:
    """Mean over subcarriers of ``||h_hat_p - h_p||^2``."""
    return float(np.mean(np.sum(np.abs(estimates - truth) ** 2, axis=0)))


def acquire(
    channel: SparseAngularChannel,
    basis: SteeringBasis,
    noise_power: float,
    G0: int,
    epsilon: float,
    p_th: float,
    rng: np.random.Generator,
    sensing_bank: np.ndarray | None = None,
) -> AcquisitionSession:
    """Adaptive-overhead acquisition on one block.

    ``sensing_bank`` is an optional ``(P, M, M)`` stack of precomputed
    worst-case (``G = M``) sensing matrices whose rows are consumed in
    order; when omitted a fresh random-phase pilot bank is drawn from ``rng``.
    The loop stops at the first overhead whose residual statistic is at most
    ``epsilon`` or, failing that, at ``G = M`` with ``cap_reached`` set.
    """
    M, P = channel.M, channel.P
    if not 1 <= G0 <= M:
        raise InvalidParameterError(f"need 1 <= G0 <= M, got G0={G0}, M={M}")
    if noise_power < 0:
        raise InvalidParameterError("noise power must be non-negative")
    if sensing_bank is None:
        sensing_bank = assemble_sensing_matrix(random_phase_pilot_bank(P, M, M, rng), basis)
    if sensing_bank.shape != (P, M, M):
        raise InvalidParameterError(f"sensing bank must be {(P, M, M)}, got {sensing_bank.shape}")

    ensemble = measure(sensing_bank[:, :G0], channel, noise_power, rng, basis=basis)
    session = AcquisitionSession(G0=G0, epsilon=epsilon, p_th=p_th, ensemble=ensemble)
    while True:
        result = dsamp(ensemble, p_th)
        rho1 = residual_statistic(ensemble, result.estimates)
        session.history.append(AcquisitionStep(ensemble.G, rho1, result))
        if rho1 <= epsilon:
            break
        if ensemble.G >= M:
            session.flags.add(CAP_REACHED)
            break
        ensemble = append_sensing_rows(ensemble, sensing_bank[:, ensemble.G], channel, rng)
        session.ensemble = ensemble
    return session


def track(
    evolution: ChannelEvolution,
    session: AcquisitionSession,
    basis: SteeringBasis,
    noise_power: float,
    U: np.ndarray | None,
    rng: np.random.Generator,
    support=None,
) -> TrackingOutcome:
    """LS tracking of blocks 2..Q on the acquired support.

    The pilot is built so that the sensing matrix restricted to the support
    is ``sqrt(G) U``.  ``support`` overrides the session's estimate (used to
    inject mismatches).
    """
    support = session.support if support is None else support
    S_hat = support.S_a
    if S_hat < 1:
        raise InvalidParameterError("acquired support is empty; nothing to track")
    pilot = tracking_pilot(support, basis, U, S_hat)
    phi = np.broadcast_to(assemble_sensing_matrix(pilot, basis), (evolution.blocks[0].P, S_hat, basis.M))
    results, errors = [], []
    for block in evolution.blocks[1:]:
        ens = measure(phi, block, noise_power, rng, basis=basis)
        res = ls_on_support(ens, support)
        results.append(res)
        errors.append(mse(res.estimates, block.gains))
    return TrackingOutcome(results=tuple(results), G=S_hat, mse=tuple(errors))


@dataclass(frozen=True)
class TwoStageOutcome:
    session: AcquisitionSession
    tracking: TrackingOutcome | None
    acquisition_mse: float
    flags: frozenset = frozenset()

    @property
    def tracking_mse(self) -> float:
        return self.tracking.mean_mse if self.tracking else float("nan")


def run_two_stage(
    evolution: ChannelEvolution,
    basis: SteeringBasis,
    noise_power: float,
    G0: int,
    epsilon: float,
    p_th: float,
    rng: np.random.Generator,
    U: np.ndarray | None = None,
    sensing_bank: np.ndarray | None = None,
) -> TwoStageOutcome:
    """Acquire on block 1 and track blocks 2..Q."""
    first = evolution.blocks[0]
    session = acquire(first, basis, noise_power, G0, epsilon, p_th, rng, sensing_bank)
    acq_mse = mse(session.result.estimates, first.gains)
    flags = set(session.flags)
    tracking = None
    if evolution.Q < 2:
        flags.add(TRACKING_SKIPPED)
    elif session.sparsity_level < 1:
        flags.add(TRACKING_SKIPPED)
    else:
        tracking = track(evolution, session, basis, noise_power, U, rng)
    return TwoStageOutcome(session=session, tracking=tracking, acquisition_mse=acq_mse, flags=frozenset(flags))
