"""Per-trial simulation bodies for every experiment tag.

A trial takes the config, one grid point and a private generator and returns
``(values, flags)``.  ``values`` maps ``"variant|statistic"`` to a float.
"""
from __future__ import annotations

import functools
import itertools

import numpy as np

from ..acquisition import acquire, mse as block_mse, run_two_stage
from ..channel import build_ula_basis, draw_channel_ensemble, draw_support, evolve_blocks
from ..pilots import (
    assemble_sensing_matrix,
    db_to_linear,
    gaussian_sensing,
    measure,
    random_phase_pilot_bank,
    tracking_pilot,
)
from ..recovery import dsamp, joint_omp, omp, oracle_ls, samp, sp
from ..theory import crlb_on_support, default_thresholds, metrics
from .seeds import CAMPAIGN_DOMAIN, seed_stream

# DSAMP threshold used on noiseless data when p_th is "auto".
NOISELESS_P_TH = 1e-6

# statistics reported as value histograms in addition to mean/std
HISTOGRAM_STATS = ("G_final", "S_hat")


def noise_power(cfg, snr_db) -> float:
    if cfg.noiseless or snr_db is None:
        return 0.0
    # the effective noise gains an equal-power uplink share when feedback noise is on
    share = 2.0 if cfg.feedback_noise == "on" else 1.0
    return share / db_to_linear(snr_db)


def thresholds(cfg, snr_db) -> tuple:
    if cfg.noiseless or snr_db is None:
        auto = (NOISELESS_P_TH, 1e-12)
    else:
        auto = default_thresholds(snr_db)
    p_th = auto[0] if cfg.p_th == "auto" else float(cfg.p_th)
    eps = auto[1] if cfg.epsilon == "auto" else float(cfg.epsilon)
    return p_th, eps


@functools.lru_cache(maxsize=4)
def _basis(M):
    return build_ula_basis(M)


@functools.lru_cache(maxsize=2)
def campaign_bank(seed: int, M: int, P: int) -> np.ndarray:
    """Worst-case ``(P, M, M)`` random-phase sensing bank shared by a whole campaign."""
    rng = seed_stream(seed, 0, CAMPAIGN_DOMAIN)
    bank = assemble_sensing_matrix(random_phase_pilot_bank(P, M, M, rng), _basis(M))
    bank.setflags(write=False)
    return bank


def _channel(cfg, S_a, P, rng):
    support = draw_support(cfg.M, S_a, cfg.cluster_count, rng)
    return draw_channel_ensemble(cfg.M, P, support, rng, 1.0 / S_a)


def _fixed_sensing(cfg, P, G, rng):
    if cfg.sensing == "gaussian":
        return gaussian_sensing(P, G, cfg.M, rng)
    return campaign_bank(cfg.seed, cfg.M, P)[:, :G]


def _record(out, variant, result, chan):
    m = metrics(result.estimates, chan.gains, result.support.indices, chan.support.indices)
    out[f"{variant}|mse"] = m.mse
    out[f"{variant}|nmse"] = m.nmse
    out[f"{variant}|detected"] = float(m.support_detected)
    out[f"{variant}|S_hat"] = float(result.sparsity_level)
    out[f"{variant}|mults"] = float(result.mult_count)


def _run_solver(name, ens, S_a, p_th, support):
    if name == "dsamp":
        return dsamp(ens, p_th)
    if name == "samp":
        return samp(ens, p_th)
    if name == "omp":
        return omp(ens, S_a)
    if name == "sp":
        return sp(ens, S_a)
    if name == "joint_omp":
        return joint_omp(ens, S_a)
    if name == "oracle_ls":
        return oracle_ls(ens, support)
    raise ValueError(f"unknown algorithm {name!r}")


def points(cfg) -> list:
    """Grid points of a campaign, in a fixed order."""
    snrs = (None,) if cfg.noiseless else cfg.snr_db
    P = cfg.P[0]
    tag = cfg.experiment
    if tag == "detection":
        out = []
        for mode in cfg.modes:
            for Pm in ((1,) if mode == "smv" else cfg.P):
                for S_a, G, snr in itertools.product(cfg.S_a, cfg.G, snrs):
                    out.append(dict(mode=mode, S_a=S_a, snr_db=snr, G=G, P=Pm))
        return out
    if tag in ("algo-compare", "mse-vs-snr"):
        return [dict(S_a=s, snr_db=r, G=g, P=P) for s, r, g in itertools.product(cfg.S_a, snrs, cfg.G)]
    if tag == "mse-vs-g":
        # G=None marks the adaptive scheme, which picks its own overhead
        grid = tuple(cfg.G) + (None,)
        return [dict(S_a=s, snr_db=r, G=g, P=P) for s, r, g in itertools.product(cfg.S_a, snrs, grid)]
    return [dict(S_a=s, snr_db=r, G=None, P=P) for s, r in itertools.product(cfg.S_a, snrs)]


# trial bodies


def trial_algo_compare(cfg, pt, rng):
    S_a, G, P = pt["S_a"], pt["G"], pt["P"]
    chan = _channel(cfg, S_a, P, rng)
    ens = measure(_fixed_sensing(cfg, P, G, rng), chan, noise_power(cfg, pt["snr_db"]), rng)
    p_th, _ = thresholds(cfg, pt["snr_db"])
    out, flags = {}, []
    for name in cfg.algorithms:
        res = _run_solver(name, ens, S_a, p_th, chan.support)
        _record(out, name, res, chan)
        flags.extend(f"{name}:{f}" for f in sorted(res.flags))
    return out, flags


def trial_detection(cfg, pt, rng):
    S_a, G, P, mode = pt["S_a"], pt["G"], pt["P"], pt["mode"]
    chan = _channel(cfg, S_a, P, rng)
    phi = gaussian_sensing(P, G, cfg.M, rng, shared=(mode == "mmv"))
    ens = measure(phi, chan, noise_power(cfg, pt["snr_db"]), rng)
    p_th, _ = thresholds(cfg, pt["snr_db"])
    res = dsamp(ens, p_th)
    out = {}
    _record(out, mode, res, chan)
    return out, sorted(res.flags)


def _adaptive_window(cfg, pt, rng, G0):
    S_a, P, snr = pt["S_a"], pt["P"], pt["snr_db"]
    chan = _channel(cfg, S_a, P, rng)
    p_th, eps = thresholds(cfg, snr)
    bank = campaign_bank(cfg.seed, cfg.M, P)
    session = acquire(chan, _basis(cfg.M), noise_power(cfg, snr), G0, eps, p_th, rng, bank)
    return chan, session


def trial_adaptive(cfg, pt, rng):
    G0 = cfg.G0
    for _ in range(cfg.windows):
        chan, session = _adaptive_window(cfg, pt, rng, G0)
        if cfg.warm_start:
            G0 = session.suggested_G0
    res = session.result
    m = metrics(res.estimates, chan.gains, res.support.indices, chan.support.indices)
    out = {
        "adaptive|G_final": float(session.G_final),
        "adaptive|S_hat": float(session.sparsity_level),
        "adaptive|mse": m.mse,
        "adaptive|nmse": m.nmse,
        "adaptive|detected": float(m.support_detected),
        "adaptive|reduction": 1.0 - session.G_final / cfg.M,
        "adaptive|cap_reached": float(session.cap_reached),
    }
    return out, sorted(session.flags | res.flags)


def trial_mse_vs_g(cfg, pt, rng):
    if pt["G"] is None:
        return trial_adaptive(cfg, pt, rng)
    S_a, G, P = pt["S_a"], pt["G"], pt["P"]
    chan = _channel(cfg, S_a, P, rng)
    ens = measure(_fixed_sensing(cfg, P, G, rng), chan, noise_power(cfg, pt["snr_db"]), rng)
    p_th, _ = thresholds(cfg, pt["snr_db"])
    out, flags = {}, []
    for name in cfg.algorithms:
        res = _run_solver(name, ens, S_a, p_th, chan.support)
        _record(out, name, res, chan)
        flags.extend(f"{name}:{f}" for f in sorted(res.flags))
    return out, flags


def _two_stage(cfg, pt, rng, chan_first=None):
    S_a, P, snr = pt["S_a"], pt["P"], pt["snr_db"]
    p_th, eps = thresholds(cfg, snr)
    s2 = noise_power(cfg, snr)
    basis = _basis(cfg.M)
    bank = campaign_bank(cfg.seed, cfg.M, P)
    G0 = cfg.G0
    for _ in range(cfg.windows):
        chan = chan_first if chan_first is not None else _channel(cfg, S_a, P, rng)
        evolution = evolve_blocks(chan, cfg.Q, rng)
        outcome = run_two_stage(evolution, basis, s2, G0, eps, p_th, rng, sensing_bank=bank)
        if cfg.warm_start:
            G0 = outcome.session.suggested_G0
    return evolution, outcome, s2


def _two_stage_values(cfg, evolution, outcome, s2):
    session = outcome.session
    first = evolution.blocks[0]
    # oracle LS is undefined when the loop stopped below the true sparsity
    oracle_mse = (
        block_mse(oracle_ls(session.ensemble, first.support).estimates, first.gains)
        if session.ensemble.G >= first.S_a
        else float("nan")
    )
    basis = _basis(cfg.M)
    pilot = tracking_pilot(first.support, basis, None, first.S_a)
    crlb_trk = crlb_on_support(assemble_sensing_matrix(pilot, basis), first.support, s2)
    Q = evolution.Q
    trk = outcome.tracking_mse
    overall = outcome.acquisition_mse if Q < 2 else (outcome.acquisition_mse + (Q - 1) * trk) / Q
    g_trk = float(session.sparsity_level)
    return {
        "acquisition|mse": outcome.acquisition_mse,
        "acquisition|G": float(session.G_final),
        "acquisition|G_final": float(session.G_final),
        "acquisition|S_hat": float(session.sparsity_level),
        "acquisition|detected": float(session.support == first.support),
        "acquisition|oracle_ls_mse": oracle_mse,
        "tracking|mse": trk,
        "tracking|G": g_trk if Q >= 2 else float("nan"),
        "tracking|crlb": crlb_trk,
        "two_stage|mse": overall,
        "two_stage|G_mean": (session.G_final + (Q - 1) * g_trk) / Q,
    }


def trial_tracking(cfg, pt, rng):
    evolution, outcome, s2 = _two_stage(cfg, pt, rng)
    return _two_stage_values(cfg, evolution, outcome, s2), sorted(outcome.flags)


def trial_mse_vs_snr(cfg, pt, rng):
    S_a, G, P, snr = pt["S_a"], pt["G"], pt["P"], pt["snr_db"]
    chan = _channel(cfg, S_a, P, rng)
    ens = measure(_fixed_sensing(cfg, P, G, rng), chan, noise_power(cfg, snr), rng)
    p_th, _ = thresholds(cfg, snr)
    out, flags = {}, []
    for name in cfg.algorithms:
        res = _run_solver(name, ens, S_a, p_th, chan.support)
        _record(out, name, res, chan)
        flags.extend(f"{name}:{f}" for f in sorted(res.flags))
    evolution, outcome, s2 = _two_stage(cfg, pt, rng, chan_first=chan)
    out.update(_two_stage_values(cfg, evolution, outcome, s2))
    return out, flags + sorted(outcome.flags)
