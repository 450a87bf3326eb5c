"""Downlink multi-user ZF precoding with Gray-mapped 16-QAM.

Every CSI source sees the same channels, data symbols and receiver noise, so
BER differences come from the channel estimates alone.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import binomtest

from ..acquisition import acquire, track
from ..channel import ChannelEvolution, evolve_blocks
from ..pilots import complex_noise, db_to_linear
from ..recovery import oracle_ls
from .experiments import _basis, _channel, campaign_bank, noise_power, thresholds

SOURCES = ("proposed", "oracle", "perfect")
BITS_PER_SYMBOL = 4
QAM_SCALE = np.sqrt(10.0)
COND_LIMIT = 1e10
MAX_RESAMPLES = 20


def qam16_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray 16-QAM with unit average energy; ``bits`` has a trailing axis of 4."""
    bits = np.asarray(bits, dtype=np.int8)
    # per axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
    i = (2 * bits[..., 0] - 1) * (3 - 2 * bits[..., 1])
    q = (2 * bits[..., 2] - 1) * (3 - 2 * bits[..., 3])
    return (i + 1j * q) / QAM_SCALE


def qam16_demodulate(symbols: np.ndarray) -> np.ndarray:
    """Hard-decision inverse of :func:`qam16_modulate`."""
    x = np.asarray(symbols) * QAM_SCALE
    out = np.empty(x.shape + (4,), dtype=np.int8)
    for k, axis in ((0, x.real), (2, x.imag)):
        out[..., k] = axis > 0
        out[..., k + 1] = np.abs(axis) < 2
    return out


def zf_precoder(H_hat: np.ndarray):
    """Unit-power ZF precoders for a ``(..., K, M)`` stack.

    Returns ``(W, scale, cond)`` where ``W`` has unit Frobenius norm and
    ``H_hat @ W = I / scale``.
    """
    Hh = np.conj(np.swapaxes(H_hat, -1, -2))
    gram = H_hat @ Hh
    cond = np.linalg.cond(gram)
    W = Hh @ np.linalg.inv(gram)
    scale = np.linalg.norm(W, axis=(-2, -1))
    return W / scale[..., None, None], scale, cond


def _spatial(basis, estimates):
    # (M, P) angular estimates -> (P, M) antenna-domain rows
    return (basis.to_spatial @ estimates).T


def _estimates(cfg, pt, rng, basis, bank, s2, p_th, eps):
    """Per-user channel estimates for every block and CSI source, spatial domain."""
    K, Q = cfg.K, cfg.Q
    P = pt["P"]
    shape = (Q, P, K, cfg.M)
    est = {s: np.zeros(shape, dtype=complex) for s in SOURCES}
    G_acq, S_hat, detected = [], [], []
    for k in range(K):
        chan = _channel(cfg, pt["S_a"], P, rng)
        evolution = evolve_blocks(chan, Q, rng)
        session = acquire(chan, basis, s2, cfg.G0, eps, p_th, rng, bank)
        track_seed = int(rng.integers(2**63 - 1))
        true = chan.support
        # identical tracking noise for both sources keeps the comparison paired
        oracle_trk = track(evolution, session, basis, s2, None, np.random.default_rng(track_seed), support=true)
        if session.ensemble.G >= true.S_a:
            oracle_first = oracle_ls(session.ensemble, true).estimates
        else:
            # oracle LS is undefined below the true sparsity; use the bound-attaining estimate
            first_block = ChannelEvolution((chan, chan))
            oracle_first = track(first_block, session, basis, s2, None, rng, support=true).results[0].estimates
        blocks = {"proposed": [session.result.estimates], "oracle": [oracle_first]}
        if Q > 1:
            blocks["oracle"] += [r.estimates for r in oracle_trk.results]
            if session.sparsity_level > 0:
                prop_trk = track(evolution, session, basis, s2, None, np.random.default_rng(track_seed))
                blocks["proposed"] += [r.estimates for r in prop_trk.results]
            else:
                blocks["proposed"] += [np.zeros_like(oracle_first)] * (Q - 1)
        for q in range(Q):
            est["perfect"][q, :, k] = _spatial(basis, evolution.blocks[q].gains)
            est["proposed"][q, :, k] = _spatial(basis, blocks["proposed"][q])
            est["oracle"][q, :, k] = _spatial(basis, blocks["oracle"][q])
        G_acq.append(session.G_final)
        S_hat.append(session.sparsity_level)
        detected.append(session.support == true)
    return est, float(np.mean(G_acq)), float(np.mean(S_hat)), float(np.mean(detected))


def trial_ber(cfg, pt, rng):
    snr = pt["snr_db"]
    s2 = noise_power(cfg, snr)
    n0 = 1.0 / db_to_linear(snr)
    p_th, eps = thresholds(cfg, snr)
    basis = _basis(cfg.M)
    bank = campaign_bank(cfg.seed, cfg.M, pt["P"])

    resamples = 0
    while True:
        est, g_acq, s_hat, det = _estimates(cfg, pt, rng, basis, bank, s2, p_th, eps)
        precoders = {s: zf_precoder(est[s]) for s in SOURCES}
        if all(np.all(c[2] < COND_LIMIT) for c in precoders.values()) or resamples >= MAX_RESAMPLES:
            break
        resamples += 1

    H = est["perfect"]
    Q, P, K, _ = H.shape
    bits = rng.integers(0, 2, size=(Q, P, K, BITS_PER_SYMBOL), dtype=np.int8)
    s = qam16_modulate(bits)
    noise = complex_noise((Q, P, K), n0, rng)
    out = {
        "csi|G_acquisition": g_acq,
        "csi|S_hat": s_hat,
        "csi|detected": det,
        "csi|resamples": float(resamples),
    }
    for src in SOURCES:
        W, scale, _ = precoders[src]
        y = (H @ (W @ s[..., None]))[..., 0] + noise
        errors = int(np.count_nonzero(qam16_demodulate(y * scale[..., None]) != bits))
        out[f"{src}|errors"] = float(errors)
        out[f"{src}|bits"] = float(bits.size)
    flags = ["resampled"] if resamples else []
    return out, flags


def ber_interval(errors: int, bits: int, confidence: float = 0.95) -> tuple:
    """Point estimate and Wilson interval for a bit error rate."""
    if bits <= 0:
        return float("nan"), float("nan"), float("nan")
    ci = binomtest(int(errors), int(bits)).proportion_ci(confidence_level=confidence, method="wilson")
    return errors / bits, float(ci.low), float(ci.high)
