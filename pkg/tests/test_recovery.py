import numpy as np
import pytest

from csikit.channel import SupportSet, draw_channel_ensemble, draw_support
from csikit.errors import BudgetExceededError, InvalidParameterError
from csikit.pilots import MeasurementEnsemble, gaussian_sensing, measure
from csikit.recovery import (
    NO_COMPLETED_STAGE,
    QUIT_PTH,
    brute_force_l0,
    count_multiplications,
    dsamp,
    joint_omp,
    ls_cost,
    ls_on_support,
    omp,
    oracle_ls,
    samp,
    sp,
    closed_form_cost,
)


def planted(rng, M=64, P=16, S_a=4, G=14, noise=0.0, clusters=2):
    ch = draw_channel_ensemble(M, P, draw_support(M, S_a, clusters, rng), rng)
    return ch, measure(gaussian_sensing(P, G, M, rng), ch, noise, rng)


def test_dsamp_zero_feedback_halts_in_stage_one():
    ens = MeasurementEnsemble(phi=np.ones((3, 5, 10), complex), r=np.zeros((3, 5), complex), noise_power=0.0)
    res = dsamp(ens, 1e-6)
    assert np.all(res.estimates == 0)
    assert res.trace[-1].stage == 1 and res.trace[-1].event == QUIT_PTH
    assert NO_COMPLETED_STAGE in res.flags


@pytest.mark.parametrize("solver", ["dsamp", "omp", "sp", "joint_omp", "samp"])
def test_noiseless_exact_recovery(rng, solver):
    # single-vector solvers get the measurements they need without joint support
    ch, ens = planted(rng, G=14 if solver in ("dsamp", "joint_omp") else 30)
    if solver == "dsamp":
        res = dsamp(ens, 1e-6)
    elif solver == "samp":
        res = samp(ens, 1e-12)
    else:
        res = {"omp": omp, "sp": sp, "joint_omp": joint_omp}[solver](ens, ch.S_a)
    assert res.support == ch.support
    np.testing.assert_allclose(res.estimates, ch.gains, atol=1e-9)


def test_dsamp_noisy_near_oracle(rng):
    ch, ens = planted(rng, M=128, P=64, S_a=8, G=30, noise=8 / 100 / 8)
    res = dsamp(ens, 0.01)
    assert res.support == ch.support
    ref = oracle_ls(ens, ch.support)
    np.testing.assert_allclose(res.estimates, ref.estimates, atol=1e-10)


def test_samp_zero_channel(rng):
    ens = MeasurementEnsemble(phi=gaussian_sensing(4, 6, 12, rng), r=np.zeros((4, 6), complex), noise_power=0.0)
    assert np.all(samp(ens, 0.5).estimates == 0)


def test_fixed_sparsity_errors(rng):
    _, ens = planted(rng, G=5, S_a=4)
    for fn in (omp, sp, joint_omp):
        with pytest.raises(InvalidParameterError):
            fn(ens, 6)
    with pytest.raises(InvalidParameterError):
        dsamp(ens, 0.0)


def test_oracle_ls_exact_and_errors(rng):
    ch, ens = planted(rng)
    res = oracle_ls(ens, ch.support)
    assert np.sum(np.abs(res.estimates - ch.gains) ** 2) < 1e-20
    with pytest.raises(InvalidParameterError):
        oracle_ls(ens, SupportSet(tuple(range(15))))


def test_ls_on_support_cases(rng):
    ch, ens = planted(rng)
    np.testing.assert_array_equal(ls_on_support(ens, ch.support).estimates, oracle_ls(ens, ch.support).estimates)
    superset = SupportSet(tuple(sorted(set(ch.support.indices) | {next(i for i in range(64) if i not in ch.support)})))
    np.testing.assert_allclose(ls_on_support(ens, superset).estimates, ch.gains, atol=1e-10)


def test_ls_disjoint_support_orthogonal_columns(rng):
    # identity sensing: columns are orthogonal, so a disjoint support explains nothing
    M, P = 8, 3
    ch = draw_channel_ensemble(M, P, SupportSet((0, 1)), rng)
    ens = measure(np.broadcast_to(np.eye(M, dtype=complex), (P, M, M)), ch, 0.0, rng)
    res = ls_on_support(ens, SupportSet((4, 5)))
    energy = float(np.sum(np.abs(ens.r) ** 2))
    assert res.residual_energy(ens) == pytest.approx(energy) and energy > 0


def test_brute_force_basics(rng):
    ch, ens = planted(rng, M=10, P=3, S_a=2, G=5, clusters=1)
    zero = brute_force_l0(ens, 0)
    assert np.all(zero.estimates == 0)
    assert zero.info["residual"] == pytest.approx(float(np.sum(np.abs(ens.r) ** 2)))
    assert brute_force_l0(ens, 3).support == ch.support
    with pytest.raises(BudgetExceededError):
        brute_force_l0(ens, 3, budget=10)


def test_closed_form_costs():
    assert closed_form_cost("dsamp", 30, 128, 8, 1) == 7984
    assert closed_form_cost("omp", 30, 128, 8, 1) == 7869
    assert ls_cost(30, 1) == 61
    with pytest.raises(InvalidParameterError):
        closed_form_cost("dsamp", 30, 128, 8, 0)
    with pytest.raises(InvalidParameterError):
        closed_form_cost("cosamp", 30, 128, 8, 1)


def test_omp_instrumentation_matches_table(rng):
    ch, ens = planted(rng, G=20)
    res = omp(ens, ch.S_a)
    formula = count_multiplications("omp", 20, 64, ch.S_a, res.trace)
    np.testing.assert_array_equal(formula, [rec.mults for rec in res.trace])


def test_deterministic(rng):
    _, ens = planted(rng, noise=0.01)
    a, b = dsamp(ens, 0.02), dsamp(ens, 0.02)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    assert a.trace == b.trace and a.support == b.support


def test_samp_rows_independent(rng):
    # lockstep batching must give exactly what each subcarrier gets alone
    import dataclasses

    _, ens = planted(rng, M=48, P=6, S_a=6, G=16, noise=0.01)
    full = samp(ens, 0.01)
    for p in range(ens.P):
        one = samp(dataclasses.replace(ens, phi=ens.phi[p : p + 1], r=ens.r[p : p + 1]), 0.01)
        assert one.column_supports[0] == full.column_supports[p]
        np.testing.assert_allclose(one.estimates[:, 0], full.estimates[:, p], atol=1e-12)
