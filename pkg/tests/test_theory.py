import numpy as np
import pytest

from csikit.channel import SupportSet, build_ula_basis
from csikit.errors import BudgetExceededError, InvalidParameterError, RankDeficiencyError
from csikit.pilots import assemble_sensing_matrix, complex_noise, tracking_pilot
from csikit.theory import (
    DEFAULT_THRESHOLDS,
    calibrate_thresholds,
    crlb_on_support,
    default_thresholds,
    density_crossing,
    gmmv_uniqueness_margin,
    harmonic_lower_bound,
    metrics,
    minimax_threshold,
    spark_bruteforce,
)


def test_spark_examples(rng):
    A = rng.standard_normal((4, 6))
    A[:, 5] = A[:, 2]
    assert spark_bruteforce(A) == 2
    assert spark_bruteforce(rng.standard_normal((5, 10))) == 6
    assert spark_bruteforce(np.eye(3)) == 4
    Z = rng.standard_normal((3, 4))
    Z[:, 1] = 0
    assert spark_bruteforce(Z) == 1
    with pytest.raises(BudgetExceededError):
        spark_bruteforce(rng.standard_normal((10, 40)), budget=1000)


def test_gmmv_bridge_rank_equals_coefficient_rank(rng):
    D, N, L, S = 6, 12, 4, 3
    support = (1, 5, 9)
    f = np.zeros((N, L), complex)
    f[list(support)] = (rng.standard_normal(S) + 1j * rng.standard_normal(S))[:, None]
    phi = complex_noise((D, N), 1.0, rng)
    diverse = [complex_noise((D, N), 1.0, rng) for _ in range(L)]
    # the bridge maps every column back onto Phi_1 f_l, so only the coefficients add rank
    assert gmmv_uniqueness_margin([phi] * L, support, f).rank == 1
    same_f = gmmv_uniqueness_margin(diverse, support, f)
    assert same_f.rank == 1 and same_f.bridge_error < 1e-8
    f[list(support)] = rng.standard_normal((S, L)) + 1j * rng.standard_normal((S, L))
    distinct = gmmv_uniqueness_margin(diverse, support, f)
    assert distinct.rank == S
    assert distinct.margin == same_f.margin + S - 1


def test_crlb_scaled_unitary_and_bounds(rng):
    basis = build_ula_basis(16)
    sup = SupportSet((2, 7, 8, 11))
    phi = assemble_sensing_matrix(tracking_pilot(sup, basis, None, 4), basis)
    assert crlb_on_support(phi, sup, 0.3) == pytest.approx(0.3 * 4 / 4)
    assert crlb_on_support(phi, sup, 0.0) == 0.0
    g = complex_noise((10, 16), 1.0, rng)
    assert harmonic_lower_bound(g, sup, 1.0) <= crlb_on_support(g, sup, 1.0)
    with pytest.raises(RankDeficiencyError):
        crlb_on_support(g[:3], sup, 1.0)
    with pytest.raises(InvalidParameterError):
        crlb_on_support(g, sup, -1.0)


def test_crlb_matches_ls_variance(rng):
    G, S, s2 = 8, 3, 0.5
    phi = complex_noise((G, S), 1.0, rng)
    h = np.ones(S, complex)
    noise = complex_noise((20_000, G), s2, rng)
    est = np.linalg.lstsq(phi, (phi @ h)[:, None] + noise.T, rcond=None)[0]
    empirical = np.mean(np.sum(np.abs(est - h[:, None]) ** 2, axis=0))
    assert empirical == pytest.approx(crlb_on_support(phi, range(S), s2), rel=0.05)


def test_metrics(rng):
    truth = np.zeros((6, 2), complex)
    truth[[1, 4]] = 1 + 1j
    m = metrics(truth, truth)
    assert m.mse == 0 and m.support_detected
    z = metrics(np.zeros_like(truth), truth)
    assert z.nmse == pytest.approx(1.0) and not z.support_detected


def test_default_thresholds_table_and_interpolation():
    for snr, pair in DEFAULT_THRESHOLDS.items():
        assert default_thresholds(snr) == pytest.approx(pair)
    p, e = default_thresholds(17.5)
    assert p == pytest.approx(np.sqrt(0.02 * 0.01)) and e == pytest.approx(np.sqrt(0.03 * 0.009))
    assert default_thresholds(0.0) == pytest.approx(DEFAULT_THRESHOLDS[10.0])
    assert default_thresholds(50.0) == pytest.approx(DEFAULT_THRESHOLDS[30.0])


def test_density_crossing_symmetric(rng):
    a = rng.normal(0.0, 1.0, 4000)
    b = rng.normal(4.0, 1.0, 4000)
    assert density_crossing(a, b) == pytest.approx(2.0, abs=0.15)
    assert minimax_threshold(a, b) == pytest.approx(2.0, abs=0.15)
    with pytest.raises(InvalidParameterError):
        density_crossing(b, a)


def test_calibration_needs_trials(rng):
    with pytest.raises(InvalidParameterError):
        calibrate_thresholds([15.0], 32, 8, [4], [8], 999, rng)


def test_calibration_p_th_falls_with_noise(rng):
    cal = calibrate_thresholds([10.0, 20.0, 30.0], 32, 8, [4], [10], 1000, rng)
    assert cal.p_th[0] > cal.p_th[1] > cal.p_th[2] > 0
    assert [row["snr_db"] for row in cal.table()] == [10.0, 20.0, 30.0]
