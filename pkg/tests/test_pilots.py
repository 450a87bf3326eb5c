import numpy as np
import pytest

from csikit.channel import SupportSet, build_ula_basis, draw_channel_ensemble
from csikit.errors import DimensionError, InvalidParameterError
from csikit.pilots import (
    append_measurement,
    assemble_sensing_matrix,
    complex_noise,
    gaussian_sensing,
    measure,
    noise_power_for_snr,
    pilot_subcarrier_placement,
    random_phase_pilot,
    random_phase_pilot_bank,
    simulate_feedback,
    tracking_pilot,
)


def test_random_phase_unit_modulus_zero_mean(rng):
    S = random_phase_pilot(100, 1000, rng).entries
    np.testing.assert_allclose(np.abs(S), 1.0)
    assert abs(S.mean()) < 0.01
    assert abs(random_phase_pilot(1, 1, rng).entries[0, 0]) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        random_phase_pilot(0, 4, rng)


def test_random_phase_sensing_is_unit_variance(rng):
    basis = build_ula_basis(32)
    phi = assemble_sensing_matrix(random_phase_pilot_bank(200, 8, 32, rng), basis)
    assert np.mean(np.abs(phi) ** 2) == pytest.approx(1.0, rel=0.02)
    assert abs(phi.mean()) < 0.01


def test_dft_rows_give_scaled_orthonormal_rows():
    M = 8
    basis = build_ula_basis(M)
    S = np.sqrt(M) * basis.matrix[:4]
    phi = assemble_sensing_matrix(S, basis)
    np.testing.assert_allclose(phi @ phi.conj().T, M * np.eye(4), atol=1e-10)


def test_zero_pilot_row_gives_zero_sensing_row(rng):
    basis = build_ula_basis(8)
    S = random_phase_pilot(3, 8, rng).entries
    S[1] = 0
    assert np.all(assemble_sensing_matrix(S, basis)[1] == 0)
    with pytest.raises(DimensionError):
        assemble_sensing_matrix(np.ones((2, 7)), basis)


def test_tracking_pilot_restricted_unitary():
    basis = build_ula_basis(16)
    sup = SupportSet((2, 3, 9))
    phi = assemble_sensing_matrix(tracking_pilot(sup, basis, None, 3), basis)
    restricted = phi[:, sup.as_array()]
    np.testing.assert_allclose(restricted.conj().T @ restricted, 3 * np.eye(3), atol=1e-10)
    one = assemble_sensing_matrix(tracking_pilot(SupportSet((4,)), basis, np.eye(1), 1), basis)
    assert abs(one[0, 4]) == pytest.approx(1.0)


def test_tracking_pilot_errors():
    basis = build_ula_basis(8)
    sup = SupportSet((1, 2))
    with pytest.raises(InvalidParameterError):
        tracking_pilot(sup, basis, None, 3)
    with pytest.raises(InvalidParameterError):
        tracking_pilot(sup, basis, np.array([[1, 1], [0, 1]]), 2)


def test_feedback_noiseless_and_noise_energy(rng):
    phi = rng.standard_normal((6, 10)) + 0j
    h = rng.standard_normal(10) + 0j
    np.testing.assert_allclose(simulate_feedback(phi, h, 0.0, rng), phi @ h)
    r = np.stack([simulate_feedback(phi, np.zeros(10), 1.0, rng) for _ in range(10_000)])
    assert np.mean(np.sum(np.abs(r) ** 2, axis=1)) == pytest.approx(6, rel=0.05)
    with pytest.raises(InvalidParameterError):
        complex_noise(3, -1.0, rng)
    with pytest.raises(DimensionError):
        simulate_feedback(phi, np.zeros(9), 0.0, rng)


def test_noise_power_for_snr():
    assert noise_power_for_snr(8, 1.0) == pytest.approx(8.0)
    assert noise_power_for_snr(8, 100.0) == pytest.approx(0.08)
    assert noise_power_for_snr(8, 1e12) < 1e-10
    with pytest.raises(InvalidParameterError):
        noise_power_for_snr(8, 0.0)


def test_empirical_snr(rng):
    # unit-variance sensing and unit-variance gains: E||phi h||^2 / E||v||^2 matches the target
    S_a, G, snr = 8, 12, 100.0
    ch = draw_channel_ensemble(64, 4000, SupportSet(tuple(range(S_a))), rng)
    phi = gaussian_sensing(4000, G, 64, rng)
    s2 = noise_power_for_snr(S_a, snr)
    signal = np.einsum("pgm,mp->pg", phi, ch.gains)
    noise = complex_noise(signal.shape, s2, rng)
    ratio = np.mean(np.sum(np.abs(signal) ** 2, 1)) / np.mean(np.sum(np.abs(noise) ** 2, 1))
    assert ratio == pytest.approx(snr, rel=0.05)


def test_append_keeps_old_rows(rng):
    basis = build_ula_basis(16)
    ch = draw_channel_ensemble(16, 3, SupportSet((1, 5)), rng)
    bank = random_phase_pilot_bank(3, 9, 16, rng)
    ens = measure(assemble_sensing_matrix(bank[:, :8], basis), ch, 0.1, rng, pilots=bank[:, :8], basis=basis)
    grown = append_measurement(ens, bank[:, 8], ch, rng)
    assert grown.G == 9
    np.testing.assert_array_equal(grown.r[:, :8], ens.r)
    np.testing.assert_array_equal(grown.phi[:, :8], ens.phi)
    with pytest.raises(DimensionError):
        append_measurement(ens, bank[:2, 8], ch, rng)


def test_gaussian_shared(rng):
    phi = gaussian_sensing(4, 3, 5, rng, shared=True)
    assert all(np.array_equal(phi[0], phi[p]) for p in range(4))


def test_subcarrier_placement():
    np.testing.assert_array_equal(pilot_subcarrier_placement(2048, 64), np.arange(64) * 32)
    np.testing.assert_array_equal(pilot_subcarrier_placement(8, 8), np.arange(8))
    np.testing.assert_array_equal(pilot_subcarrier_placement(8, 2), [0, 4])
    with pytest.raises(InvalidParameterError):
        pilot_subcarrier_placement(8, 9)
