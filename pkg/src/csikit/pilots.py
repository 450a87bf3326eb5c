"""Non-orthogonal pilots, sensing matrices and simulated feedback.

Measurement stacks use the layout ``phi[p, g, m]`` and ``r[p, g]`` so that all
P pilot subcarriers can be processed with batched linear algebra.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .channel import SparseAngularChannel, SteeringBasis, SupportSet
from .errors import DimensionError, InvalidParameterError

ACQUISITION = "acquisition"
TRACKING = "tracking"

PINV_RCOND = 1e-12


@dataclass(frozen=True)
class PilotMatrix:
    entries: np.ndarray
    variant: str = ACQUISITION

    @property
    def G(self) -> int:
        return self.entries.shape[0]

    @property
    def M(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class MeasurementEnsemble:
    """Per-subcarrier sensing matrices and feedback vectors.

    ``pilots`` is ``None`` when the sensing matrices were drawn directly
    (e.g. i.i.d. Gaussian benchmarks) rather than built from a pilot and basis.
    """

    phi: np.ndarray
    r: np.ndarray
    noise_power: float
    pilots: np.ndarray | None = None
    basis: SteeringBasis | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.phi.ndim != 3 or self.r.ndim != 2:
            raise DimensionError("phi must be (P, G, M) and r must be (P, G)")
        if self.phi.shape[:2] != self.r.shape:
            raise DimensionError(f"phi {self.phi.shape} and r {self.r.shape} disagree on (P, G)")
        if self.noise_power < 0:
            raise InvalidParameterError("noise power must be non-negative")

    @property
    def P(self) -> int:
        return self.phi.shape[0]

    @property
    def G(self) -> int:
        return self.phi.shape[1]

    @property
    def M(self) -> int:
        return self.phi.shape[2]

    def truncated(self, G: int) -> MeasurementEnsemble:
        """The ensemble restricted to its first G time slots."""
        if not 0 <= G <= self.G:
            raise InvalidParameterError(f"cannot truncate G={self.G} ensemble to {G}")
        pilots = None if self.pilots is None else self.pilots[:, :G]
        return replace(self, phi=self.phi[:, :G], r=self.r[:, :G], pilots=pilots)


def random_phase_pilot(G: int, M: int, rng: np.random.Generator) -> PilotMatrix:
    """Unit-modulus pilot with i.i.d. uniform phases on ``[0, 2*pi)``."""
    if G < 1 or M < 1:
        raise InvalidParameterError(f"pilot dimensions must be positive, got G={G}, M={M}")
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(G, M))
    return PilotMatrix(np.exp(1j * theta), ACQUISITION)


def random_phase_pilot_bank(P: int, G: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """One independent random-phase pilot per subcarrier, stacked as ``(P, G, M)``."""
    if P < 1:
        raise InvalidParameterError(f"P must be >= 1, got {P}")
    return np.stack([random_phase_pilot(G, M, rng).entries for _ in range(P)])


def gaussian_sensing(P: int, G: int, M: int, rng: np.random.Generator, shared: bool = False) -> np.ndarray:
    """i.i.d. ``CN(0, 1)`` sensing matrices ``(P, G, M)``; ``shared`` reuses one for every subcarrier."""
    if min(P, G, M) < 1:
        raise InvalidParameterError(f"sensing dimensions must be positive, got P={P}, G={G}, M={M}")
    n = 1 if shared else P
    phi = complex_noise((n, G, M), 1.0, rng)
    return np.broadcast_to(phi, (P, G, M)) if shared else phi


def assemble_sensing_matrix(pilot, basis: SteeringBasis) -> np.ndarray:
    """``Phi = S (A_B^*)^T``.  Accepts a PilotMatrix or a raw ``(..., G, M)`` array."""
    S = pilot.entries if isinstance(pilot, PilotMatrix) else np.asarray(pilot)
    if S.shape[-1] != basis.M:
        raise DimensionError(f"pilot has {S.shape[-1]} antennas, basis has {basis.M}")
    return S @ basis.to_spatial


def default_tracking_unitary(S_a: int) -> np.ndarray:
    return scipy.linalg.dft(S_a, scale="sqrtn")


def tracking_pilot(support: SupportSet, basis: SteeringBasis, U: np.ndarray | None, G: int) -> PilotMatrix:
    """Pilot whose sensing matrix restricted to ``support`` equals ``sqrt(G) U``."""
    S_a = support.S_a
    if S_a < 1:
        raise InvalidParameterError("tracking pilot needs a non-empty support")
    if G != S_a:
        raise InvalidParameterError(f"tracking overhead must equal the support size: G={G}, S_a={S_a}")
    if U is None:
        U = default_tracking_unitary(S_a)
    U = np.asarray(U, dtype=complex)
    if U.shape != (S_a, S_a):
        raise DimensionError(f"U must be {S_a}x{S_a}, got {U.shape}")
    if np.max(np.abs(U.conj().T @ U - np.eye(S_a))) > 1e-10:
        raise InvalidParameterError("U is not unitary to within 1e-10")
    cols = basis.to_spatial[:, support.as_array()]
    S = np.sqrt(G) * U @ np.linalg.pinv(cols, rcond=PINV_RCOND)
    return PilotMatrix(S, TRACKING)


def complex_noise(shape, noise_power: float, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. ``CN(0, noise_power)`` samples."""
    if noise_power < 0:
        raise InvalidParameterError(f"noise power must be non-negative, got {noise_power}")
    scale = np.sqrt(noise_power / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_feedback(phi: np.ndarray, h_bar: np.ndarray, noise_power: float, rng: np.random.Generator) -> np.ndarray:
    """``r = Phi h_bar + v`` with ``v ~ CN(0, noise_power I)``."""
    phi = np.asarray(phi)
    h_bar = np.asarray(h_bar)
    if phi.shape[-1] != h_bar.shape[0]:
        raise DimensionError(f"Phi has {phi.shape[-1]} columns, h_bar has length {h_bar.shape[0]}")
    clean = phi @ h_bar
    return clean + complex_noise(clean.shape, noise_power, rng)


def noise_power_for_snr(S_a: int, snr_linear: float, gain_variance: float = 1.0) -> float:
    """Effective noise power giving ``E||Phi h||^2 / E||v||^2 = snr_linear``.

    With unit-variance sensing entries ``E||Phi h||^2 = G * S_a * gain_variance``.
    """
    if not snr_linear > 0:
        raise InvalidParameterError(f"SNR must be positive, got {snr_linear}")
    return S_a * gain_variance / snr_linear


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def measure(
    phi: np.ndarray,
    channel: SparseAngularChannel,
    noise_power: float,
    rng: np.random.Generator,
    pilots: np.ndarray | None = None,
    basis: SteeringBasis | None = None,
) -> MeasurementEnsemble:
    """Simulate feedback for every subcarrier through the stacked sensing matrices."""
    phi = np.asarray(phi)
    if phi.shape[0] != channel.P or phi.shape[2] != channel.M:
        raise DimensionError(f"phi {phi.shape} does not match channel (P={channel.P}, M={channel.M})")
    clean = np.einsum("pgm,mp->pg", phi, channel.gains)
    r = clean + complex_noise(clean.shape, noise_power, rng)
    return MeasurementEnsemble(phi=phi, r=r, noise_power=noise_power, pilots=pilots, basis=basis)


def append_measurement(
    ensemble: MeasurementEnsemble,
    new_pilot_rows: np.ndarray,
    channel: SparseAngularChannel,
    rng: np.random.Generator,
    basis: SteeringBasis | None = None,
) -> MeasurementEnsemble:
    """Grow every subcarrier's measurement by one time slot.

    ``new_pilot_rows`` is ``(P, M)``: the pilot each subcarrier transmits in the
    new slot.  Existing rows are carried over unchanged.
    """
    basis = basis or ensemble.basis
    if basis is None:
        raise InvalidParameterError("a steering basis is required to turn pilot rows into sensing rows")
    rows = np.asarray(new_pilot_rows)
    if rows.shape != (ensemble.P, ensemble.M):
        raise DimensionError(f"expected pilot rows of shape {(ensemble.P, ensemble.M)}, got {rows.shape}")
    phi_row = rows @ basis.to_spatial
    return append_sensing_rows(ensemble, phi_row, channel, rng, pilot_rows=rows, basis=basis)


def append_sensing_rows(
    ensemble: MeasurementEnsemble,
    phi_rows: np.ndarray,
    channel: SparseAngularChannel,
    rng: np.random.Generator,
    pilot_rows: np.ndarray | None = None,
    basis: SteeringBasis | None = None,
) -> MeasurementEnsemble:
    phi_rows = np.asarray(phi_rows)
    if phi_rows.shape != (ensemble.P, ensemble.M):
        raise DimensionError(f"expected sensing rows of shape {(ensemble.P, ensemble.M)}, got {phi_rows.shape}")
    value = np.einsum("pm,mp->p", phi_rows, channel.gains)
    value = value + complex_noise(value.shape, ensemble.noise_power, rng)
    pilots = ensemble.pilots
    if pilots is not None and pilot_rows is not None:
        pilots = np.concatenate([pilots, pilot_rows[:, None, :]], axis=1)
    else:
        pilots = None
    return MeasurementEnsemble(
        phi=np.concatenate([ensemble.phi, phi_rows[:, None, :]], axis=1),
        r=np.concatenate([ensemble.r, value[:, None]], axis=1),
        noise_power=ensemble.noise_power,
        pilots=pilots,
        basis=basis or ensemble.basis,
    )


def empty_ensemble(P: int, M: int, noise_power: float, basis: SteeringBasis | None = None) -> MeasurementEnsemble:
    return MeasurementEnsemble(
        phi=np.zeros((P, 0, M), dtype=complex),
        r=np.zeros((P, 0), dtype=complex),
        noise_power=noise_power,
        pilots=np.zeros((P, 0, M), dtype=complex),
        basis=basis,
    )


def pilot_subcarrier_placement(N: int, P: int) -> np.ndarray:
    """Equi-spaced pilot subcarrier indices ``0, s, 2s, ...`` with ``s = N // P``.

    When P does not divide N the trailing ``N - P*s`` subcarriers carry no pilot.
    """
    if N < 1 or P < 1:
        raise InvalidParameterError(f"N and P must be positive, got N={N}, P={P}")
    if P > N:
        raise InvalidParameterError(f"cannot place P={P} pilots on N={N} subcarriers")
    return np.arange(P) * (N // P)
