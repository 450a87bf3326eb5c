"""Virtual angular-domain channel model for a ULA massive-MIMO base station.

Channels are represented per pilot subcarrier as length-M angular vectors that
share one support set across subcarriers (and across time blocks).  Gains are
stored as an ``(M, P)`` array, one column per pilot subcarrier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, InvalidParameterError


@dataclass(frozen=True)
class SteeringBasis:
    """Unitary virtual-angular transform ``A_B`` (the DFT matrix for a ULA)."""

    M: int
    matrix: np.ndarray

    @property
    def angular_resolution_deg(self) -> float:
        # virtual-angle sampling interval of a half-wavelength ULA
        return 180.0 / self.M

    @property
    def to_spatial(self) -> np.ndarray:
        """``(A_B^*)^T``, mapping angular coefficients to antenna-domain gains."""
        return self.matrix.conj().T


@dataclass(frozen=True)
class SupportSet:
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidParameterError(f"support indices must be strictly increasing: {idx}")
        if idx and idx[0] < 0:
            raise InvalidParameterError("support indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    @property
    def S_a(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    def run_count(self, M: int) -> int:
        """Number of maximal circular runs of consecutive indices (0 for empty)."""
        if not self.indices:
            return 0
        if len(self.indices) == M:
            return 1
        present = np.zeros(M, dtype=bool)
        present[list(self.indices)] = True
        # a run starts wherever an index is present and its circular predecessor is not
        return int(np.count_nonzero(present & ~np.roll(present, 1)))

    def __contains__(self, item) -> bool:
        return int(item) in self.indices

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class SparseAngularChannel:
    M: int
    P: int
    support: SupportSet
    gains: np.ndarray
    gain_variance: float = 1.0

    @property
    def S_a(self) -> int:
        return self.support.S_a


@dataclass(frozen=True)
class ChannelEvolution:
    """Q consecutive time blocks sharing one angular support."""

    blocks: tuple

    @property
    def Q(self) -> int:
        return len(self.blocks)

    @property
    def support(self) -> SupportSet:
        return self.blocks[0].support


def build_ula_basis(M: int) -> SteeringBasis:
    """Unitary M-point DFT basis with entries ``exp(-j2*pi*m*n/M) / sqrt(M)``."""
    if int(M) != M or M < 1:
        raise InvalidParameterError(f"antenna count must be a positive integer, got {M!r}")
    M = int(M)
    return SteeringBasis(M=M, matrix=scipy.linalg.dft(M, scale="sqrtn"))


def draw_support(M: int, S_a: int, cluster_count: int, rng: np.random.Generator) -> SupportSet:
    """Draw ``S_a`` angular indices grouped into ``cluster_count`` circular runs.

    Run lengths differ by at most one.  The free positions are split into
    inter-cluster gaps by a uniform composition and the whole pattern is
    rotated by a uniform offset, so runs never overlap but may abut.
    """
    if M < 1 or not 1 <= S_a <= M:
        raise InvalidParameterError(f"need 1 <= S_a <= M, got S_a={S_a}, M={M}")
    if not 1 <= cluster_count <= S_a:
        raise InvalidParameterError(
            f"need 1 <= cluster_count <= S_a, got cluster_count={cluster_count}, S_a={S_a}"
        )
    base, extra = divmod(S_a, cluster_count)
    lengths = [base + 1] * extra + [base] * (cluster_count - extra)
    rng.shuffle(lengths)

    free = M - S_a
    bars = np.sort(rng.choice(free + cluster_count - 1, size=cluster_count - 1, replace=False))
    edges = np.concatenate(([-1], bars, [free + cluster_count - 1]))
    gaps = np.diff(edges) - 1

    pos = int(rng.integers(M))
    idx = []
    for length, gap in zip(lengths, gaps):
        idx.extend((pos + k) % M for k in range(length))
        pos += length + int(gap)
    return SupportSet(tuple(sorted(idx)))


def draw_channel_ensemble(
    M: int,
    P: int,
    support: SupportSet,
    rng: np.random.Generator,
    gain_variance: float = 1.0,
) -> SparseAngularChannel:
    """Draw i.i.d. ``CN(0, gain_variance)`` gains on the support for P subcarriers.

    ``gain_variance=1/S_a`` gives unit expected channel energy per subcarrier.
    """
    if P < 1:
        raise InvalidParameterError(f"P must be >= 1, got {P}")
    if support.S_a and support.indices[-1] >= M:
        raise InvalidParameterError(f"support index {support.indices[-1]} out of range for M={M}")
    if gain_variance <= 0:
        raise InvalidParameterError("gain_variance must be positive")
    gains = np.zeros((M, P), dtype=complex)
    rows = support.as_array()
    scale = np.sqrt(gain_variance / 2.0)
    gains[rows] = scale * (rng.standard_normal((rows.size, P)) + 1j * rng.standard_normal((rows.size, P)))
    return SparseAngularChannel(M=M, P=P, support=support, gains=gains, gain_variance=float(gain_variance))


def evolve_blocks(channel: SparseAngularChannel, Q: int, rng: np.random.Generator) -> ChannelEvolution:
    """Block 1 is ``channel``; blocks 2..Q redraw gains on the same support."""
    if Q < 1:
        raise InvalidParameterError(f"Q must be >= 1, got {Q}")
    if channel.S_a < 1:
        raise InvalidParameterError("cannot evolve a channel with empty support")
    blocks = [channel]
    for _ in range(Q - 1):
        blocks.append(
            draw_channel_ensemble(channel.M, channel.P, channel.support, rng, channel.gain_variance)
        )
    return ChannelEvolution(tuple(blocks))


def angular_to_spatial(basis: SteeringBasis, h_bar: np.ndarray) -> np.ndarray:
    """Map angular coefficients (vector or ``(M, P)`` matrix) to antenna gains."""
    h_bar = np.asarray(h_bar)
    if h_bar.shape[0] != basis.M:
        raise DimensionError(f"expected leading dimension {basis.M}, got shape {h_bar.shape}")
    return basis.to_spatial @ h_bar


def spatial_to_angular(basis: SteeringBasis, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h)
    if h.shape[0] != basis.M:
        raise DimensionError(f"expected leading dimension {basis.M}, got shape {h.shape}")
    return basis.matrix @ h
