"""Gray-labelled M-QAM constellations, bit mapping and max-log soft demapping.

Labels are stored as integers whose most significant bit is the first bit
consumed from the bit stream, so ``points[label]`` is the symbol for a group
of ``log2(M)`` bits read MSB first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_ORDERS = (2, 4, 16)

# per-axis Gray map for 16-QAM: 2-bit label -> amplitude level
_PAM4_LEVELS = {0b00: -3.0, 0b01: -1.0, 0b11: 1.0, 0b10: 3.0}


@dataclass(frozen=True)
class Constellation:
    """Unit-energy constellation indexed by integer label."""

    M: int
    points: np.ndarray
    bits_per_symbol: int

    @property
    def labels(self) -> list[str]:
        return [format(k, f"0{self.bits_per_symbol}b") for k in range(self.M)]

    @property
    def label_bits(self) -> np.ndarray:
        """(M, m) array, row k holds the bits of label k (MSB first)."""
        m = self.bits_per_symbol
        shifts = np.arange(m - 1, -1, -1)
        return (np.arange(self.M)[:, None] >> shifts) & 1


def make_constellation(M: int) -> Constellation:
    if M not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported modulation order M={M}, expected one of {SUPPORTED_ORDERS}")
    if M == 2:
        points = np.array([1.0 + 0j, -1.0 + 0j])
        return Constellation(M=2, points=points, bits_per_symbol=1)
    if M == 4:
        k = np.arange(4)
        b0, b1 = (k >> 1) & 1, k & 1
        points = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)
        return Constellation(M=4, points=points.astype(complex), bits_per_symbol=2)
    k = np.arange(16)
    re = np.array([_PAM4_LEVELS[(v >> 2) & 3] for v in k])
    im = np.array([_PAM4_LEVELS[v & 3] for v in k])
    points = (re + 1j * im) / np.sqrt(10.0)
    return Constellation(M=16, points=points, bits_per_symbol=4)


def bits_to_labels(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Pack groups of ``log2 M`` bits (last axis) into integer labels."""
    bits = np.asarray(bits, dtype=np.int64)
    m = c.bits_per_symbol
    if bits.shape[-1] % m:
        raise ValueError(f"bit length {bits.shape[-1]} is not a multiple of {m}")
    groups = bits.reshape(*bits.shape[:-1], -1, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    return groups @ weights


def map_bits(bits: np.ndarray, c: Constellation) -> np.ndarray:
    return c.points[bits_to_labels(bits, c)]


def demap_hard(symbols: np.ndarray, c: Constellation) -> np.ndarray:
    """Minimum-distance detection back to bits."""
    symbols = np.asarray(symbols)
    nearest = np.argmin(np.abs(symbols[..., None] - c.points) ** 2, axis=-1)
    bits = c.label_bits[nearest]
    return bits.reshape(*symbols.shape[:-1], -1)


def demap_soft(r, h, es_over_n0: float, c: Constellation) -> np.ndarray:
    """Max-log LLRs, positive meaning bit 0 is more likely.

    ``r`` and ``h`` broadcast against each other; the result has one extra
    trailing axis of length ``log2 M``. The noise is normalised to unit
    energy, so the received model is ``r = sqrt(Es/N0) * h * x + n`` with
    ``E|n|^2 = 1``; scaling both ``r`` and the noise by a common factor only
    rescales the LLRs.
    """
    if es_over_n0 <= 0:
        raise ValueError("es_over_n0 must be positive")
    r = np.asarray(r, dtype=complex)
    h = np.asarray(h, dtype=complex)
    ref = np.sqrt(es_over_n0) * h[..., None] * c.points
    d2 = np.abs(r[..., None] - ref) ** 2
    mask = c.label_bits.T.astype(bool)  # (m, M)
    big = np.inf
    d2 = d2[..., None, :]
    min1 = np.where(mask, d2, big).min(axis=-1)
    min0 = np.where(~mask, d2, big).min(axis=-1)
    return min1 - min0
