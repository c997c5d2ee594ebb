"""PSK constellations, angle-based detection, and Gray bit mapping."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PskConstellation:
    order: int
    points: np.ndarray  # (M,) unit-modulus, points[m] = exp(j 2 pi m / M)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))


def psk_constellation(order: int) -> PskConstellation:
    if order < 2 or order & (order - 1):
        raise ValueError("PSK order must be a power of two >= 2")
    points = np.exp(2j * np.pi * np.arange(order) / order)
    return PskConstellation(order=order, points=points)


def detect_psk(y, constellation: PskConstellation):
    """Nearest constellation index by wrapped angular distance.

    Invariant to positive scaling of y; ties resolve to the lowest index
    and y == 0 maps to index 0 by convention.
    """
    y = np.asarray(y)
    scalar = y.ndim == 0
    angles = np.angle(np.atleast_1d(y))
    ref = np.angle(constellation.points)
    diff = np.abs((angles[..., None] - ref + np.pi) % (2.0 * np.pi) - np.pi)
    idx = np.argmin(diff, axis=-1)
    idx[np.atleast_1d(y) == 0] = 0
    return int(idx[0]) if scalar else idx


def gray_labels(order: int) -> np.ndarray:
    """Reflected Gray label of each constellation index."""
    idx = np.arange(order)
    return idx ^ (idx >> 1)


def bit_error_table(order: int) -> np.ndarray:
    """bit_errors[tx, rx]: Hamming distance of the Gray labels."""
    labels = gray_labels(order)
    xor = labels[:, None] ^ labels[None, :]
    table = np.zeros((order, order), dtype=np.int64)
    while np.any(xor):
        table += xor & 1
        xor >>= 1
    return table
