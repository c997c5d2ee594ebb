"""Small-scale channels, AP oscillator phases, and effective DL channels."""

from dataclasses import dataclass

import numpy as np


@dataclass
class ChannelRealization:
    """Per-coherence-block channel vectors h[k, l] (shape (K, L, N))."""

    h: np.ndarray
    block_index: int = 0


@dataclass
class PhaseState:
    """Per-AP oscillator phases, constant within one coherence block."""

    theta: np.ndarray  # (L,) radians
    alpha: float


@dataclass
class EffectiveChannels:
    """Scalar effective DL channels.

    `g_tilde[i, k, l]` couples the signal AP l precodes for UE i into the
    receiver of UE k (zero when AP l does not serve UE i); the diagonal
    slice `g_tilde[k, k, :]` is the desired-channel row `g_ef[k, :]`.
    """

    g_ef: np.ndarray  # (K, L)
    g_tilde: np.ndarray  # (K, K, L), index order (i, k, l)


def complex_normal(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(snapshot, rng: np.random.Generator, block_index=0) -> ChannelRealization:
    """Draw h[k, l] = R[k, l]^{1/2} z with z standard complex Gaussian."""
    cov_sqrt = snapshot.cov_sqrt
    k, l, n = cov_sqrt.shape[0], cov_sqrt.shape[1], cov_sqrt.shape[-1]
    z = complex_normal(rng, (k, l, n))
    h = np.einsum("klmn,kln->klm", cov_sqrt, z)
    return ChannelRealization(h=h, block_index=block_index)


def sample_phases(alpha: float, num_aps: int, rng: np.random.Generator) -> PhaseState:
    """I.i.d. oscillator phases uniform on [-alpha, alpha]."""
    if not 0.0 <= alpha <= np.pi:
        raise ValueError("alpha must lie in [0, pi]")
    if alpha == 0.0:
        theta = np.zeros(num_aps)
    else:
        theta = rng.uniform(-alpha, alpha, size=num_aps)
    return PhaseState(theta=theta, alpha=alpha)


def effective_channels(h, precoders, serving_mask, theta=None) -> EffectiveChannels:
    """Form g_tilde[i, k, l] = a[i, l] e^{j theta_l} h[k, l]^H w[i, l].

    `theta=None` gives the phase-free variant used by the SE bounds.
    The magnitude of every entry is invariant to theta.
    """
    g = np.einsum("kln,iln->ikl", h.conj(), precoders)
    g *= serving_mask[:, None, :]
    if theta is not None:
        g = g * np.exp(1j * np.asarray(theta))[None, None, :]
    k = g.shape[0]
    g_ef = g[np.arange(k), np.arange(k), :]
    return EffectiveChannels(g_ef=g_ef, g_tilde=g)
