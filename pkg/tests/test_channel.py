from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import quad

from cfsim.channel import (
    complex_normal,
    effective_channels,
    sample_channels,
    sample_phases,
)


def snapshot_with(cov_sqrt):
    return SimpleNamespace(cov_sqrt=cov_sqrt)


def test_zero_covariance_gives_zero_channel(rng):
    cov_sqrt = np.zeros((2, 3, 2, 2), dtype=complex)
    h = sample_channels(snapshot_with(cov_sqrt), rng).h
    assert np.all(h == 0)


def test_identity_covariance_unit_variance(rng):
    # a (1000, 1) network with R = I yields 1000 i.i.d. draws per call
    cov_sqrt = np.broadcast_to(np.eye(2, dtype=complex), (1000, 1, 2, 2)).copy()
    snap = snapshot_with(cov_sqrt)
    draws = np.concatenate(
        [sample_channels(snap, rng).h[:, 0] for _ in range(100)]
    )
    var = np.mean(np.abs(draws) ** 2, axis=0)
    assert draws.shape == (100_000, 2)
    np.testing.assert_allclose(var, 1.0, rtol=0.02)


def test_covariance_convergence(rng):
    a = complex_normal(rng, (3, 3))
    cov = a @ a.conj().T
    eigval, eigvec = np.linalg.eigh(cov)
    cov_sqrt = (eigvec * np.sqrt(np.maximum(eigval, 0))) @ eigvec.conj().T
    n_draws = 100_000
    z = complex_normal(rng, (n_draws, 3))
    h = np.einsum("mn,bn->bm", cov_sqrt, z)
    emp = (h[:, :, None] * h.conj()[:, None, :]).mean(axis=0)
    assert np.linalg.norm(emp - cov, "fro") <= 0.03 * np.linalg.norm(cov, "fro")


def test_phase_sampling_degenerate_and_bounds(rng):
    theta = sample_phases(0.0, 8, rng).theta
    assert np.all(theta == 0)
    theta = sample_phases(np.pi, 1000, rng).theta
    assert np.all(np.abs(theta) <= np.pi)
    with pytest.raises(ValueError):
        sample_phases(4.0, 3, rng)


def test_phase_mean_matches_integral(rng):
    # oracle: (1 / 2 alpha) * integral of e^{j theta} equals sin(alpha)/alpha
    alpha = np.pi / 2
    oracle = quad(lambda t: np.cos(t) / (2 * alpha), -alpha, alpha)[0]
    assert oracle == pytest.approx(np.sin(alpha) / alpha, abs=1e-12)
    assert oracle == pytest.approx(0.6366197723675814, abs=1e-10)

    n = 1_000_000
    theta = sample_phases(alpha, n, rng).theta
    samples = np.exp(1j * theta)
    mean = samples.mean()
    stderr = samples.real.std(ddof=1) / np.sqrt(n)
    assert abs(mean.real - oracle) <= 3 * stderr
    assert abs(mean.imag) <= 3 * samples.imag.std(ddof=1) / np.sqrt(n)

    theta = sample_phases(np.pi, n, rng).theta
    mean = np.exp(1j * theta).mean()
    assert abs(mean) <= 3.5 / np.sqrt(n)


def test_effective_channels_matched_and_masked(rng):
    h = complex_normal(rng, (2, 3, 4))
    mask = np.array([[1, 1, 0], [0, 1, 1]], dtype=np.int8)
    eff = effective_channels(h, h, mask, theta=None)
    # matched precoder: the desired coupling is the squared norm
    for k in range(2):
        for l in range(3):
            expected = mask[k, l] * np.vdot(h[k, l], h[k, l])
            assert eff.g_ef[k, l] == pytest.approx(expected)
            assert eff.g_ef[k, l].imag == pytest.approx(0.0, abs=1e-12)
    assert np.all(eff.g_tilde[0, :, 2] == 0)  # AP 2 does not serve UE 0


def test_effective_channel_magnitude_invariant_to_phases(rng):
    h = complex_normal(rng, (3, 4, 2))
    w = complex_normal(rng, (3, 4, 2))
    mask = np.ones((3, 4), dtype=np.int8)
    theta = rng.uniform(-np.pi, np.pi, 4)
    base = effective_channels(h, w, mask, theta=None)
    rotated = effective_channels(h, w, mask, theta=theta)
    np.testing.assert_allclose(
        np.abs(rotated.g_tilde), np.abs(base.g_tilde), rtol=1e-12, atol=1e-300
    )
