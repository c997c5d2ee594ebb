import numpy as np
import pytest

from cfsim.channel import complex_normal
from cfsim.training import (
    EstimationError,
    assign_pilots,
    draw_estimates_direct,
    mmse_estimate,
    pilot_statistics,
    received_pilot,
)


def random_cov(rng, n, scale=1.0):
    a = complex_normal(rng, (n, n))
    cov = a @ a.conj().T
    return scale * cov / np.trace(cov).real * n


def test_pilot_assignment_no_sharing(rng):
    betas = rng.uniform(0.1, 1.0, size=(4, 6))
    book = assign_pilots(betas, 10)
    assert len(set(book.q.tolist())) == 4
    for k in range(4):
        assert k in book.copilot_set(k)


def test_pilot_assignment_partition(rng):
    betas = rng.uniform(0.1, 1.0, size=(20, 8))
    book = assign_pilots(betas, 10)
    counts = np.bincount(book.q, minlength=10)
    assert counts.min() >= 1
    union = sorted(int(u) for p in range(10) for u in book.users_of_pilot(p))
    assert union == list(range(20))


def test_pilot_assignment_forced_copilot(rng):
    betas = rng.uniform(0.1, 1.0, size=(2, 3))
    book = assign_pilots(betas, 1)
    assert set(book.copilot_set(0).tolist()) == {0, 1}
    assert set(book.copilot_set(1).tolist()) == {0, 1}


def _two_user_setup(rng, copilot=True, sigma2=1e-3, n=3):
    tau_p = 1 if copilot else 2
    cov = np.stack(
        [[random_cov(rng, n)], [random_cov(rng, n)]]
    )  # (K=2, L=1, n, n)
    betas = np.trace(cov, axis1=-2, axis2=-1).real[:, :] / n
    book = assign_pilots(betas, tau_p)
    eta = 2.0
    stats = pilot_statistics(cov, book, eta, tau_p, sigma2)
    return cov, book, eta, tau_p, stats


def test_received_pilot_trivial_cases(rng):
    cov, book, eta, tau_p, stats = _two_user_setup(rng, copilot=False)
    h = complex_normal(rng, (2, 1, 3))
    theta = np.zeros(1)
    y = received_pilot(h, theta, book, eta, tau_p, 0.0, rng)
    for k in range(2):
        np.testing.assert_allclose(
            y[book.q[k], 0], np.sqrt(tau_p * eta) * h[k, 0], rtol=1e-12
        )
    # no UE on a pilot and no noise -> zero vector
    cov3 = cov[:1]
    betas = np.trace(cov3, axis1=-2, axis2=-1).real / 3
    book1 = assign_pilots(betas, 2)
    y = received_pilot(h[:1], theta, book1, eta, 2, 0.0, rng)
    empty_pilot = 1 - book1.q[0]
    assert np.all(y[empty_pilot] == 0)


def test_received_pilot_phase_switch(rng):
    cov, book, eta, tau_p, stats = _two_user_setup(rng)
    h = complex_normal(rng, (2, 1, 3))
    theta = np.array([0.7])
    y_off = received_pilot(h, theta, book, eta, tau_p, 0.0, rng, "off")
    y_on = received_pilot(h, theta, book, eta, tau_p, 0.0, rng, "on")
    np.testing.assert_allclose(y_on, np.exp(-1j * 0.7) * y_off, rtol=1e-12)


def test_received_pilot_covariance(rng):
    cov, book, eta, tau_p, stats = _two_user_setup(rng, sigma2=0.5)
    n_draws = 100_000
    z = complex_normal(rng, (n_draws, 2, 3))
    # draw channels through the covariance square roots
    eigval, eigvec = np.linalg.eigh(cov[:, 0])
    sqrt_cov = (eigvec * np.sqrt(np.maximum(eigval, 0))[..., None, :]) @ np.swapaxes(
        eigvec.conj(), -1, -2
    )
    h = np.einsum("kmn,bkn->bkm", sqrt_cov, z)
    noise = complex_normal(rng, (n_draws, 3), 0.5)
    y = np.sqrt(tau_p * eta) * h.sum(axis=1) + noise
    emp = (y[:, :, None] * y.conj()[:, None, :]).mean(axis=0)
    psi = stats.psi[0, 0]
    assert np.linalg.norm(emp - psi, "fro") <= 0.03 * np.linalg.norm(psi, "fro")


def test_mmse_noiseless_limit(rng):
    n = 3
    cov = np.stack([[random_cov(rng, n)]])  # one UE, one AP
    betas = np.trace(cov, axis1=-2, axis2=-1).real / n
    book = assign_pilots(betas, 1)
    eta, tau_p = 2.0, 1
    stats = pilot_statistics(cov, book, eta, tau_p, 1e-12)
    h = complex_normal(rng, (1, 1, n))
    y = received_pilot(h, np.zeros(1), book, eta, tau_p, 0.0, rng)
    est = mmse_estimate(y, book, stats)
    np.testing.assert_allclose(est.h_hat, h, rtol=1e-4)


def test_mmse_statistics_and_orthogonality(rng):
    cov, book, eta, tau_p, stats = _two_user_setup(rng, copilot=True, sigma2=0.4)
    n_draws = 100_000
    eigval, eigvec = np.linalg.eigh(cov[:, 0])
    sqrt_cov = (eigvec * np.sqrt(np.maximum(eigval, 0))[..., None, :]) @ np.swapaxes(
        eigvec.conj(), -1, -2
    )
    z = complex_normal(rng, (n_draws, 2, 3))
    h = np.einsum("kmn,bkn->bkm", sqrt_cov, z)
    noise = complex_normal(rng, (n_draws, 3), 0.4)
    y = np.sqrt(tau_p * eta) * h.sum(axis=1) + noise  # both UEs share pilot 0
    h_hat = np.einsum("mn,bn->bm", stats.estimator[0, 0], y)

    # zero mean
    mean = h_hat.mean(axis=0)
    stderr = h_hat.std(axis=0) / np.sqrt(n_draws)
    assert np.all(np.abs(mean) <= 3.5 * stderr)

    # covariance of the estimate equals eta tau_p Theta
    emp = (h_hat[:, :, None] * h_hat.conj()[:, None, :]).mean(axis=0)
    target = eta * tau_p * stats.theta[0, 0]
    assert np.linalg.norm(emp - target, "fro") <= 0.03 * np.linalg.norm(target, "fro")

    # MMSE orthogonality: estimate uncorrelated with its error
    err = h[:, 0] - h_hat
    cross = (h_hat[:, :, None] * err.conj()[:, None, :]).mean(axis=0)
    scale = np.sqrt(np.abs(np.diag(emp))[:, None] * np.abs((err.conj() * err).mean(0))[None, :])
    assert np.max(np.abs(cross) / scale) <= 0.02

    # co-pilot contamination: estimates of the two UEs are correlated
    h_hat_1 = np.einsum("mn,bn->bm", stats.estimator[1, 0], y)
    cross_ue = (h_hat[:, :, None] * h_hat_1.conj()[:, None, :]).mean(axis=0)
    assert np.abs(cross_ue).max() > 0.05 * np.abs(emp).max()


def test_disjoint_pilot_estimates_uncorrelated(rng):
    cov, book, eta, tau_p, stats = _two_user_setup(rng, copilot=False, sigma2=0.4)
    draws = draw_estimates_direct(stats, book, rng, 60_000)  # (B, 2, 1, 3)
    a = draws[:, 0, 0]
    b = draws[:, 1, 0]
    cross = (a[:, :, None] * b.conj()[:, None, :]).mean(axis=0)
    scale = np.sqrt(
        (np.abs(a) ** 2).mean(0)[:, None] * (np.abs(b) ** 2).mean(0)[None, :]
    )
    assert np.max(np.abs(cross) / scale) <= 0.03


def test_error_covariance_identity(rng):
    cov, book, eta, tau_p, stats = _two_user_setup(rng, sigma2=0.2)
    lhs = stats.err_cov + eta * tau_p * stats.theta
    np.testing.assert_allclose(lhs, cov, atol=1e-10)


def test_conditioning_guard(rng):
    # rank-one covariance leaves the noise floor as the smallest eigenvalue
    v = complex_normal(rng, 2)
    cov = np.outer(v, v.conj())[None, None]
    betas = np.trace(cov, axis1=-2, axis2=-1).real / 2
    book = assign_pilots(betas, 1)
    with pytest.raises(EstimationError, match="condition"):
        pilot_statistics(cov, book, 1.0, 1, 1e-15)
