import numpy as np
import pytest

from cfsim.channel import EffectiveChannels, complex_normal
from cfsim.clustering import build_clusters
from cfsim.coherent import (
    HardeningMoments,
    empirical_hardening_moments,
    mr_closed_form_moments,
    nu_tilde,
    se_from_sinr,
    sinr_hardening,
    sinr_upper,
    transmit_symbols,
)
from cfsim.precoding import distributed_power, mr_norm_moments
from cfsim.training import assign_pilots, pilot_statistics


def test_nu_tilde_values():
    assert nu_tilde(0.0) == 1.0
    assert nu_tilde(np.pi) == pytest.approx(0.0, abs=1e-30)
    assert nu_tilde(np.pi / 8) == pytest.approx(0.9496412035517837, rel=1e-12)
    assert nu_tilde(np.pi / 8) == pytest.approx(0.94964, abs=5e-6)
    with pytest.raises(ValueError):
        nu_tilde(-0.1)


def _eff_from_gtilde(g_tilde):
    k = g_tilde.shape[0]
    return EffectiveChannels(
        g_ef=g_tilde[np.arange(k), np.arange(k)], g_tilde=g_tilde
    )


def test_transmit_single_link_and_cancellation(rng):
    g = np.zeros((1, 1, 1), dtype=complex)
    g[0, 0, 0] = 1.0
    sym = np.array([[np.exp(1j * 0.4)]])
    y = transmit_symbols(_eff_from_gtilde(g), sym, 0.0, rng)
    assert y[0, 0] == pytest.approx(sym[0, 0])

    # two APs with opposite effective channels cancel
    g = np.zeros((1, 1, 2), dtype=complex)
    g[0, 0] = [0.8, -0.8]
    y = transmit_symbols(_eff_from_gtilde(g), sym, 0.0, rng)
    assert y[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_transmit_two_user_hand_check(rng):
    g = complex_normal(rng, (2, 2, 3))
    sym = complex_normal(rng, (2, 5))
    sym /= np.abs(sym)
    y = transmit_symbols(_eff_from_gtilde(g), sym, 0.0, rng)
    for k in range(2):
        for p in range(5):
            expected = sum(
                g[i, k, l] * sym[i, p] for i in range(2) for l in range(3)
            )
            assert y[k, p] == pytest.approx(expected, rel=1e-12)


def test_sinr_upper_collapses(rng):
    for _ in range(20):
        h_ef = complex_normal(rng, (3, 4))
        h_til = complex_normal(rng, (3, 3, 4))
        for i in range(3):
            h_til[i, i] = h_ef[i]
        sigma2 = 0.37
        coherent_sinr = sinr_upper(h_ef, h_til, 0.0, sigma2)
        num = np.abs(h_ef.sum(1)) ** 2
        den = np.zeros(3)
        for k in range(3):
            den[k] = sum(
                np.abs(h_til[i, k].sum()) ** 2 for i in range(3) if i != k
            ) + sigma2
        np.testing.assert_allclose(coherent_sinr, num / den, rtol=1e-12)

        noncoh = sinr_upper(h_ef, h_til, np.pi, sigma2)
        num0 = (np.abs(h_ef) ** 2).sum(1)
        den0 = np.zeros(3)
        for k in range(3):
            den0[k] = sum(
                (np.abs(h_til[i, k]) ** 2).sum() for i in range(3) if i != k
            ) + sigma2
        np.testing.assert_allclose(noncoh, num0 / den0, rtol=1e-12)


def test_sinr_upper_matches_phase_average(rng):
    # oracle: Monte Carlo over the actual uniform phase draws
    num_aps = 5
    h_ef = complex_normal(rng, (2, num_aps))
    h_til = complex_normal(rng, (2, 2, num_aps))
    for i in range(2):
        h_til[i, i] = h_ef[i]
    sigma2 = 0.8
    alpha = 0.9
    analytic = sinr_upper(h_ef, h_til, alpha, sigma2)

    n_draws = 400_000
    num = np.zeros(2)
    den = np.zeros(2)
    chunk = 20_000
    for start in range(0, n_draws, chunk):
        theta = rng.uniform(-alpha, alpha, size=(chunk, num_aps))
        rot = np.exp(1j * theta)
        sig = np.abs(np.einsum("bl,kl->bk", rot, h_ef)) ** 2
        num += sig.sum(axis=0)
        cross = np.abs(np.einsum("bl,ikl->bik", rot, h_til)) ** 2
        for k in range(2):
            den[k] += sum(cross[:, i, k].sum() for i in range(2) if i != k)
    mc = (num / n_draws) / (den / n_draws + sigma2)
    np.testing.assert_allclose(analytic, mc, rtol=0.01)


def test_sinr_hardening_printed_form_edge_cases(rng):
    moments = HardeningMoments(
        mean_sum=np.array([2.0 + 0j]),
        intf_coh=np.zeros((1, 1)),
        intf_tot=np.zeros((1, 1)),
    )
    # zero nu gives zero SINR
    assert sinr_hardening(moments, np.pi, 1.0)[0] == pytest.approx(0.0, abs=1e-25)
    # interference-free printed form floors the denominator and warns
    with pytest.warns(RuntimeWarning, match="floored"):
        val = sinr_hardening(moments, 0.0, 1.0)
    assert val[0] == pytest.approx(4.0 / 1e-6)
    # the self-term variant keeps it finite without flooring
    moments_self = HardeningMoments(
        mean_sum=np.array([2.0 + 0j]),
        intf_coh=np.array([[5.0]]),
        intf_tot=np.array([[3.0]]),
    )
    val = sinr_hardening(moments_self, 0.0, 1.0, include_self_term=True)
    assert val[0] == pytest.approx(4.0 / (5.0 - 4.0 + 1.0))


def test_sinr_hardening_monotone_in_alpha(rng):
    moments = HardeningMoments(
        mean_sum=complex_normal(rng, 4) * 3,
        intf_coh=np.abs(complex_normal(rng, (4, 4))) ** 2 * 20,
        intf_tot=np.abs(complex_normal(rng, (4, 4))) ** 2 * 10,
    )
    grid = [0.0, np.pi / 8, np.pi / 4, np.pi / 2, np.pi]
    for self_term in (False, True):
        values = [
            sinr_hardening(moments, a, 1.0, include_self_term=self_term) for a in grid
        ]
        for lo, hi in zip(values[1:], values[:-1]):
            assert np.all(lo <= hi + 1e-12)


def test_se_from_sinr_values():
    assert se_from_sinr(0.0, 190, 200) == 0.0
    assert se_from_sinr(1.0, 190, 200) == pytest.approx(0.95)
    assert se_from_sinr(3.0, 190, 200) == pytest.approx(1.9)


def _mr_moment_setup(rng, copilot):
    num_ues, num_aps, n = 3, 4, 2
    tau_p = 2 if copilot else 3
    cov = np.zeros((num_ues, num_aps, n, n), dtype=complex)
    for k in range(num_ues):
        for ap in range(num_aps):
            a = complex_normal(rng, (n, n))
            c = a @ a.conj().T
            cov[k, ap] = c / np.trace(c).real * rng.uniform(0.5, 2.0)
    betas = np.trace(cov, axis1=-2, axis2=-1).real / n
    book = assign_pilots(betas, tau_p)
    eta, sigma2 = 1.5, 0.3
    stats = pilot_statistics(cov, book, eta, tau_p, sigma2)
    cluster = build_clusters(betas, 2, 3)
    rho = distributed_power(betas, cluster, rho_max=2.0)
    return cov, betas, book, stats, cluster, rho, eta, tau_p, sigma2


@pytest.mark.parametrize("copilot", [True, False])
def test_mr_closed_form_moments_match_monte_carlo(rng, copilot):
    cov, betas, book, stats, cluster, rho, eta, tau_p, sigma2 = _mr_moment_setup(
        rng, copilot
    )
    closed = mr_closed_form_moments(stats, cov, cluster, book, rho, eta, tau_p)
    norm = mr_norm_moments(stats, cluster, eta, tau_p)

    eigval, eigvec = np.linalg.eigh(cov)
    sqrt_cov = (eigvec * np.sqrt(np.maximum(eigval, 0))[..., None, :]) @ np.swapaxes(
        eigvec.conj(), -1, -2
    )
    num_ues, num_aps, n = betas.shape[0], betas.shape[1], cov.shape[-1]
    amp = np.sqrt(tau_p * eta)

    def sample(batch):
        z = complex_normal(rng, (batch, num_ues, num_aps, n))
        h = np.einsum("klmn,bkln->bklm", sqrt_cov, z)
        y = np.zeros((batch, tau_p, num_aps, n), dtype=complex)
        for pilot in range(tau_p):
            users = book.users_of_pilot(pilot)
            if users.size:
                y[:, pilot] = amp * h[:, users].sum(axis=1)
        y += complex_normal(rng, y.shape, sigma2)
        h_hat = np.einsum("klmn,bkln->bklm", stats.estimator, y[:, book.q])
        scale = np.sqrt(
            np.divide(rho, norm.per_ap, out=np.zeros_like(rho), where=norm.per_ap > 0)
        )
        w = h_hat * (scale * cluster.a)[None, :, :, None]
        g = np.einsum("bkln,biln->bikl", h.conj(), w)
        return g * cluster.a[None, :, None, :]

    mc = empirical_hardening_moments(sample, 100_000)
    np.testing.assert_allclose(
        np.abs(mc.mean_sum), np.abs(closed.mean_sum), rtol=0.02
    )
    np.testing.assert_allclose(mc.intf_coh, closed.intf_coh, rtol=0.03)
    np.testing.assert_allclose(mc.intf_tot, closed.intf_tot, rtol=0.03)

    # with closed moments on both sides the bound agrees to high precision
    a = sinr_hardening(closed, 0.3, sigma2, include_self_term=True)
    b = sinr_hardening(mc, 0.3, sigma2, include_self_term=True)
    np.testing.assert_allclose(a, b, rtol=0.05)
