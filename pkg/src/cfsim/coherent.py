"""Conventional coherent downlink: transmission and the SINR/SE bounds.

The two spectral-efficiency bounds express the effect of uniformly
distributed per-AP phases through nu = sinc^2(alpha): coherent
(cross-AP) terms scale by nu while per-AP power terms survive intact.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .channel import complex_normal

HARDENING_DENOMINATOR_FLOOR = 1e-6  # times sigma2, guards sampled moments


@dataclass
class HardeningMoments:
    """Channel-statistics inputs of the hardening bound.

    mean_sum[k] = sum_l E{h_ef[k, l]};
    intf_coh[i, k] = E{|sum_l h_tilde[i, k, l]|^2};
    intf_tot[i, k] = sum_l E{|h_tilde[i, k, l]|^2}.
    """

    mean_sum: np.ndarray  # (K,) complex
    intf_coh: np.ndarray  # (K, K)
    intf_tot: np.ndarray  # (K, K)


def nu_tilde(alpha: float) -> float:
    """Squared mean of e^{j theta} for theta uniform on [-alpha, alpha]."""
    if not 0.0 <= alpha <= np.pi:
        raise ValueError("alpha must lie in [0, pi]")
    return float(np.sinc(alpha / np.pi) ** 2)


def phase_coherence_factor(alpha: float, convention: str = "exact") -> float:
    """Cross-AP coherence factor of the SE bounds.

    "exact" is (sin(alpha)/alpha)^2, the true squared mean of e^{j theta}.
    "normalized" evaluates the sinc in its normalized convention,
    (sin(pi alpha)/(pi alpha))^2; reference degradation figures for this
    model reproduce under that convention, so it is kept available as an
    explicit replication mode.  Both agree at alpha = 0 and are ~0 at pi.
    """
    if convention == "exact":
        return nu_tilde(alpha)
    if convention == "normalized":
        if not 0.0 <= alpha <= np.pi:
            raise ValueError("alpha must lie in [0, pi]")
        return float(np.sinc(alpha) ** 2)
    raise ValueError(f"unknown sinc convention {convention!r}")


def transmit_symbols(eff, symbols, sigma2_dl, rng) -> np.ndarray:
    """Received samples y[k, p] for per-UE symbol streams symbols[i, p]."""
    transfer = eff.g_tilde.sum(axis=2)  # (i, k): channel from UE i's signal to UE k
    y = np.einsum("ik,ip->kp", transfer, symbols)
    if sigma2_dl > 0:
        y = y + complex_normal(rng, y.shape, sigma2_dl)
    return y


def sinr_upper(h_ef, h_tilde, alpha, sigma2_dl, nu=None) -> np.ndarray:
    """Instantaneous SINR with the phase expectation taken analytically.

    Collapses to the fully coherent SINR at alpha = 0 and to the
    noncoherent power sum at alpha = pi.  `nu` overrides the coherence
    factor (defaults to the exact one for `alpha`).
    """
    nu = nu_tilde(alpha) if nu is None else nu
    coh_sig = np.abs(h_ef.sum(axis=1)) ** 2
    pow_sig = (np.abs(h_ef) ** 2).sum(axis=1)
    num = nu * coh_sig + (1.0 - nu) * pow_sig

    coh_int = np.abs(h_tilde.sum(axis=2)) ** 2  # (i, k)
    pow_int = (np.abs(h_tilde) ** 2).sum(axis=2)
    k = h_ef.shape[0]
    off = ~np.eye(k, dtype=bool)
    den = (
        (nu * coh_int + (1.0 - nu) * pow_int) * off
    ).sum(axis=0) + sigma2_dl
    return num / den


def sinr_hardening(
    moments: HardeningMoments, alpha, sigma2_dl, include_self_term=False, nu=None
) -> np.ndarray:
    """Hardening bound on the SINR from channel statistics only.

    With `include_self_term=False` the interference sum runs over the
    other UEs only, exactly as the bound is usually displayed for this
    model; the resulting denominator can dip below zero (degenerate
    interference-free cases, sampled-moment noise) and is then floored
    at a small multiple of the noise power with a warning.  With
    `include_self_term=True` the UE's own beamforming-gain uncertainty
    joins the denominator, which matches the classical use-and-forget
    bound and keeps the denominator nonnegative for exact moments.
    """
    nu = nu_tilde(alpha) if nu is None else nu
    k = moments.mean_sum.shape[0]
    off = ~np.eye(k, dtype=bool) if not include_self_term else np.ones((k, k), dtype=bool)
    signal = nu * np.abs(moments.mean_sum) ** 2
    interference = (
        (nu * moments.intf_coh + (1.0 - nu) * moments.intf_tot) * off
    ).sum(axis=0)
    den = interference - signal + sigma2_dl
    floor = sigma2_dl * HARDENING_DENOMINATOR_FLOOR
    if np.any(den < floor):
        warnings.warn(
            "hardening-bound denominator floored; moments are degenerate or noisy",
            RuntimeWarning,
            stacklevel=2,
        )
        den = np.maximum(den, floor)
    return signal / den


def se_from_sinr(sinr, tau_d, tau_c) -> np.ndarray:
    """Spectral efficiency of the data fraction of the coherence block."""
    return (tau_d / tau_c) * np.log2(1.0 + np.asarray(sinr, dtype=float))


def mr_closed_form_moments(
    stats, covariances, cluster, book, rho_per_ap, eta, tau_p
) -> HardeningMoments:
    """Hardening-moment inputs in closed form for distributed MR precoding.

    Builds on the jointly Gaussian structure of (channel, estimate):
    the mean effective channel is sqrt(eta tau_p rho tr(Theta)) and the
    interference moments split into an incoherent trace term plus a
    coherent term that only co-pilot UEs contribute.
    """
    num_ues, num_aps = cluster.a.shape
    theta = stats.theta
    tr_theta = np.trace(theta, axis1=-2, axis2=-1).real  # (K, L)

    mean_per_ap = np.sqrt(
        np.maximum(eta * tau_p * rho_per_ap * tr_theta, 0.0)
    ) * cluster.a
    mean_sum = mean_per_ap.sum(axis=1).astype(complex)

    # Incoherent part: rho_{i,l} tr(Theta_{i,l} R_{k,l}) / tr(Theta_{i,l}).
    cross_tr = np.einsum("ilmn,klnm->ikl", theta, covariances).real
    with np.errstate(invalid="ignore", divide="ignore"):
        incoh = rho_per_ap[:, None, :] * cross_tr / tr_theta[:, None, :]
    incoh = np.where(cluster.a[:, None, :] > 0, np.nan_to_num(incoh), 0.0)

    # Coherent pilot-contamination amplitude per (i, k, l), nonzero only
    # when UEs i and k share a pilot.  tr(R_i Psi^{-1} R_k) is complex in
    # general, so amplitudes add coherently before squaring.
    copilot = (book.q[:, None] == book.q[None, :]).astype(float)
    amp = np.zeros((num_ues, num_ues, num_aps), dtype=complex)
    for i in range(num_ues):
        aps = cluster.serving[i]
        if aps.size == 0:
            continue
        psi_inv = stats.psi_inv[book.q[i], aps]  # (A, N, N)
        for k in np.flatnonzero(copilot[:, i]):
            tr_tilde = np.einsum(
                "amn,anp,apm->a", covariances[i, aps], psi_inv, covariances[k, aps]
            )
            amp[i, k, aps] = (
                np.sqrt(eta * tau_p * rho_per_ap[i, aps] / tr_theta[i, aps]) * tr_tilde
            )

    intf_tot = incoh.sum(axis=2) + (np.abs(amp) ** 2).sum(axis=2) * copilot
    intf_coh = incoh.sum(axis=2) + np.abs(amp.sum(axis=2)) ** 2 * copilot
    return HardeningMoments(mean_sum=mean_sum, intf_coh=intf_coh, intf_tot=intf_tot)


def empirical_hardening_moments(sample_fn, n_draws) -> HardeningMoments:
    """Estimate the hardening moments from joint (channel, precoder) draws.

    `sample_fn(batch)` must return phase-free effective channels
    h_tilde[b, i, k, l] for a batch of independent realizations.
    """
    mean_sum = None
    intf_coh = None
    intf_tot = None
    done = 0
    while done < n_draws:
        h_tilde = sample_fn(min(256, n_draws - done))
        batch = h_tilde.shape[0]
        k = h_tilde.shape[1]
        coh = h_tilde.sum(axis=3)
        diag = coh[:, np.arange(k), np.arange(k)]
        contrib_mean = diag.sum(axis=0)
        contrib_coh = (np.abs(coh) ** 2).sum(axis=0)
        contrib_tot = (np.abs(h_tilde) ** 2).sum(axis=3).sum(axis=0)
        if mean_sum is None:
            mean_sum, intf_coh, intf_tot = contrib_mean, contrib_coh, contrib_tot
        else:
            mean_sum += contrib_mean
            intf_coh += contrib_coh
            intf_tot += contrib_tot
        done += batch
    return HardeningMoments(
        mean_sum=mean_sum / done, intf_coh=intf_coh / done, intf_tot=intf_tot / done
    )
