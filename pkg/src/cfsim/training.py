"""Uplink training: pilot assignment and MMSE channel estimation."""

from dataclasses import dataclass

import numpy as np

from .channel import complex_normal

PSI_CONDITION_BOUND = 1e12


class EstimationError(RuntimeError):
    """Raised when a pilot covariance solve is too ill-conditioned."""


@dataclass
class PilotBook:
    """Pilot index per UE plus the co-pilot set of each UE."""

    q: np.ndarray  # (K,) int, values in 0..tau_p-1
    tau_p: int

    def copilot_set(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.q == self.q[k])

    def users_of_pilot(self, pilot: int) -> np.ndarray:
        return np.flatnonzero(self.q == pilot)


@dataclass
class PilotStatistics:
    """Setup-level estimation statistics (independent of realizations).

    psi[t, l] is the received-pilot covariance for pilot t at AP l;
    estimator[k, l] maps the received pilot vector to the MMSE estimate;
    theta[k, l] = R psi^{-1} R and err_cov[k, l] = R - eta tau_p theta.
    """

    psi: np.ndarray  # (tau_p, L, N, N)
    psi_chol: np.ndarray  # (tau_p, L, N, N) lower Cholesky factors
    psi_inv: np.ndarray  # (tau_p, L, N, N)
    estimator: np.ndarray  # (K, L, N, N)
    theta: np.ndarray  # (K, L, N, N)
    err_cov: np.ndarray  # (K, L, N, N)


@dataclass
class ChannelEstimate:
    """MMSE estimates for one realization plus the setup-level statistics."""

    h_hat: np.ndarray  # (K, L, N)
    psi: np.ndarray
    err_cov: np.ndarray
    theta: np.ndarray


def assign_pilots(betas: np.ndarray, tau_p: int) -> PilotBook:
    """Greedy pilot assignment.

    UEs are ranked by their strongest large-scale gain; the first tau_p
    get distinct pilots and every further UE takes the pilot whose
    current holders put the least summed gain at its strongest AP.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    num_ues = betas.shape[0]
    order = np.argsort(-betas.max(axis=1), kind="stable")
    q = np.full(num_ues, -1, dtype=int)
    for rank, k in enumerate(order):
        if rank < tau_p:
            q[k] = rank
            continue
        best_ap = int(np.argmax(betas[k]))
        contamination = np.zeros(tau_p)
        for pilot in range(tau_p):
            holders = np.flatnonzero(q == pilot)
            contamination[pilot] = betas[holders, best_ap].sum()
        q[k] = int(np.argmin(contamination))
    return PilotBook(q=q, tau_p=tau_p)


def pilot_statistics(covariances, book: PilotBook, eta, tau_p, sigma2_ul) -> PilotStatistics:
    """Precompute Psi, its factors, the MMSE estimator maps, Theta and U."""
    num_ues, num_aps, n, _ = covariances.shape
    eye = np.eye(n)
    psi = np.zeros((tau_p, num_aps, n, n), dtype=complex)
    for pilot in range(tau_p):
        users = book.users_of_pilot(pilot)
        if users.size:
            psi[pilot] = (eta * tau_p) * covariances[users].sum(axis=0)
        psi[pilot] += sigma2_ul * eye

    eigvals = np.linalg.eigvalsh(psi)
    cond = eigvals[..., -1] / np.maximum(eigvals[..., 0], 1e-300)
    if np.any(cond > PSI_CONDITION_BOUND):
        worst = float(cond.max())
        raise EstimationError(
            f"pilot covariance condition number {worst:.3e} exceeds {PSI_CONDITION_BOUND:.0e}"
        )
    psi_chol = np.linalg.cholesky(psi)
    psi_inv = np.linalg.inv(psi)

    psi_inv_per_ue = psi_inv[book.q]  # (K, L, N, N)
    estimator = np.sqrt(tau_p * eta) * np.einsum(
        "klmn,klnp->klmp", covariances, psi_inv_per_ue
    )
    theta = np.einsum("klmn,klnp->klmp", psi_inv_per_ue, covariances)
    theta = np.einsum("klmn,klnp->klmp", covariances, theta)
    err_cov = covariances - eta * tau_p * theta
    err_cov = 0.5 * (err_cov + np.swapaxes(err_cov.conj(), -1, -2))
    return PilotStatistics(
        psi=psi,
        psi_chol=psi_chol,
        psi_inv=psi_inv,
        estimator=estimator,
        theta=theta,
        err_cov=err_cov,
    )


def received_pilot(
    h, theta, book: PilotBook, eta, tau_p, sigma2_ul, rng, pilot_phase_mode="off"
) -> np.ndarray:
    """Received pilot vectors per (pilot, AP), shape (tau_p, L, N).

    With the pilot-phase switch on, each AP's oscillator rotation
    e^{-j theta_l} multiplies the superimposed pilot channels.
    """
    num_ues, num_aps, n = h.shape
    y = np.zeros((book.tau_p, num_aps, n), dtype=complex)
    amp = np.sqrt(tau_p * eta)
    for pilot in range(book.tau_p):
        users = book.users_of_pilot(pilot)
        if users.size:
            y[pilot] = amp * h[users].sum(axis=0)
    if pilot_phase_mode == "on":
        y *= np.exp(-1j * np.asarray(theta))[None, :, None]
    if sigma2_ul > 0:
        y += complex_normal(rng, y.shape, sigma2_ul)
    return y


def mmse_estimate(received, book: PilotBook, stats: PilotStatistics) -> ChannelEstimate:
    """MMSE channel estimates h_hat[k, l] from the received pilots."""
    per_ue_obs = received[book.q]  # (K, L, N)
    h_hat = np.einsum("klmn,kln->klm", stats.estimator, per_ue_obs)
    return ChannelEstimate(
        h_hat=h_hat, psi=stats.psi, err_cov=stats.err_cov, theta=stats.theta
    )


def draw_estimates_direct(stats: PilotStatistics, book: PilotBook, rng, n_draws):
    """Draw h_hat from its exact joint law without simulating channels.

    The received pilot vector is CN(0, Psi), so drawing y = chol(Psi) z
    and applying the estimator map reproduces the joint distribution of
    all estimates, including co-pilot correlation.  Returns an array of
    shape (n_draws, K, L, N).
    """
    tau_p, num_aps, n, _ = stats.psi.shape
    z = complex_normal(rng, (n_draws, tau_p, num_aps, n))
    y = np.einsum("tlmn,btln->btlm", stats.psi_chol, z)
    per_ue = y[:, book.q]  # (B, K, L, N)
    return np.einsum("klmn,bkln->bklm", stats.estimator, per_ue)
