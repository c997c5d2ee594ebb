"""Closed-form SNR/SINR of the differential scheme plus empirical oracles.

All expressions take the squared magnitudes of the effective downlink
channels as inputs, so they are unaffected by the per-AP phases by
construction.  The empirical estimator measures the same quantities from
simulated decision statistics with the channels held fixed.
"""

from dataclasses import dataclass

import numpy as np

from .channel import complex_normal
from .dstbc import build_code_matrix, n_symbols

SINR_CAP = 1e9

# Residual same-UE cross-row constant of the detector statistic, found
# numerically; the 1/L_k entry for cluster size 8 follows the same fit.
L_TILDE = {2: 0.0, 4: 0.112, 8: 0.125}


def snr_dstbc(desired_pow, cluster_size: int, sigma2_dl: float) -> float:
    """Single-user post-detection SNR: sum_l |g|^2 / (2 n_s sigma2)."""
    ns = n_symbols(cluster_size)
    desired = float(np.sum(desired_pow))
    if sigma2_dl <= 0:
        return SINR_CAP if desired > 0 else 0.0
    return desired / (2.0 * ns * sigma2_dl)


@dataclass
class DstbcSinr:
    value: float
    capped: bool = False


def sinr_dstbc_closed(desired_pow, interference_pow, cluster_size, sigma2_dl) -> DstbcSinr:
    """Closed-form multi-user SINR of the differential detector.

    desired_pow: (L_k,) squared magnitudes of UE k's own couplings
    (unused rows may be zero); interference_pow: (K_i, L_k) squared
    magnitudes per interferer.  Degenerate zero denominators return the
    cap with a flag.
    """
    if cluster_size not in L_TILDE:
        raise ValueError(f"no residual constant defined for cluster size {cluster_size}")
    ns = n_symbols(cluster_size) if cluster_size in (2, 4) else cluster_size // 2
    l_tilde = L_TILDE[cluster_size]
    desired_pow = np.asarray(desired_pow, dtype=float)
    interference_pow = np.atleast_2d(np.asarray(interference_pow, dtype=float))
    if interference_pow.size == 0:
        interference_pow = np.zeros((0, desired_pow.shape[0]))

    signal_sum = desired_pow.sum()
    per_ue = interference_pow.sum(axis=1)  # (K_i,)
    total_interf = per_ue.sum()

    numerator = (signal_sum / np.sqrt(ns)) ** 2
    denom = 2.0 * (
        sigma2_dl * signal_sum
        + sigma2_dl * total_interf
        + signal_sum * total_interf / cluster_size
    )
    # Residual interference-by-interference term of the product statistic.
    same_sq = (interference_pow**2).sum(axis=1)
    cross_same_ue = per_ue**2 - same_sq
    resid = (same_sq / ns + cross_same_ue * (1.0 / cluster_size + l_tilde)).sum()
    resid += (total_interf**2 - (per_ue**2).sum()) / cluster_size
    denom += resid

    if denom <= 0:
        return DstbcSinr(value=SINR_CAP, capped=True)
    value = numerator / denom
    if value > SINR_CAP:
        return DstbcSinr(value=SINR_CAP, capped=True)
    return DstbcSinr(value=float(value))


def sinr_dstbc_closed_all(row_weight_pow, cluster_size, sigma2_dl) -> np.ndarray:
    """Vectorized closed form for all UEs of one realization.

    row_weight_pow[k, i, m] = |effective coupling of UE i's row m at
    UE k|^2; the diagonal i = k is the desired signal.
    """
    num_ues = row_weight_pow.shape[0]
    out = np.empty(num_ues)
    for k in range(num_ues):
        others = [i for i in range(num_ues) if i != k]
        out[k] = sinr_dstbc_closed(
            row_weight_pow[k, k], row_weight_pow[k, others], cluster_size, sigma2_dl
        ).value
    return out


def empirical_dstbc_sinr(
    row_weights,
    ue_index,
    designs,
    constellation,
    sigma2_dl,
    blocks_per_interval,
    n_pairs,
    rng,
    n_replicas=256,
):
    """Decision-statistic power ratio measured from simulated block pairs.

    Runs parallel replicas of the full differential transmission with the
    effective channels `row_weights` fixed, restarting at the reference
    block every `blocks_per_interval` blocks.  Signal power is the sample
    variance of the desired-signal statistic; interference-plus-noise
    power is the sample variance of the remainder of the statistic.
    """
    num_ues, _, cluster_size = row_weights.shape
    ns = designs.n_symbols
    order = constellation.order
    k = ue_index

    sig_acc = 0.0
    rest_acc = 0.0
    count = 0
    pairs_per_restart = blocks_per_interval - 1
    rounds = int(np.ceil(n_pairs / (pairs_per_restart * n_replicas)))
    for _ in range(rounds):
        states = np.broadcast_to(
            np.eye(cluster_size, dtype=complex),
            (n_replicas, num_ues, cluster_size, cluster_size),
        ).copy()
        noise = complex_normal(rng, (n_replicas, num_ues, cluster_size), sigma2_dl)
        y_prev = np.einsum("uim,rimj->ruj", row_weights, states) + noise
        ds_prev = np.einsum("m,rmj->rj", row_weights[k, k], states[:, k])
        for _ in range(pairs_per_restart):
            idx = rng.integers(0, order, size=(n_replicas, num_ues, ns))
            x = build_code_matrix(constellation.points[idx], cluster_size, designs)
            states = states @ x
            noise = complex_normal(rng, (n_replicas, num_ues, cluster_size), sigma2_dl)
            y_now = np.einsum("uim,rimj->ruj", row_weights, states) + noise
            ds_now = np.einsum("m,rmj->rj", row_weights[k, k], states[:, k])

            outer_full = y_now[:, k].conj()[..., :, None] * y_prev[:, k][..., None, :]
            outer_sig = ds_now.conj()[..., :, None] * ds_prev[..., None, :]
            stat_full = np.einsum("nij,rji->rn", designs.a.astype(complex), outer_full)
            stat_sig = np.einsum("nij,rji->rn", designs.a.astype(complex), outer_sig)
            sig_acc += float((np.abs(stat_sig) ** 2).sum())
            rest_acc += float((np.abs(stat_full - stat_sig) ** 2).sum())
            count += n_replicas * ns
            y_prev, ds_prev = y_now, ds_now
    return (sig_acc / count) / (rest_acc / count)


def se_from_ber(ber, scheme, tau_c, tau_d, modulation_order, cluster_size=None):
    """Spectral efficiency from the average bit error rate.

    The prefactor is the fraction of the coherence block that carries
    payload symbols: tau_d/tau_c for the coherent baseline and
    (G - 1) n_s / tau_c for the differential scheme, whose first block
    per interval is the reference.
    """
    ber = np.asarray(ber, dtype=float)
    if np.any((ber < 0) | (ber > 1)):
        raise ValueError("ber must lie in [0, 1]")
    if scheme == "conventional":
        prefactor = tau_d / tau_c
    elif scheme == "dstbc":
        if cluster_size is None:
            raise ValueError("cluster_size required for the dstbc prefactor")
        blocks = tau_d // cluster_size
        prefactor = (blocks - 1) * n_symbols(cluster_size) / tau_c
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return prefactor * np.log2(modulation_order) * (1.0 - ber)
