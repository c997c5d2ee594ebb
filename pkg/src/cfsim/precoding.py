"""Precoding directions, statistical normalization, and power allocation.

Direction functions operate on batches of estimate draws with shape
(B, K, L, N) and return matching per-AP precoder blocks; the collective
(centralized) precoder of UE k is the concatenation of its blocks over
the serving APs.  Normalization divides by the square root of the
statistical second moment of the unnormalized direction, which is
analytic for MR and estimated from a dedicated sample for the MMSE-type
schemes.
"""

from dataclasses import dataclass

import numpy as np

SOLVE_CONDITION_BOUND = 1e12


class PrecodingError(RuntimeError):
    """Raised on zero directions or ill-conditioned solves."""


@dataclass
class PmmseSupport:
    """Per-UE interference set and reduced AP support for the P-MMSE solve.

    partners[k] holds P_k = {i : UE i shares an AP with UE k}; the solve
    runs on the antennas of support_aps[k] (union of the partners'
    clusters), where regularizer[k] = sum_i eta U_i + sigma2 I restricted
    to that support.  UEs with identical (partners, support) share one
    factorization per draw; `groups` lists (member UEs, representative k).
    """

    partners: list
    support_aps: list
    regularizer: list
    groups: list


@dataclass
class NormalizationMoments:
    """Second moments of unnormalized directions: per AP block and collective."""

    per_ap: np.ndarray  # (K, L), E ||wbar_{k,l}||^2, zero outside the cluster
    collective: np.ndarray  # (K,), E ||wbar_k||^2


def mr_direction(h_hat, cluster) -> np.ndarray:
    """MR direction: the local channel estimate, masked to the cluster."""
    return h_hat * cluster.a[..., :, :, None]


def _check_condition(matrices, sigma2):
    # lambda_max <= trace and lambda_min >= sigma2, so trace/sigma2 bounds the
    # condition number from above.
    traces = np.trace(matrices, axis1=-2, axis2=-1).real
    worst = float(traces.max()) / sigma2
    if not np.isfinite(worst) or worst > SOLVE_CONDITION_BOUND:
        raise PrecodingError(
            f"precoding solve condition bound {worst:.3e} exceeds {SOLVE_CONDITION_BOUND:.0e}"
        )


def lpmmse_direction(h_hat, err_cov, cluster, eta, sigma2_ul) -> np.ndarray:
    """Local partial MMSE: per AP, regularize over its own served UEs only."""
    batch, num_ues, num_aps, n = h_hat.shape
    out = np.zeros_like(h_hat)
    eye = sigma2_ul * np.eye(n)
    for ap in range(num_aps):
        users = cluster.served_by[ap]
        if users.size == 0:
            continue
        h_sel = h_hat[:, users, ap, :]  # (B, U, N)
        gram = eta * np.matmul(h_sel.transpose(0, 2, 1), h_sel.conj())
        gram += eta * err_cov[users, ap].sum(axis=0) + eye
        _check_condition(gram, sigma2_ul)
        rhs = np.swapaxes(h_sel, 1, 2)  # (B, N, U)
        sol = np.linalg.solve(gram, rhs)
        out[:, users, ap, :] = eta * np.swapaxes(sol, 1, 2)
    return out


def pmmse_support(cluster, err_cov, eta, sigma2_ul) -> PmmseSupport:
    """Precompute P_k, the reduced AP support, and the constant regularizer."""
    a = cluster.a
    share = (a @ a.T) > 0
    partners = [np.flatnonzero(share[k]) for k in range(cluster.num_ues)]
    support_aps = []
    regularizer = []
    n = err_cov.shape[-1]
    for k in range(cluster.num_ues):
        aps = np.flatnonzero(a[partners[k]].sum(axis=0) > 0)
        support_aps.append(aps)
        dim = aps.size * n
        reg = np.zeros((dim, dim), dtype=complex)
        for i in partners[k]:
            for pos, ap in enumerate(aps):
                if a[i, ap]:
                    block = slice(pos * n, (pos + 1) * n)
                    reg[block, block] += eta * err_cov[i, ap]
        reg += sigma2_ul * np.eye(dim)
        regularizer.append(reg)
    signature = {}
    for k in range(cluster.num_ues):
        key = (tuple(partners[k]), tuple(support_aps[k]))
        signature.setdefault(key, []).append(k)
    groups = [(np.array(members), members[0]) for members in signature.values()]
    return PmmseSupport(
        partners=partners, support_aps=support_aps, regularizer=regularizer, groups=groups
    )


def pmmse_direction(h_hat, cluster, support: PmmseSupport, eta, sigma2_ul) -> np.ndarray:
    """Partial MMSE on the collective (masked, stacked) channel estimates."""
    batch, num_ues, num_aps, n = h_hat.shape
    masked = h_hat * cluster.a[None, :, :, None]
    out = np.zeros_like(h_hat)
    for members, rep in support.groups:
        aps = support.support_aps[rep]
        if aps.size == 0:
            continue
        stacked = masked[:, support.partners[rep]][:, :, aps, :].reshape(
            batch, len(support.partners[rep]), aps.size * n
        )
        # batched Gram via BLAS; plain einsum does not dispatch to matmul
        gram = eta * np.matmul(stacked.transpose(0, 2, 1), stacked.conj())
        gram += support.regularizer[rep]
        _check_condition(gram, sigma2_ul)
        own = masked[:, members][:, :, aps, :].reshape(batch, members.size, aps.size * n)
        sol = np.linalg.solve(gram, np.swapaxes(own, 1, 2))
        sol = np.swapaxes(sol, 1, 2)
        out[:, members[:, None], aps[None, :], :] = eta * sol.reshape(
            batch, members.size, aps.size, n
        )
    return out


def compute_directions(h_hat, precoder, cluster, err_cov, eta, sigma2_ul, support=None):
    """Dispatch to the selected precoding scheme for a batch of estimates."""
    if precoder == "mr":
        return mr_direction(h_hat, cluster)
    if precoder == "lpmmse":
        return lpmmse_direction(h_hat, err_cov, cluster, eta, sigma2_ul)
    if precoder == "pmmse":
        if support is None:
            support = pmmse_support(cluster, err_cov, eta, sigma2_ul)
        return pmmse_direction(h_hat, cluster, support, eta, sigma2_ul)
    raise ValueError(f"unknown precoder {precoder!r}")


def mr_norm_moments(stats, cluster, eta, tau_p) -> NormalizationMoments:
    """Analytic MR moments: E ||h_hat_{k,l}||^2 = eta tau_p tr(Theta_{k,l})."""
    per_ap = eta * tau_p * np.trace(stats.theta, axis1=-2, axis2=-1).real
    per_ap = per_ap * cluster.a
    return NormalizationMoments(per_ap=per_ap, collective=per_ap.sum(axis=1))


def sampled_norm_moments(
    stats, book, cluster, precoder, eta, sigma2_ul, rng, n_draws, support=None, chunk=256
) -> NormalizationMoments:
    """Sample-mean moments of ||wbar||^2 from a dedicated estimate stream."""
    from .training import draw_estimates_direct

    num_ues, num_aps = cluster.a.shape
    acc = np.zeros((num_ues, num_aps))
    done = 0
    while done < n_draws:
        batch = min(chunk, n_draws - done)
        h_hat = draw_estimates_direct(stats, book, rng, batch)
        wbar = compute_directions(
            h_hat, precoder, cluster, stats.err_cov, eta, sigma2_ul, support=support
        )
        acc += np.abs(wbar).__pow__(2).sum(axis=-1).sum(axis=0)
        done += batch
    per_ap = (acc / n_draws) * cluster.a
    return NormalizationMoments(per_ap=per_ap, collective=per_ap.sum(axis=1))


def distributed_power(betas, cluster, rho_max) -> np.ndarray:
    """Per-(UE, AP) power split proportional to sqrt(beta), full budget."""
    num_ues, num_aps = betas.shape
    rho = np.zeros((num_ues, num_aps))
    for ap in range(num_aps):
        users = cluster.served_by[ap]
        if users.size == 0:
            continue
        roots = np.sqrt(betas[users, ap])
        rho[users, ap] = rho_max * roots / roots.sum()
    return rho


def fractional_power(
    betas, cluster, moments: NormalizationMoments, rho_max, varsigma, kappa, zeta
) -> np.ndarray:
    """Centralized per-UE powers; the denominator caps the loaded AP.

    varpi_k is the largest fraction of UE k's power any single AP carries,
    taken from the direction moments.
    """
    num_ues = betas.shape[0]
    nu = np.zeros(num_ues)
    varpi = np.zeros(num_ues)
    for k in range(num_ues):
        aps = cluster.serving[k]
        if aps.size == 0:
            continue
        nu[k] = betas[k, aps].__pow__(varsigma).sum() ** kappa
        varpi[k] = moments.per_ap[k, aps].max() / moments.collective[k]
    rho = np.zeros(num_ues)
    for k in range(num_ues):
        aps = cluster.serving[k]
        if aps.size == 0:
            continue
        loads = [
            sum(nu[i] * varpi[i] ** (1.0 - zeta) for i in cluster.served_by[ap])
            for ap in aps
        ]
        rho[k] = rho_max * nu[k] * varpi[k] ** (-zeta) / max(loads)
    return rho


def _safe_scale(rho, moment, where):
    scale = np.zeros_like(rho, dtype=float)
    active = where & (rho > 0)
    if np.any(active & (moment <= 0)):
        bad = np.argwhere(active & (moment <= 0))
        raise PrecodingError(f"zero-direction precoder at (UE, AP) indices {bad.tolist()}")
    scale[active] = np.sqrt(rho[active] / moment[active])
    return scale


def normalize_distributed(wbar, rho_per_ap, moments: NormalizationMoments, cluster):
    """w_{k,l} = sqrt(rho_{k,l}) wbar_{k,l} / sqrt(E ||wbar_{k,l}||^2)."""
    scale = _safe_scale(rho_per_ap, moments.per_ap, cluster.a > 0)
    return wbar * scale[None, :, :, None]


def normalize_centralized(wbar, rho_per_ue, moments: NormalizationMoments, cluster):
    """w_k = sqrt(rho_k) wbar_k / sqrt(E ||wbar_k||^2), applied blockwise."""
    served = np.asarray([aps.size > 0 for aps in cluster.serving])
    scale = _safe_scale(rho_per_ue, moments.collective, served)
    return wbar * scale[None, :, None, None]
