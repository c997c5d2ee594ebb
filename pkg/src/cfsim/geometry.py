"""Network geometry: AP/UE deployment and large-scale propagation.

Generates hard-core AP placements on a square (optionally wrap-around)
area, correlated log-normal shadowing, 3GPP UMi street-canyon NLOS path
loss, and the per-link spatial correlation matrices of a uniform linear
array under Gaussian local scattering.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Rounds of plain uniform redrawing before switching to pair separation.
# At the default packing (min distance sqrt(A/L), i.e. disk fraction pi/4)
# redrawing alone never terminates, so it only serves sparse configurations.
_REDRAW_ROUNDS = 100


class PlacementError(RuntimeError):
    """Hard-core AP placement did not reach the minimum separation."""


@dataclass(frozen=True)
class DeploymentArea:
    """Square coverage area; `wrap` turns on toroidal distances."""

    side_length: float  # m
    wrap: bool = True

    def __post_init__(self):
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")


@dataclass
class NetworkSnapshot:
    """One network drop: positions plus all large-scale statistics.

    `covariances[k, l]` is the N x N Hermitian PSD matrix of the channel
    between UE k and AP l; `betas[k, l] = trace(covariances[k, l]) / N`.
    `cov_sqrt` caches the PSD square roots used for channel sampling.
    """

    area: DeploymentArea
    ap_positions: np.ndarray  # (L, 2) m
    ue_positions: np.ndarray  # (K, 2) m
    ap_height: float  # m
    ue_height: float  # m
    covariances: np.ndarray  # (K, L, N, N) complex
    betas: np.ndarray  # (K, L) linear gain
    cov_sqrt: np.ndarray = field(repr=False, default=None)

    @property
    def num_aps(self):
        return self.ap_positions.shape[0]

    @property
    def num_ues(self):
        return self.ue_positions.shape[0]

    @property
    def num_antennas(self):
        return self.covariances.shape[-1]


def wrapped_offsets(p, q, area: DeploymentArea) -> np.ndarray:
    """Displacement p - q mapped to the nearest torus image.

    Per-axis wrapping is equivalent to minimizing over the 3 x 3 grid of
    translated copies because the squared distance separates by axis.
    """
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    if area.wrap:
        s = area.side_length
        d = (d + 0.5 * s) % s - 0.5 * s
    return d


def wrapped_distance(p, q, area: DeploymentArea) -> float:
    return float(np.linalg.norm(wrapped_offsets(p, q, area)))


def pairwise_wrapped_distances(pts_a, pts_b, area: DeploymentArea) -> np.ndarray:
    """All wrapped distances between two point sets, shape (A, B)."""
    d = np.asarray(pts_a, float)[:, None, :] - np.asarray(pts_b, float)[None, :, :]
    if area.wrap:
        s = area.side_length
        d = (d + 0.5 * s) % s - 0.5 * s
    return np.sqrt((d**2).sum(axis=-1))


def min_pairwise_distance(points, area: DeploymentArea) -> float:
    dist = pairwise_wrapped_distances(points, points, area)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


def place_aps_hcpp(
    area: DeploymentArea, num_aps: int, rng: np.random.Generator, max_rounds: int = 10_000
) -> np.ndarray:
    """Place APs with hard-core minimum separation sqrt(area / L).

    Starts from uniform draws and first redraws violating APs.  Because
    the target separation corresponds to a disk packing fraction of pi/4,
    redrawing cannot terminate on its own, so remaining rounds move each
    violating pair apart along its axis until every wrapped pairwise
    distance reaches d_min.  Deterministic for a given generator state.

    For a few small AP counts (e.g. 2, 3, 5, 6, 10 on a square torus) the
    densest packing leaves no slack above sqrt(area / L), so no random
    procedure can terminate; those counts fail with PlacementError.
    """
    if num_aps < 1:
        raise ValueError("num_aps must be >= 1")
    side = area.side_length
    positions = rng.uniform(0.0, side, size=(num_aps, 2))
    if num_aps == 1:
        return positions
    d_min = np.sqrt(side * side / num_aps)
    target = 1.01 * d_min  # separate slightly past the bound to avoid cycling

    best = -np.inf
    stalled = 0
    for round_idx in range(max_rounds):
        delta = positions[:, None, :] - positions[None, :, :]
        if area.wrap:
            delta = (delta + 0.5 * side) % side - 0.5 * side
        dist = np.sqrt((delta**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        current = dist.min()
        if current >= d_min:
            return positions
        if current > best + 1e-6 * d_min:
            best = current
            stalled = 0
        else:
            stalled += 1
        violators = dist.min(axis=1) < d_min
        if round_idx < _REDRAW_ROUNDS or stalled > 150:
            positions[violators] = rng.uniform(0.0, side, size=(int(violators.sum()), 2))
            stalled = 0
            continue
        rows, cols = np.where(np.triu(dist < d_min, k=1))
        shift = np.zeros_like(positions)
        for i, j in zip(rows, cols):
            gap = dist[i, j]
            if gap < 1e-9:
                angle = rng.uniform(0.0, 2.0 * np.pi)
                direction = np.array([np.cos(angle), np.sin(angle)])
                gap = 1.0
            else:
                direction = delta[i, j] / gap
            push = 0.5 * (target - gap) * direction
            shift[i] += push
            shift[j] -= push
        positions = (positions + shift) % side

    achieved = min_pairwise_distance(positions, area)
    raise PlacementError(
        f"hard-core placement of {num_aps} APs did not converge in {max_rounds} rounds: "
        f"min distance {achieved:.3f} m < required {d_min:.3f} m"
    )


def umi_nlos_path_loss_db(d3d, fc_hz: float, ap_height: float, ue_height: float):
    """3GPP TR 38.901 UMi street-canyon NLOS path loss in dB.

    Uses the standard form max(PL_LOS, PL'_NLOS) with the LOS dual-slope
    model and its effective breakpoint (environment height 1 m).
    """
    d3d = np.asarray(d3d, dtype=float)
    if np.any(d3d <= 0):
        raise ValueError("3-D distance must be positive")
    fc_ghz = fc_hz / 1e9
    dh = ap_height - ue_height
    d2d = np.sqrt(np.maximum(d3d**2 - dh**2, 0.0))
    d_bp = 4.0 * (ap_height - 1.0) * (ue_height - 1.0) * fc_hz / SPEED_OF_LIGHT
    pl_los_near = 32.4 + 21.0 * np.log10(d3d) + 20.0 * np.log10(fc_ghz)
    pl_los_far = (
        32.4
        + 40.0 * np.log10(d3d)
        + 20.0 * np.log10(fc_ghz)
        - 9.5 * np.log10(d_bp**2 + dh**2)
    )
    pl_los = np.where(d2d <= d_bp, pl_los_near, pl_los_far)
    pl_nlos = (
        22.4
        + 35.3 * np.log10(d3d)
        + 21.3 * np.log10(fc_ghz)
        - 0.3 * (ue_height - 1.5)
    )
    return np.maximum(pl_los, pl_nlos)


def large_scale_gain(d3d, config, shadow_db=0.0):
    """Linear channel gain 10^((-PL + shadowing)/10) at 3-D distance d3d."""
    pl = umi_nlos_path_loss_db(d3d, config.fc, config.ap_height, config.ue_height)
    return 10.0 ** ((-pl + shadow_db) / 10.0)


def _psd_factor(matrix, rel_tol=1e-10):
    """Square root of a Hermitian PSD matrix stack via eigendecomposition.

    Eigenvalues below -rel_tol * trace raise; small negatives are clipped.
    """
    matrix = 0.5 * (matrix + np.swapaxes(matrix.conj(), -1, -2))
    eigval, eigvec = np.linalg.eigh(matrix)
    traces = np.trace(matrix, axis1=-2, axis2=-1).real
    floor = -rel_tol * np.maximum(traces, 1e-300)
    if np.any(eigval < floor[..., None]):
        raise ValueError("matrix is not positive semidefinite within tolerance")
    eigval = np.maximum(eigval, 0.0)
    return (eigvec * np.sqrt(eigval)[..., None, :]) @ np.swapaxes(eigvec.conj(), -1, -2)


def sample_correlated_shadowing(
    ue_positions,
    area: DeploymentArea,
    num_aps: int,
    sigma_sf_db: float,
    decorr_distance: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Shadow fading in dB, shape (K, L).

    Per AP the vector over UEs is zero-mean Gaussian with standard
    deviation sigma_sf_db and correlation exp(-d / decorr_distance)
    between UEs; draws are independent across APs.
    """
    if sigma_sf_db < 0:
        raise ValueError("sigma_sf_db must be nonnegative")
    num_ues = len(ue_positions)
    if sigma_sf_db == 0:
        return np.zeros((num_ues, num_aps))
    dist = pairwise_wrapped_distances(ue_positions, ue_positions, area)
    cov = sigma_sf_db**2 * np.exp(-dist / decorr_distance)
    factor = _psd_factor(cov).real
    return factor @ rng.standard_normal((num_ues, num_aps))


_GH_CACHE = {}


def _gauss_hermite(n_nodes):
    if n_nodes not in _GH_CACHE:
        _GH_CACHE[n_nodes] = hermgauss(n_nodes)
    return _GH_CACHE[n_nodes]


def spatial_correlation_matrix(
    azimuth: float, asd: float, beta: float, num_antennas: int, n_quad: int = 64
) -> np.ndarray:
    """ULA correlation matrix under Gaussian local scattering.

    Entry (m, n) is beta * E{exp(j*pi*(m - n)*sin(phi))} with phi Gaussian
    around `azimuth` with standard deviation `asd` (radians), for
    half-wavelength element spacing.  The expectation is evaluated with
    Gauss-Hermite quadrature.
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    lags = _correlation_lags(
        np.asarray([[azimuth]]), asd, num_antennas, n_quad
    )[0, 0]
    return beta * _toeplitz_from_lags(lags)


def _correlation_lags(azimuths, asd, num_antennas, n_quad=64):
    """Normalized array correlation at lags 0..N-1 for each azimuth.

    Returns an array of shape azimuths.shape + (N,).
    """
    nodes, weights = _gauss_hermite(n_quad)
    angles = azimuths[..., None] + np.sqrt(2.0) * asd * nodes  # (..., Q)
    sines = np.sin(angles)
    lags = np.empty(azimuths.shape + (num_antennas,), dtype=complex)
    lags[..., 0] = 1.0
    norm_weights = weights / np.sqrt(np.pi)
    for lag in range(1, num_antennas):
        lags[..., lag] = np.exp(1j * np.pi * lag * sines) @ norm_weights
    return lags


def _toeplitz_from_lags(lags):
    """Hermitian Toeplitz matrix from first-column lags r_0..r_{N-1}."""
    n = lags.shape[-1]
    idx = np.subtract.outer(np.arange(n), np.arange(n))
    mat = lags[..., np.abs(idx)]
    return np.where(idx >= 0, mat, mat.conj())


def generate_snapshot(config, rng: np.random.Generator) -> NetworkSnapshot:
    """Draw one network setup: placement, shadowing, gains, covariances."""
    area = DeploymentArea(config.area_side, wrap=config.wrap)
    ap_pos = place_aps_hcpp(area, config.L, rng)
    ue_pos = rng.uniform(0.0, area.side_length, size=(config.K, 2))

    shadow_db = sample_correlated_shadowing(
        ue_pos, area, config.L, config.shadow_std_db, config.shadow_decorr, rng
    )
    delta = ue_pos[:, None, :] - ap_pos[None, :, :]
    if area.wrap:
        s = area.side_length
        delta = (delta + 0.5 * s) % s - 0.5 * s
    d2d = np.sqrt((delta**2).sum(axis=-1))
    d3d = np.sqrt(d2d**2 + (config.ap_height - config.ue_height) ** 2)
    betas = large_scale_gain(d3d, config, shadow_db)

    azimuths = np.arctan2(delta[..., 1], delta[..., 0])  # AP -> UE direction
    lags = _correlation_lags(azimuths, np.deg2rad(config.asd_deg), config.N)
    covariances = betas[..., None, None] * _toeplitz_from_lags(lags)
    cov_sqrt = _psd_factor(covariances)

    return NetworkSnapshot(
        area=area,
        ap_positions=ap_pos,
        ue_positions=ue_pos,
        ap_height=config.ap_height,
        ue_height=config.ue_height,
        covariances=covariances,
        betas=betas,
        cov_sqrt=cov_sqrt,
    )
