"""Differential space-time block coding: codes, encoding, detection.

Code matrices are square and unitary for unit-modulus symbols; each
serving AP transmits one row of the running information matrix, so the
receiver sees an inner product of consecutive blocks in which the per-AP
oscillator phases cancel.  The companion integer design pairs decouple
maximum-likelihood detection into independent per-symbol decisions.
"""

from dataclasses import dataclass

import numpy as np

from .channel import complex_normal

SUPPORTED_CLUSTER_SIZES = (2, 4)
N_SYMBOLS = {2: 2, 4: 3}
RENORM_INTERVAL = 64  # encodes between polar re-orthonormalizations


@dataclass(frozen=True)
class AmicableDesignSet:
    """Integer matrix pairs {A_n}, {B_n} that split a code matrix as
    X = sum_n (Re s_n A_n + j Im s_n B_n) / sqrt(n_s)."""

    a: np.ndarray  # (n_s, L_k, L_k) int
    b: np.ndarray  # (n_s, L_k, L_k) int

    @property
    def n_symbols(self) -> int:
        return self.a.shape[0]

    @property
    def cluster_size(self) -> int:
        return self.a.shape[1]


def n_symbols(cluster_size: int) -> int:
    if cluster_size not in N_SYMBOLS:
        raise ValueError(f"supported cluster sizes are {SUPPORTED_CLUSTER_SIZES}")
    return N_SYMBOLS[cluster_size]


def amicable_designs(cluster_size: int) -> AmicableDesignSet:
    if cluster_size == 2:
        a = np.array([[[1, 0], [0, -1]], [[0, 1], [1, 0]]])
        b = np.array([[[1, 0], [0, 1]], [[0, -1], [1, 0]]])
    elif cluster_size == 4:
        a = np.array(
            [
                np.eye(4, dtype=int),
                [[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]],
                [[0, 0, 0, -1], [0, 0, 1, 0], [0, -1, 0, 0], [1, 0, 0, 0]],
            ]
        )
        b = np.array(
            [
                np.diag([1, 1, -1, -1]),
                [[0, 0, 1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, -1, 0, 0]],
                [[0, 0, 0, -1], [0, 0, -1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]],
            ]
        )
    else:
        raise ValueError(f"supported cluster sizes are {SUPPORTED_CLUSTER_SIZES}")
    return AmicableDesignSet(a=a, b=b)


def check_amicable_conditions(designs: AmicableDesignSet):
    """Verify the defining identities exactly in integer arithmetic."""
    a, b = designs.a, designs.b
    size = designs.cluster_size
    eye = np.eye(size, dtype=a.dtype)
    for n in range(designs.n_symbols):
        assert np.array_equal(a[n] @ a[n].T, eye)
        assert np.array_equal(b[n] @ b[n].T, eye)
        for m in range(designs.n_symbols):
            if m != n:
                assert np.array_equal(a[n] @ a[m].T, -(a[m] @ a[n].T))
                assert np.array_equal(b[n] @ b[m].T, -(b[m] @ b[n].T))
            assert np.array_equal(a[n] @ b[m].T, b[m] @ a[n].T)


def build_code_matrix(symbols, cluster_size: int, designs: AmicableDesignSet = None):
    """Map n_s unit-modulus symbols to the unitary L_k x L_k code matrix.

    Accepts a batch with symbols of shape (..., n_s) and returns
    (..., L_k, L_k).
    """
    symbols = np.asarray(symbols, dtype=complex)
    ns = n_symbols(cluster_size)
    if symbols.shape[-1] != ns:
        raise ValueError(f"expected {ns} symbols for cluster size {cluster_size}")
    if designs is None:
        designs = amicable_designs(cluster_size)
    real = np.einsum("...n,nij->...ij", symbols.real, designs.a)
    imag = np.einsum("...n,nij->...ij", symbols.imag, designs.b)
    return (real + 1j * imag) / np.sqrt(ns)


def differential_encode(state: np.ndarray, code_matrix: np.ndarray) -> np.ndarray:
    """Advance the information matrix: C^t = C^{t-1} X^t (batched)."""
    return state @ code_matrix


class EncoderBank:
    """Stacked per-UE information matrices advanced in lockstep.

    States start at the identity (the reference block) and are re-
    orthonormalized by polar projection every RENORM_INTERVAL encodes to
    bound numerical drift of the unitary product.
    """

    def __init__(self, num_ues: int, cluster_size: int):
        self.num_ues = num_ues
        self.cluster_size = cluster_size
        self.reset()

    def reset(self):
        self.states = np.broadcast_to(
            np.eye(self.cluster_size, dtype=complex),
            (self.num_ues, self.cluster_size, self.cluster_size),
        ).copy()
        self.t = 0
        self._since_renorm = 0

    def advance(self, code_matrices: np.ndarray) -> np.ndarray:
        self.states = differential_encode(self.states, code_matrices)
        self.t += 1
        self._since_renorm += 1
        if self._since_renorm >= RENORM_INTERVAL:
            u, _, vh = np.linalg.svd(self.states)
            self.states = u @ vh
            self._since_renorm = 0
        return self.states


def transmit_block(row_weights, states, sigma2_dl, rng) -> np.ndarray:
    """Received block per UE: y[k] = sum_i row_weights[k, i, :] @ C_i + noise.

    row_weights[k, i, m] is the effective scalar channel from the AP that
    carries row m of UE i's information matrix to UE k (zero for unused
    rows); the i = k slice holds the desired-signal couplings.
    """
    y = np.einsum("kim,imj->kj", row_weights, states)
    if sigma2_dl > 0:
        y = y + complex_normal(rng, y.shape, sigma2_dl)
    return y


def decision_statistics(y_now, y_prev, designs: AmicableDesignSet):
    """Soft symbol statistics from two consecutive blocks.

    Supports batched rows of shape (..., L_k); returns (u, v) of shape
    (..., n_s) with u_n = Re tr{A_n Y} and v_n = -Im tr{B_n Y} where
    Y = y_now^H y_prev.
    """
    outer = y_now.conj()[..., :, None] * y_prev[..., None, :]
    trace_a = np.einsum("nij,...ji->...n", designs.a, outer)
    trace_b = np.einsum("nij,...ji->...n", designs.b, outer)
    return trace_a.real, -trace_b.imag


def differential_detect(y_now, y_prev, designs: AmicableDesignSet, constellation):
    """Per-symbol ML decisions; returns (indices, degenerate_flag).

    Each symbol maximizes u_n Re(s) + v_n Im(s) over the constellation;
    ties take the lowest index, and an all-zero statistic raises the
    degenerate flag.
    """
    u, v = decision_statistics(y_now, y_prev, designs)
    scores = (
        u[..., None] * constellation.points.real
        + v[..., None] * constellation.points.imag
    )
    indices = np.argmax(scores, axis=-1)
    degenerate = bool(np.all(u == 0) and np.all(v == 0))
    return indices, degenerate


def joint_ml_codebook(constellation, cluster_size: int):
    """All code matrices of the constellation, plus their symbol indices."""
    ns = n_symbols(cluster_size)
    order = constellation.order
    grids = np.meshgrid(*([np.arange(order)] * ns), indexing="ij")
    index_tuples = np.stack([g.ravel() for g in grids], axis=1)  # (M^ns, ns)
    symbols = constellation.points[index_tuples]
    matrices = build_code_matrix(symbols, cluster_size)
    return matrices, index_tuples


def joint_ml_oracle(y_now, y_prev, codebook):
    """Exhaustive ML over all codewords: argmax Re tr{X y_now^H y_prev}.

    Returns (symbol_indices, metrics); ties resolve to the first codeword
    in lexicographic symbol order.
    """
    matrices, index_tuples = codebook
    outer = np.outer(np.conj(y_now), y_prev)
    metrics = np.einsum("cij,ji->c", matrices, outer).real
    best = int(np.argmax(metrics))
    return index_tuples[best], metrics
