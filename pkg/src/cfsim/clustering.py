"""User-centric AP-UE association and the per-UE AP row mapping."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClusterMap:
    """Serving relation between UEs and APs.

    `serving[k]` lists the APs of UE k in descending large-scale gain
    (request order); `served_by[l]` lists the UEs AP l serves;
    `row_of[k, l]` is the 0-based code-matrix row AP l uses for UE k
    (-1 when AP l does not serve UE k), assigned by ascending AP index.
    `degraded` lists UEs that ended up with fewer than L_k APs.
    """

    a: np.ndarray  # (K, L) 0/1
    serving: list  # K arrays of AP indices
    served_by: list  # L arrays of UE indices
    row_of: np.ndarray  # (K, L) int
    cluster_size: int  # requested L_k
    degraded: list = field(default_factory=list)

    @property
    def num_ues(self):
        return self.a.shape[0]

    @property
    def num_aps(self):
        return self.a.shape[1]


def build_clusters(betas: np.ndarray, cluster_size: int, k_max: int) -> ClusterMap:
    """Single-pass request/accept association.

    UEs request their `cluster_size` strongest APs in descending gain,
    processed in descending order of their best gain.  A full AP replaces
    its weakest served UE when the requester is stronger; an evicted UE
    does not re-request elsewhere.
    """
    if cluster_size < 1:
        raise ValueError("cluster_size must be >= 1")
    num_ues, num_aps = betas.shape
    if cluster_size > num_aps:
        raise ValueError("cluster_size cannot exceed the number of APs")
    serving = [[] for _ in range(num_ues)]
    served_by = [[] for _ in range(num_aps)]

    ue_order = np.argsort(-betas.max(axis=1), kind="stable")
    for k in ue_order:
        candidates = np.argsort(-betas[k], kind="stable")[:cluster_size]
        for ap in candidates:
            ap = int(ap)
            if len(served_by[ap]) < k_max:
                served_by[ap].append(int(k))
                serving[k].append(ap)
                continue
            weakest = min(served_by[ap], key=lambda i: (betas[i, ap], -i))
            if betas[k, ap] > betas[weakest, ap]:
                served_by[ap].remove(weakest)
                serving[weakest].remove(ap)
                served_by[ap].append(int(k))
                serving[k].append(ap)

    a = np.zeros((num_ues, num_aps), dtype=np.int8)
    serving_arrays = []
    for k in range(num_ues):
        aps = np.array(sorted(serving[k], key=lambda ap: -betas[k, ap]), dtype=int)
        serving_arrays.append(aps)
        a[k, aps] = 1
    served_arrays = [np.array(sorted(u), dtype=int) for u in served_by]
    degraded = [k for k in range(num_ues) if serving_arrays[k].size < cluster_size]

    cluster = ClusterMap(
        a=a,
        serving=serving_arrays,
        served_by=served_arrays,
        row_of=np.full((num_ues, num_aps), -1, dtype=int),
        cluster_size=cluster_size,
        degraded=degraded,
    )
    cluster.row_of = row_mapping(cluster)
    return cluster


def row_mapping(cluster: ClusterMap) -> np.ndarray:
    """Assign each serving AP a code-matrix row by ascending AP index."""
    row_of = np.full((cluster.num_ues, cluster.num_aps), -1, dtype=int)
    for k, aps in enumerate(cluster.serving):
        for row, ap in enumerate(np.sort(aps)):
            row_of[k, ap] = row
    return row_of


def check_cluster_invariants(cluster: ClusterMap, k_max: int):
    """Raise AssertionError when the map is internally inconsistent."""
    for l, users in enumerate(cluster.served_by):
        assert len(users) <= k_max, f"AP {l} serves {len(users)} > K_max"
    for k, aps in enumerate(cluster.serving):
        rows = np.sort(cluster.row_of[k, aps])
        assert np.array_equal(rows, np.arange(len(aps))), f"row map of UE {k} is not a bijection"
        for ap in aps:
            assert cluster.a[k, ap] == 1
            assert k in cluster.served_by[ap]
    assert int(cluster.a.sum()) == sum(len(aps) for aps in cluster.serving)
