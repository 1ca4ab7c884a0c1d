"""Skeleton graphs, spatial-label partitioning, and normalized adjacency stacks.

A skeleton is an undirected tree of joints with a designated root. Graph
convolution over it splits each node's D-hop neighborhood into three subsets
by hop distance to the root: same distance (including the node itself),
closer (toward the root), and farther (away from it). Each subset gets its
own adjacency matrix and weight matrix downstream.
"""

from dataclasses import dataclass

import numpy as np

# subset indices, fixed everywhere downstream
K_ROOT = 0         # same hop distance to root as the center node
K_CENTRIPETAL = 1  # closer to root
K_CENTRIFUGAL = 2  # farther from root
NUM_SUBSETS = 3


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint topology: undirected edges over `num_joints` nodes plus a root."""

    num_joints: int
    edges: tuple
    root: int
    joint_names: tuple = ()

    def __post_init__(self):
        n = self.num_joints
        if not 0 <= self.root < n:
            raise ValueError(f"root {self.root} outside [0, {n})")
        seen = set()
        for (a, b) in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) outside [0, {n})")
            if a == b:
                raise ValueError(f"self-loop edge ({a}, {b})")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add(key)
        if self.joint_names and len(self.joint_names) != n:
            raise ValueError("joint_names length must match num_joints")

    def adjacency(self):
        """Dense symmetric 0/1 adjacency, zero diagonal."""
        a = np.zeros((self.num_joints, self.num_joints))
        for (i, j) in self.edges:
            a[i, j] = 1.0
            a[j, i] = 1.0
        return a

    def hop_distances(self):
        """All-pairs shortest hop counts by BFS; unreachable stays at -1."""
        n = self.num_joints
        adj = [[] for _ in range(n)]
        for (i, j) in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        dist = np.full((n, n), -1, dtype=np.int64)
        for s in range(n):
            dist[s, s] = 0
            queue = [s]
            while queue:
                nxt = []
                for u in queue:
                    for v in adj[u]:
                        if dist[s, v] < 0:
                            dist[s, v] = dist[s, u] + 1
                            nxt.append(v)
                queue = nxt
        return dist


@dataclass(frozen=True)
class AdjacencyStack:
    """Normalized subset adjacencies, shape (3, N, N), ready for convolution."""

    matrices: np.ndarray
    graph: SkeletonGraph
    max_hops: int

    @property
    def num_joints(self):
        return self.graph.num_joints


@dataclass(frozen=True)
class PartMap:
    """Grouping of joints into named body parts (a partition of the joints)."""

    parts: tuple            # tuple of (name, tuple_of_joint_indices)
    part_edges: tuple       # edges between part indices
    root_part: int

    def __post_init__(self):
        covered = []
        for (_, joints) in self.parts:
            covered.extend(joints)
        if len(covered) != len(set(covered)):
            raise ValueError("parts overlap")

    @property
    def num_parts(self):
        return len(self.parts)

    def part_graph(self):
        return SkeletonGraph(
            num_joints=self.num_parts,
            edges=self.part_edges,
            root=self.root_part,
            joint_names=tuple(name for (name, _) in self.parts),
        )


def neighbor_sets(graph, max_hops):
    """Joints within `max_hops` of each joint, the joint itself included."""
    if max_hops < 0:
        raise ValueError(f"max_hops must be >= 0, got {max_hops}")
    dist = graph.hop_distances()
    return [
        frozenset(int(j) for j in np.flatnonzero((dist[i] >= 0) & (dist[i] <= max_hops)))
        for i in range(graph.num_joints)
    ]


def label_partition(graph, center, neighbor):
    """Subset label of `neighbor` as seen from `center`.

    Compares hop distance to the root: equal -> K_ROOT, closer ->
    K_CENTRIPETAL, farther -> K_CENTRIFUGAL. Unreachable counts as
    infinitely far, so inside a component the root cannot reach, every
    node is "equally far" and self-loops stay in the root subset.
    """
    dist = graph.hop_distances()[graph.root]
    dc, dn = dist[center], dist[neighbor]
    inf = float("inf")
    dc = inf if dc < 0 else dc
    dn = inf if dn < 0 else dn
    if dn == dc:
        return K_ROOT
    return K_CENTRIPETAL if dn < dc else K_CENTRIFUGAL


def build_adjacency_stack(graph, max_hops=1):
    """Partitioned, degree-normalized adjacencies for graph convolution.

    A_k[i, j] = 1 when j is within `max_hops` of i and j's label relative
    to i is k. Each A_k is normalized D_row^{-1/2} A_k D_col^{-1/2} where
    D_row holds receiver (row) degrees and D_col sender (column) degrees;
    zero degrees contribute zero, never NaN.
    """
    n = graph.num_joints
    nbrs = neighbor_sets(graph, max_hops)
    dist = graph.hop_distances()[graph.root]

    inf = float("inf")
    d = [inf if v < 0 else v for v in dist]
    raw = np.zeros((NUM_SUBSETS, n, n))
    for i in range(n):
        for j in nbrs[i]:
            if d[j] == d[i]:
                k = K_ROOT
            elif d[j] < d[i]:
                k = K_CENTRIPETAL
            else:
                k = K_CENTRIFUGAL
            raw[k, i, j] = 1.0

    out = np.zeros_like(raw)
    for k in range(NUM_SUBSETS):
        row_deg = raw[k].sum(axis=1)
        col_deg = raw[k].sum(axis=0)
        r = np.where(row_deg > 0, 1.0 / np.sqrt(np.maximum(row_deg, 1.0e-300)), 0.0)
        c = np.where(col_deg > 0, 1.0 / np.sqrt(np.maximum(col_deg, 1.0e-300)), 0.0)
        out[k] = r[:, None] * raw[k] * c[None, :]
    return AdjacencyStack(matrices=out, graph=graph, max_hops=max_hops)


def build_part_graph(part_map):
    """Graph whose nodes are body parts, for the coarse skeleton stream."""
    return part_map.part_graph()


# -- presets -----------------------------------------------------------------

BODY15_NAMES = (
    "pelvis", "torso", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)

BODY15 = SkeletonGraph(
    num_joints=15,
    edges=(
        (0, 1), (1, 2),
        (1, 3), (3, 4), (4, 5),
        (1, 6), (6, 7), (7, 8),
        (0, 9), (9, 10), (10, 11),
        (0, 12), (12, 13), (13, 14),
    ),
    root=0,
    joint_names=BODY15_NAMES,
)

BODY15_PARTS = PartMap(
    parts=(
        ("torso", (0, 1, 2)),
        ("l_arm", (3, 4, 5)),
        ("r_arm", (6, 7, 8)),
        ("l_leg", (9, 10, 11)),
        ("r_leg", (12, 13, 14)),
    ),
    part_edges=((0, 1), (0, 2), (0, 3), (0, 4)),
    root_part=0,
)

# 25-joint capture-device layout, joints 0-based, spine-middle root
NTU25 = SkeletonGraph(
    num_joints=25,
    edges=(
        (0, 1), (1, 20), (2, 20), (3, 2),
        (4, 20), (5, 4), (6, 5), (7, 6),
        (8, 20), (9, 8), (10, 9), (11, 10),
        (12, 0), (13, 12), (14, 13), (15, 14),
        (16, 0), (17, 16), (18, 17), (19, 18),
        (21, 22), (22, 7), (23, 24), (24, 11),
    ),
    root=20,
)

NTU25_PARTS = PartMap(
    parts=(
        ("torso", (0, 1, 2, 3, 20)),
        ("l_arm", (4, 5, 6, 7, 21, 22)),
        ("r_arm", (8, 9, 10, 11, 23, 24)),
        ("l_leg", (12, 13, 14, 15)),
        ("r_leg", (16, 17, 18, 19)),
    ),
    part_edges=((0, 1), (0, 2), (0, 3), (0, 4)),
    root_part=0,
)

GRAPH_PRESETS = {"body15": (BODY15, BODY15_PARTS), "ntu25": (NTU25, NTU25_PARTS)}


def get_preset(name):
    try:
        return GRAPH_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown skeleton preset {name!r}; "
                         f"choose from {sorted(GRAPH_PRESETS)}") from None
