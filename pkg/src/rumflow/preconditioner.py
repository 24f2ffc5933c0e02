"""Spanning-tree preconditioner for the reduced Newton systems.

The preconditioner is ``M = A_m' * max(D_m, I) * A_m`` where ``A_m`` stacks
the co-tree rows of KB and ``D_m`` the matching barrier entries. ``A_m`` is
invertible exactly when the co-tree complement is a spanning tree of the
subset lattice, in which case a flow supported on the co-tree extends
uniquely to a conservative flow with zero total flow. Both the extension and
its exact adjoint are single passes over a leaf-elimination schedule, so one
``M^{-1}`` application costs two tree traversals plus two subset transforms.

Tree selection: Kruskal minimum spanning tree under weights ``max(d, 1)``
with ties broken by ascending canonical edge index, which pushes the large
barrier entries into the co-tree and makes every build reproducible.

Numerics: barrier entries span many orders of magnitude, and the tree passes
smear the large scales into small-scale edges. The apply paths therefore
accumulate in extended precision (x86 80-bit long double) and cast back to
float64 on return; inputs and outputs stay float64.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeIndexer
from . import operators as ops

_ACC = np.longdouble


class TreeCertificateError(ValueError):
    """The proposed tree/co-tree partition does not certify invertibility."""


@dataclass(frozen=True)
class SpanningTree:
    """Tree/co-tree split of the lattice edges plus the elimination schedule.

    ``sched_edges[i]`` is the tree edge solved at step i using the
    conservation condition at ``sched_vertices[i]``; the slice
    ``sched_inc[sched_ptr[i]:sched_ptr[i+1]]`` lists every other lattice edge
    incident to that vertex, with ``sched_sign[...]`` carrying the products
    sigma(u, e') * sigma(u, e_i). Immutable and shareable; the passes below
    never mutate it.
    """

    indexer: LatticeIndexer
    tree_edges: np.ndarray
    cotree_edges: np.ndarray
    sched_edges: np.ndarray
    sched_vertices: np.ndarray
    sched_ptr: np.ndarray
    sched_inc: np.ndarray
    sched_sign: np.ndarray

    @property
    def num_tree_edges(self) -> int:
        return len(self.tree_edges)


def _build_schedule(indexer: LatticeIndexer, tree_edges: np.ndarray):
    """Leaf-elimination order over the tree; rejects cycles/disconnection."""
    nv = indexer.num_vertices
    upper = indexer.pair_subset[tree_edges]
    lower = indexer.edge_lower[tree_edges]

    deg = np.zeros(nv, dtype=np.int64)
    np.add.at(deg, upper, 1)
    np.add.at(deg, lower, 1)

    # tree adjacency as CSR over local tree-edge ids
    ends = np.concatenate([upper, lower])
    order = np.argsort(ends, kind="stable")
    adj_edge = np.concatenate([np.arange(len(tree_edges))] * 2)[order].tolist()
    adj_ptr = np.zeros(nv + 1, dtype=np.int64)
    np.add.at(adj_ptr, ends + 1, 1)
    np.cumsum(adj_ptr, out=adj_ptr)
    adj_ptr = adj_ptr.tolist()

    upper_l = upper.tolist()
    lower_l = lower.tolist()
    deg_l = deg.tolist()

    queue = deque(v for v in range(nv) if deg_l[v] == 1)
    done = [False] * len(tree_edges)
    sched_edges: list[int] = []
    sched_vertices: list[int] = []
    while queue:
        u = queue.popleft()
        if deg_l[u] != 1:
            continue
        e_local = -1
        for k in range(adj_ptr[u], adj_ptr[u + 1]):
            if not done[adj_edge[k]]:
                e_local = adj_edge[k]
                break
        if e_local < 0:  # pragma: no cover - guarded by deg bookkeeping
            continue
        done[e_local] = True
        sched_edges.append(int(tree_edges[e_local]))
        sched_vertices.append(u)
        deg_l[u] -= 1
        v = lower_l[e_local] if upper_l[e_local] == u else upper_l[e_local]
        deg_l[v] -= 1
        if deg_l[v] == 1:
            queue.append(v)

    if len(sched_edges) != len(tree_edges):
        raise TreeCertificateError(
            "leaf elimination stalled: some vertex never had exactly one "
            "unknown edge, so the proposed co-tree complement is not a tree"
        )
    return sched_edges, sched_vertices


def spanning_tree_from_cotree(indexer: LatticeIndexer, cotree_edges) -> SpanningTree:
    """Assemble the schedule for an explicit co-tree; validates the certificate."""
    cotree = np.unique(np.asarray(cotree_edges, dtype=np.int64))
    if len(cotree) and (cotree[0] < 0 or cotree[-1] >= indexer.num_pairs):
        raise TreeCertificateError("co-tree edge index out of range")
    if len(cotree) != indexer.num_reduced:
        raise TreeCertificateError(
            f"co-tree must have {indexer.num_reduced} edges, got {len(cotree)}"
        )
    in_cotree = np.zeros(indexer.num_pairs, dtype=bool)
    in_cotree[cotree] = True
    tree = np.nonzero(~in_cotree)[0]

    sched_edges, sched_vertices = _build_schedule(indexer, tree)

    ptr = [0]
    inc: list[int] = []
    sign: list[float] = []
    for e_i, u in zip(sched_edges, sched_vertices):
        sig_ei = 1.0 if int(indexer.pair_subset[e_i]) == u else -1.0
        for e, s in indexer.incident_edges(u):
            if e == e_i:
                continue
            inc.append(e)
            sign.append(s * sig_ei)
        ptr.append(len(inc))

    return SpanningTree(
        indexer=indexer,
        tree_edges=tree,
        cotree_edges=cotree,
        sched_edges=np.asarray(sched_edges, dtype=np.int64),
        sched_vertices=np.asarray(sched_vertices, dtype=np.int64),
        sched_ptr=np.asarray(ptr, dtype=np.int64),
        sched_inc=np.asarray(inc, dtype=np.int64),
        sched_sign=np.asarray(sign, dtype=_ACC),
    )


def build_tree(indexer: LatticeIndexer, d) -> SpanningTree:
    """Kruskal MST under weights max(d, 1); co-tree keeps the heavy edges."""
    d = ops.check_barrier_diag(indexer, d)
    w = np.maximum(d, 1.0)
    order = np.argsort(w, kind="stable").tolist()  # ties: ascending edge index

    parent = list(range(indexer.num_vertices))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    upper_all = indexer.pair_subset.tolist()
    lower_all = indexer.edge_lower.tolist()
    tree: list[int] = []
    needed = indexer.num_vertices - 1
    for e in order:
        ra, rb = find(upper_all[e]), find(lower_all[e])
        if ra != rb:
            parent[ra] = rb
            tree.append(e)
            if len(tree) == needed:
                break

    in_tree = np.zeros(indexer.num_pairs, dtype=bool)
    in_tree[np.asarray(tree, dtype=np.int64)] = True
    cotree = np.nonzero(~in_tree)[0]
    return spanning_tree_from_cotree(indexer, cotree)


def verify_cotree(tree: SpanningTree) -> bool:
    """Certificate: the co-tree complement is a spanning tree (size, acyclic, connected)."""
    indexer = tree.indexer
    edges = tree.tree_edges
    if len(edges) != indexer.num_vertices - 1:
        return False
    parent = list(range(indexer.num_vertices))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in edges.tolist():
        ra, rb = find(int(indexer.pair_subset[e])), find(int(indexer.edge_lower[e]))
        if ra == rb:
            return False
        parent[ra] = rb
    root = find(0)
    return all(find(v) == root for v in range(indexer.num_vertices))


# ---------------------------------------------------------------------------
# extension passes
# ---------------------------------------------------------------------------


def _forward_sweep(tree: SpanningTree, kappa: np.ndarray) -> None:
    ptr = tree.sched_ptr
    inc = tree.sched_inc
    sign = tree.sched_sign
    edges = tree.sched_edges
    for i in range(len(edges)):
        lo, hi = ptr[i], ptr[i + 1]
        kappa[edges[i]] = -np.dot(sign[lo:hi], kappa[inc[lo:hi]])


def _adjoint_sweep(tree: SpanningTree, kbar: np.ndarray) -> None:
    ptr = tree.sched_ptr
    inc = tree.sched_inc
    sign = tree.sched_sign
    edges = tree.sched_edges
    for i in range(len(edges) - 1, -1, -1):
        lo, hi = ptr[i], ptr[i + 1]
        kbar[inc[lo:hi]] -= sign[lo:hi] * kbar[edges[i]]


def _out_dtype(vec: np.ndarray):
    """float64 unless the caller passed extended precision in."""
    return _ACC if vec.dtype == _ACC else np.float64


def forward_ext(tree: SpanningTree, cotree_values) -> np.ndarray:
    """Unique conservative zero-total-flow extension of co-tree values.

    One sweep of the schedule; each step solves the single unknown tree edge
    from the conservation condition at its leaf vertex.
    """
    indexer = tree.indexer
    v = np.asarray(cotree_values)
    if v.shape != (len(tree.cotree_edges),):
        raise ops.OperatorError(
            f"co-tree values must have shape ({len(tree.cotree_edges)},)"
        )
    kappa = np.zeros(indexer.num_pairs, dtype=_ACC)
    kappa[tree.cotree_edges] = v
    _forward_sweep(tree, kappa)
    return kappa.astype(_out_dtype(v))


def adjoint_ext(tree: SpanningTree, q) -> np.ndarray:
    """Exact transpose of :func:`forward_ext`; reverse sweep, restricted to P."""
    q = np.asarray(q)
    if q.shape != (tree.indexer.num_pairs,):
        raise ops.OperatorError(
            f"pair vector must have shape ({tree.indexer.num_pairs},)"
        )
    kbar = q.astype(_ACC)
    _adjoint_sweep(tree, kbar)
    return kbar[tree.cotree_edges].astype(_out_dtype(q))


def _check_d(indexer: LatticeIndexer, d) -> np.ndarray:
    d = np.asarray(d)
    if d.shape != (indexer.num_pairs,) or not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise ops.OperatorError("barrier diagonal must be finite, positive, length N")
    return d.astype(_ACC)


def apply_M(tree: SpanningTree, d, v) -> np.ndarray:
    """M v = A_m' max(D_m, I) A_m v via the same operator compositions."""
    indexer = tree.indexer
    dl = _check_d(indexer, d)
    v = np.asarray(v)
    if v.shape != (indexer.num_reduced,):
        raise ops.OperatorError(f"reduced vector must have shape ({indexer.num_reduced},)")
    flow = ops.lattice_transform(
        indexer, _embed_reduced(indexer, v.astype(_ACC)), "superset_mobius"
    )
    w = np.zeros(indexer.num_pairs, dtype=_ACC)
    ce = tree.cotree_edges
    w[ce] = np.maximum(dl[ce], 1.0) * flow[ce]
    back = ops.lattice_transform(indexer, w, "subset_mobius")
    return _restrict_reduced(indexer, back).astype(_out_dtype(v))


def apply_M_inv(tree: SpanningTree, d, v) -> np.ndarray:
    """u3 = A_m^{-1} max(D_m,I)^{-1} A_m^{-T} v, all matrix-free.

    A_m^{-T} = L_ext' (K^{-1})' R'; A_m^{-1} = R K^{-1} L_ext; the middle step
    divides by max(d, 1) on co-tree edges only.
    """
    indexer = tree.indexer
    dl = _check_d(indexer, d)
    v = np.asarray(v)
    if v.shape != (indexer.num_reduced,):
        raise ops.OperatorError(f"reduced vector must have shape ({indexer.num_reduced},)")

    padded = np.zeros(indexer.num_pairs, dtype=_ACC)
    padded[indexer.reduced_to_dense] = v
    kbar = ops.lattice_transform(indexer, padded, "subset_zeta")
    _adjoint_sweep(tree, kbar)

    ce = tree.cotree_edges
    u2 = kbar[ce] / np.maximum(dl[ce], 1.0)

    kappa = np.zeros(indexer.num_pairs, dtype=_ACC)
    kappa[ce] = u2
    _forward_sweep(tree, kappa)
    out = ops.lattice_transform(indexer, kappa, "superset_zeta")
    return out[indexer.reduced_to_dense].astype(_out_dtype(v))


def _embed_reduced(indexer: LatticeIndexer, xi: np.ndarray) -> np.ndarray:
    """B in the accumulation dtype (bincount only supports float64)."""
    out = np.zeros(indexer.num_pairs, dtype=xi.dtype)
    out[indexer.reduced_to_dense] = xi
    sums = np.zeros(indexer.num_sets, dtype=xi.dtype)
    np.add.at(sums, indexer.reduced_subset - 1, xi)
    out[indexer.maxpair_of_subset[1:]] = -sums
    return out


def _restrict_reduced(indexer: LatticeIndexer, rho: np.ndarray) -> np.ndarray:
    """B' in the accumulation dtype."""
    return rho[indexer.reduced_to_dense] - rho[indexer.reduced_maxpair]
