"""Graph model shared by both protocols and the analysis engine.

A topology is an undirected connected graph plus a symmetric matrix of
per-edge propagation delays measured in oscillator periods.  On top of it
this module computes the exact maximal-clique cover, classifies shared
(gateway) versus local nodes, accumulates delays along minimum-delay paths,
and partitions nodes by total clique demand.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    AmbiguousPartition,
    CliqueExplosion,
    ConfigError,
    DelayOutOfRange,
    DisconnectedGraph,
    DuplicateEdge,
    SelfLoop,
)

DEFAULT_CLIQUE_CAP = 10_000


@dataclass(frozen=True)
class Topology:
    """Undirected connected graph with symmetric per-edge delays.

    ``edges`` holds normalized (i < j) pairs; ``delays`` is a dict keyed by
    those pairs with values in [0, 1).  Non-edges have no entry (delay 0).
    Instances are immutable and safe to share across concurrent runs.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    delays: dict[tuple[int, int], float] = field(repr=False)
    neighbors: tuple[tuple[int, ...], ...] = field(repr=False)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.delays

    def tau(self, i: int, j: int) -> float:
        """Edge delay; 0.0 on the diagonal and for non-edges."""
        if i == j:
            return 0.0
        return self.delays.get((min(i, j), max(i, j)), 0.0)

    def max_delay(self) -> float:
        return max(self.delays.values()) if self.delays else 0.0

    def min_delay(self) -> float:
        return min(self.delays.values()) if self.delays else 0.0

    def has_delays(self) -> bool:
        return any(t > 0.0 for t in self.delays.values())


def build_topology(node_count, edge_list, delay_list=None) -> Topology:
    """Validate and assemble a :class:`Topology`.

    ``delay_list`` aligns with ``edge_list``; omitted it defaults to all
    zeros (the no-delay regime).  Raises ``SelfLoop``, ``DuplicateEdge``,
    ``DelayOutOfRange`` or ``DisconnectedGraph`` on bad input.
    """
    if int(node_count) != node_count or node_count < 1:
        raise ConfigError(f"node_count must be a positive integer, got {node_count!r}")
    node_count = int(node_count)
    edge_list = list(edge_list)
    if delay_list is None:
        delay_list = [0.0] * len(edge_list)
    delay_list = [float(t) for t in delay_list]
    if len(delay_list) != len(edge_list):
        raise ConfigError(
            f"edge/delay length mismatch: {len(edge_list)} edges, {len(delay_list)} delays"
        )

    delays: dict[tuple[int, int], float] = {}
    for (i, j), tau in zip(edge_list, delay_list):
        i, j = int(i), int(j)
        if i == j:
            raise SelfLoop(f"edge ({i}, {j}): self loops are not allowed")
        if not (0 <= i < node_count and 0 <= j < node_count):
            raise ConfigError(f"edge ({i}, {j}) references a node outside [0, {node_count})")
        if not (0.0 <= tau < 1.0):
            raise DelayOutOfRange(
                f"delay {tau} on edge ({i}, {j}) outside [0, 1); delays must be "
                "shorter than the oscillator period"
            )
        key = (min(i, j), max(i, j))
        if key in delays:
            raise DuplicateEdge(f"edge {key} appears more than once")
        delays[key] = tau

    adj: list[list[int]] = [[] for _ in range(node_count)]
    for (i, j) in delays:
        adj[i].append(j)
        adj[j].append(i)

    # connectivity: BFS from node 0
    seen = [False] * node_count
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    nxt.append(v)
        frontier = nxt
    if not all(seen):
        missing = [i for i, s in enumerate(seen) if not s]
        raise DisconnectedGraph(f"nodes {missing} are unreachable from node 0")

    edges = tuple(sorted(delays))
    neighbors = tuple(tuple(sorted(ns)) for ns in adj)
    return Topology(node_count=node_count, edges=edges, delays=delays, neighbors=neighbors)


# -- maximal cliques ----------------------------------------------------------


@dataclass(frozen=True)
class CliqueCover:
    """Exact maximal-clique decomposition of a topology.

    ``cliques[c]`` is a sorted node tuple.  ``shared[(c, c')]`` holds the
    intersection for overlapping pairs (c < c'); ``local[c]`` the nodes
    belonging to clique c only; ``membership[i]`` the cliques of node i.
    """

    cliques: tuple[tuple[int, ...], ...]
    shared: dict[tuple[int, int], tuple[int, ...]]
    local: dict[int, tuple[int, ...]]
    membership: dict[int, tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.cliques)

    def clique_set(self, c: int) -> frozenset:
        return frozenset(self.cliques[c])


def _degeneracy_order(adj: list[set]) -> list[int]:
    n = len(adj)
    deg = [len(a) for a in adj]
    buckets: dict[int, set] = {}
    for v, d in enumerate(deg):
        buckets.setdefault(d, set()).add(v)
    removed = [False] * n
    order = []
    for _ in range(n):
        d = min(k for k, b in buckets.items() if b)
        v = min(buckets[d])
        buckets[d].remove(v)
        removed[v] = True
        order.append(v)
        for u in adj[v]:
            if not removed[u]:
                buckets[deg[u]].discard(u)
                deg[u] -= 1
                buckets.setdefault(deg[u], set()).add(u)
    return order


def maximal_cliques(topology: Topology, cap: int = DEFAULT_CLIQUE_CAP) -> CliqueCover:
    """Enumerate all maximal cliques (pivoted Bron-Kerbosch over a
    degeneracy ordering) and derive shared/local classifications.

    Raises ``CliqueExplosion`` if more than ``cap`` cliques are found.
    """
    n = topology.node_count
    adj = [set(topology.neighbors[i]) for i in range(n)]
    found: list[tuple[int, ...]] = []

    def expand(r: set, p: set, x: set) -> None:
        if not p and not x:
            found.append(tuple(sorted(r)))
            if len(found) > cap:
                raise CliqueExplosion(f"more than {cap} maximal cliques")
            return
        pivot = max(sorted(p | x), key=lambda u: len(p & adj[u]))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p.remove(v)
            x.add(v)

    order = _degeneracy_order(adj)
    pos = {v: k for k, v in enumerate(order)}
    for v in order:
        later = {u for u in adj[v] if pos[u] > pos[v]}
        earlier = adj[v] - later
        expand({v}, later, earlier)

    cliques = tuple(sorted(found))
    shared: dict[tuple[int, int], tuple[int, ...]] = {}
    for a in range(len(cliques)):
        for b in range(a + 1, len(cliques)):
            inter = sorted(set(cliques[a]) & set(cliques[b]))
            if inter:
                shared[(a, b)] = tuple(inter)
    shared_nodes: dict[int, set] = {c: set() for c in range(len(cliques))}
    for (a, b), nodes in shared.items():
        shared_nodes[a].update(nodes)
        shared_nodes[b].update(nodes)
    local = {
        c: tuple(sorted(set(cliques[c]) - shared_nodes[c])) for c in range(len(cliques))
    }
    membership: dict[int, tuple[int, ...]] = {}
    for c, members in enumerate(cliques):
        for i in members:
            membership.setdefault(i, ())
            membership[i] = membership[i] + (c,)
    return CliqueCover(cliques=cliques, shared=shared, local=local, membership=membership)


# -- delay paths --------------------------------------------------------------


def delay_distances(topology: Topology, source: int) -> list[float]:
    """Minimum accumulated delay from ``source`` to every node (Dijkstra
    over edge delays; zero-delay edges are legal zero-weight edges)."""
    n = topology.node_count
    dist = [float("inf")] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in topology.neighbors[u]:
            nd = d + topology.tau(u, v)
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def path_delay(topology: Topology, i: int, j: int) -> float:
    """Accumulated delay along the minimum-total-delay path from i to j."""
    if i == j:
        raise ConfigError("path_delay requires two distinct nodes")
    return delay_distances(topology, i)[j]


# -- demand partition ---------------------------------------------------------


@dataclass(frozen=True)
class DemandPartition:
    """Assignment of each node to the clique maximizing total demand, plus
    the clique order by decreasing assigned-partition demand."""

    assignment: dict[int, int]
    order: tuple[int, ...]
    totals: dict[int, Fraction]          # full-clique totals sum_{v in V_c}(D_v + delta)
    partition_totals: dict[int, Fraction]  # sum over assigned nodes only

    def members(self, c: int) -> tuple[int, ...]:
        return tuple(sorted(i for i, a in self.assignment.items() if a == c))


def demand_partition(
    cover: CliqueCover,
    demands,
    delta,
    strict: bool = True,
) -> DemandPartition:
    """Assign every node to its argmax-total-demand clique.

    With ``strict`` (default) any two overlapping cliques with equal totals
    raise ``AmbiguousPartition``, matching the uniqueness premise of the
    closed-form analysis.  With ``strict=False`` only an actual per-node
    argmax tie raises, which admits e.g. equal-demand sibling cliques that
    never compete for the same node.
    """
    demands = [Fraction(d) for d in demands]
    delta = Fraction(delta)
    if any(d <= 0 for d in demands):
        raise ConfigError("demands must be positive")
    if delta <= 0:
        raise ConfigError("delta must be positive")

    totals = {
        c: sum((demands[v] + delta for v in members), Fraction(0))
        for c, members in enumerate(cover.cliques)
    }
    if strict:
        for (a, b) in sorted(cover.shared):
            if totals[a] == totals[b]:
                raise AmbiguousPartition(
                    f"overlapping cliques {a} and {b} have equal total demand {totals[a]}"
                )

    assignment: dict[int, int] = {}
    for i in sorted(cover.membership):
        cands = cover.membership[i]
        best = max(totals[c] for c in cands)
        winners = [c for c in cands if totals[c] == best]
        if len(winners) > 1:
            raise AmbiguousPartition(
                f"node {i} has tied argmax cliques {winners} with total {best}"
            )
        assignment[i] = winners[0]

    partition_totals = {
        c: sum(
            (demands[i] + delta for i, a in assignment.items() if a == c),
            Fraction(0),
        )
        for c in range(len(cover))
    }
    order = tuple(sorted(range(len(cover)), key=lambda c: (-partition_totals[c], c)))
    return DemandPartition(
        assignment=assignment,
        order=order,
        totals=totals,
        partition_totals=partition_totals,
    )


def check_assumption_two(cover: CliqueCover, partition: DemandPartition):
    """True iff every clique's nodes fall in at most two partitions (its
    own plus one other).  On failure returns the violating clique and the
    partitions it touches."""
    for c, members in enumerate(cover.cliques):
        touched = {partition.assignment[i] for i in members}
        extra = touched - {c}
        if len(extra) > 1:
            return False, (c, tuple(sorted(touched)))
    return True, None
