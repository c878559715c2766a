"""Linear-algebra analysis of the scheduling update and closed-form
fixed-point predictors.

One frame of single-clique updates is a linear map: node k's update
touches (gap_k, slot_k, gap_{k+1}) through a 3x3 column-stochastic block
conjugated into position by the circular shift, and the frame map is the
ordered product over the clique.  This module builds those matrices,
computes exact spectra, evaluates the equal-demand characteristic
polynomial and its first-order perturbation roots, and predicts converged
schedules for single-, two- and multi-clique topologies in exact rational
arithmetic.  Fairness checks and the slot-reuse coloring correspondence
live here too.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    AssumptionViolated,
    ConfigError,
    EigenNoConvergence,
    UnsupportedArrangement,
)
from .topology import (
    CliqueCover,
    DemandPartition,
    Topology,
    check_assumption_two,
    demand_partition,
    maximal_cliques,
)

__all__ = [
    "CliqueSystem",
    "SpectralReport",
    "FixedPointPrediction",
    "FairnessReport",
    "ColoringResult",
    "update_block",
    "shift_matrix",
    "node_update_matrix",
    "build_clique_system",
    "eigenvalues",
    "lambda2_approx",
    "perturbation_roots",
    "char_poly_eval",
    "fixed_point_single_clique",
    "fixed_point_two_clique",
    "fixed_point_multiclique",
    "instantiate_theta",
    "check_fairness",
    "schedule_to_coloring",
    "match_prediction",
]

CHROMATIC_NODE_CAP = 12


# -- matrices -----------------------------------------------------------------


def update_block(demand, delta, beta) -> np.ndarray:
    """3x3 column-stochastic block of one node's update acting on
    (gap before, slot, gap after)."""
    D, d, b = float(demand), float(delta), float(beta)
    s = D + 2 * d
    return np.array(
        [
            [1 - b * (D + d) / s, b * d / s, b * d / s],
            [b * D / s, 1 - b * 2 * d / s, b * D / s],
            [b * d / s, b * d / s, 1 - b * (D + d) / s],
        ]
    )


def shift_matrix(m: int) -> np.ndarray:
    """Circular down-shift: column i carries a 1 in row (i+1) mod m."""
    J = np.zeros((m, m))
    for i in range(m):
        J[(i + 1) % m, i] = 1.0
    return J


def node_update_matrix(k: int, n: int, demand, delta, beta) -> np.ndarray:
    """2n x 2n update matrix of the k-th node in firing order (1-based):
    the 3x3 block conjugated to start at coordinate 2k-2."""
    m = 2 * n
    B = np.eye(m)
    B[:3, :3] = update_block(demand, delta, beta)
    P = np.linalg.matrix_power(shift_matrix(m), 2 * (k - 1))
    return P @ B @ P.T


@dataclass
class CliqueSystem:
    """Update matrices of one clique in firing order.

    ``round_matrix`` is the ordered product over the clique; for equal
    demands ``step_matrix`` holds the shift-composed single-update matrix
    whose n-th power equals the round matrix and whose spectrum the
    characteristic polynomial describes.
    """

    n: int
    demands: tuple[Fraction, ...]
    delta: Fraction
    beta: float
    blocks: list = field(repr=False)
    node_matrices: list = field(repr=False)
    round_matrix: np.ndarray = field(repr=False)
    shift: np.ndarray = field(repr=False)
    step_matrix: np.ndarray | None = field(repr=False, default=None)

    @property
    def equal_demand(self) -> bool:
        return len(set(self.demands)) == 1

    @property
    def mu(self) -> float:
        return float(self.delta / (self.demands[0] + 2 * self.delta))


def build_clique_system(demands, delta, beta) -> CliqueSystem:
    """Assemble per-node update matrices and their ordered product for a
    clique whose firing order follows the demand list."""
    demands = tuple(Fraction(d) for d in demands)
    delta = Fraction(delta)
    n = len(demands)
    if n < 2:
        raise ConfigError("a clique system needs at least two nodes")
    if any(d <= 0 for d in demands) or delta <= 0:
        raise ConfigError("demands and delta must be positive")
    if not (0.0 <= beta <= 1.0):
        raise ConfigError("beta must lie in [0, 1]")
    m = 2 * n
    blocks = [update_block(D, delta, beta) for D in demands]
    mats = [
        node_update_matrix(k, n, demands[k - 1], delta, beta) for k in range(1, n + 1)
    ]
    M = np.eye(m)
    for Mk in mats:
        M = M @ Mk
    step = None
    if len(set(demands)) == 1:
        B = np.eye(m)
        B[:3, :3] = blocks[0]
        step = B @ np.linalg.matrix_power(shift_matrix(m), 2)
    return CliqueSystem(
        n=n,
        demands=demands,
        delta=delta,
        beta=float(beta),
        blocks=blocks,
        node_matrices=mats,
        round_matrix=M,
        shift=shift_matrix(m),
        step_matrix=step,
    )


@dataclass
class SpectralReport:
    """Spectrum of the round matrix plus cross-validation diagnostics."""

    eigenvalues: tuple[complex, ...]          # sorted by decreasing modulus
    lambda2_exact: float
    lambda2_estimate: float                   # closed-form equal-demand estimate
    residuals: tuple[float, ...]              # ||M v - lambda v|| per pair
    char_residuals: tuple[float, ...] | None  # char poly at step-matrix spectrum


def eigenvalues(system: CliqueSystem) -> SpectralReport:
    """Dense spectrum of the round matrix, largest modulus first, with
    per-pair residuals.  For equal demands the step-matrix spectrum is
    cross-checked against the characteristic polynomial."""
    try:
        vals, vecs = np.linalg.eig(system.round_matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigenNoConvergence(str(exc)) from exc
    order = np.argsort(-np.abs(vals))
    vals = vals[order]
    vecs = vecs[:, order]
    residuals = tuple(
        float(np.linalg.norm(system.round_matrix @ vecs[:, k] - vals[k] * vecs[:, k]))
        for k in range(len(vals))
    )
    char_res = None
    if system.step_matrix is not None:
        try:
            step_vals = np.linalg.eigvals(system.step_matrix)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise EigenNoConvergence(str(exc)) from exc
        char_res = tuple(
            abs(char_poly_eval(complex(lam), system.n, system.beta, system.mu))
            for lam in step_vals
        )
    est = (
        lambda2_approx(system.n, system.beta, float(system.demands[0]), float(system.delta))
        if system.equal_demand
        else float("nan")
    )
    return SpectralReport(
        eigenvalues=tuple(complex(v) for v in vals),
        lambda2_exact=float(abs(vals[1])),
        lambda2_estimate=est,
        residuals=residuals,
        char_residuals=char_res,
    )


def lambda2_approx(n: int, beta: float, demand, delta) -> float:
    """Closed-form estimate of the round matrix's second-largest eigenvalue
    modulus for n equal-demand nodes: 1 - 2 beta mu pi^2 / n^2."""
    mu = float(delta) / (float(demand) + 2.0 * float(delta))
    return 1.0 - 2.0 * beta * mu * math.pi ** 2 / n ** 2


def perturbation_roots(n: int, beta: float, mu: float):
    """First-order roots of the characteristic equation for small mu.

    Returns (k, z, lam) for k = 1..n-1 where lam is the reconstructed
    step-matrix eigenvalue (1 - Re z) * exp(j(2 pi k / n - Im z)).
    """
    out = []
    for k in range(1, n):
        w = 2.0 * math.pi * k / n
        num = (1.0 - math.cos(w)) / n
        den = (
            1.0
            - 0.5 * cmath.exp(-1j * w)
            - math.sin(w) / n
            + (1.0 / (beta * mu)) * (1.0 - beta / 2.0 - mu * math.cos(w))
        )
        z = num / den
        lam = (1.0 - z.real) * cmath.exp(1j * (w - z.imag))
        out.append((k, z, lam))
    return out


def char_poly_eval(lam: complex, n: int, beta: float, mu: float) -> complex:
    """Characteristic polynomial of the equal-demand step matrix, grouped
    so lambda = 1 evaluates to exactly zero."""
    ln = lam ** n
    return (
        lam ** (2 * n)
        - ln
        - (beta - 1.0) ** 2 * (ln - 1.0)
        + beta ** 2 * mu * (2.0 * ln - lam ** (n - 1) - lam)
        - beta * mu * (lam ** (2 * n - 1) + lam ** (n + 1) - lam ** (n - 1) - lam)
    )


# -- fixed-point predictions --------------------------------------------------


@dataclass
class FixedPointPrediction:
    """Predicted converged schedule, exact where unique.

    ``upsilon`` maps clique index to the interleaved (gap, slot) vector in
    the canonical node order of ``orders``.  Set-valued outcomes omit the
    free clique from ``upsilon`` and instead carry its affine form
    base + theta * coef in ``upsilon_affine`` with ``theta_range`` giving
    the admissible free-gap interval.
    """

    provenance: str
    orders: dict[int, tuple[int, ...]]
    upsilon: dict[int, tuple[Fraction, ...]]
    slot: dict[int, Fraction]
    guard: dict[int, Fraction]
    set_valued: bool = False
    theta_range: tuple[Fraction, Fraction] | None = None
    upsilon_affine: dict[int, tuple[tuple[Fraction, ...], tuple[Fraction, ...]]] | None = None

    def upsilon_float(self, c: int) -> tuple[float, ...]:
        return tuple(float(x) for x in self.upsilon[c])


def _proportional_vector(demands_in_order, delta):
    """(delta, D_1, delta, D_2, ...) scaled to unit sum."""
    total = sum(demands_in_order, Fraction(0))
    n = len(demands_in_order)
    gamma = total / (total + n * delta)
    out = []
    for D in demands_in_order:
        out.extend((gamma * delta / total, gamma * D / total))
    return tuple(out)


def fixed_point_single_clique(demands, delta, order=None) -> FixedPointPrediction:
    """Unique fixed point of an isolated clique: slots proportional to
    demand, equal guards, all exact rationals."""
    demands = [Fraction(d) for d in demands]
    delta = Fraction(delta)
    n = len(demands)
    if n < 2:
        raise ConfigError("a schedule needs at least two nodes")
    order = tuple(range(n)) if order is None else tuple(order)
    vec = _proportional_vector([demands[i] for i in order], delta)
    total = sum(demands, Fraction(0))
    gamma = total / (total + n * delta)
    slot = {i: gamma * demands[i] / total for i in order}
    guard = {i: gamma * delta / total for i in order}
    return FixedPointPrediction(
        provenance="single-clique",
        orders={0: order},
        upsilon={0: vec},
        slot=slot,
        guard=guard,
    )


def _clique_density(demands, delta, members):
    """Per-unit-demand slot scale of an isolated clique: 1/(total + n*delta)."""
    total = sum((demands[i] for i in members), Fraction(0))
    return 1 / (total + len(members) * delta)


def _reduced_scale(demands, delta, local_members, guard_count):
    """Scale of the reduced local-update eigenvector whose proportional
    part carries ``guard_count`` guards and the locals' demands."""
    total = sum((demands[i] for i in local_members), Fraction(0))
    return 1 / (total + guard_count * delta)


def fixed_point_two_clique(cover: CliqueCover, demands, delta,
                           arrangement=None) -> FixedPointPrediction:
    """Unique fixed point of a two-clique topology.

    Covers one shared node and a consecutive shared block (the default
    arrangement), plus two non-consecutive shared nodes when
    ``arrangement`` supplies the per-clique local splits as
    ``{clique_index: (first_arc_locals, second_arc_locals)}`` following
    the circular order shared_1, arc_1, shared_2, arc_2.  Other patterns
    raise ``UnsupportedArrangement``.
    """
    demands = [Fraction(d) for d in demands]
    delta = Fraction(delta)
    if len(cover) != 2:
        raise ConfigError(f"two-clique predictor got {len(cover)} cliques")
    shared = list(cover.shared.get((0, 1), ()))
    if not shared:
        raise ConfigError("the two cliques do not overlap")
    if arrangement is None:
        return _two_clique_consecutive(cover, demands, delta, shared)
    if len(shared) != 2:
        raise UnsupportedArrangement(
            "split arrangements are closed-form only for exactly two shared nodes"
        )
    return _two_clique_split(cover, demands, delta, shared, arrangement)


def _two_clique_consecutive(cover, demands, delta, shared):
    ns = len(shared)
    dens = {c: _clique_density(demands, delta, cover.cliques[c]) for c in (0, 1)}
    scale = min(dens.values())
    orders, upsilon = {}, {}
    slot: dict[int, Fraction] = {}
    guard: dict[int, Fraction] = {}
    for s in shared:
        slot[s] = scale * demands[s]
        guard[s] = scale * delta  # gaps around the block resolve in the denser clique
    for c in (0, 1):
        members = cover.cliques[c]
        locs = [i for i in members if i not in shared]
        order = tuple(locs) + tuple(shared)
        red = _reduced_scale(demands, delta, locs, len(members) - ns + 1)
        lam_total = sum((slot[s] for s in shared), Fraction(0)) + (ns - 1) * scale * delta
        base = 1 - lam_total
        vec: list[Fraction] = []
        for i in locs:
            vec.extend((base * red * delta, base * red * demands[i]))
            slot[i] = base * red * demands[i]
            guard[i] = base * red * delta
        vec.append(base * red * delta)  # gap between the last local and the block
        vec.append(slot[shared[0]])
        for s in shared[1:]:
            vec.extend((scale * delta, slot[s]))
        orders[c] = order
        upsilon[c] = tuple(vec)
    return FixedPointPrediction(
        provenance="two-clique",
        orders=orders,
        upsilon=upsilon,
        slot=slot,
        guard=guard,
    )


def _two_clique_split(cover, demands, delta, shared, arrangement):
    i1, i2 = shared
    splits = {}
    for c in (0, 1):
        try:
            arc1, arc2 = arrangement[c]
        except (KeyError, TypeError, ValueError):
            raise UnsupportedArrangement(
                f"arrangement must map clique {c} to its two local arcs"
            )
        arc1, arc2 = list(arc1), list(arc2)
        locs = set(cover.cliques[c]) - {i1, i2}
        if set(arc1) | set(arc2) != locs or set(arc1) & set(arc2):
            raise UnsupportedArrangement(
                f"arcs for clique {c} must partition its local nodes"
            )
        if not arc1 or not arc2:
            raise UnsupportedArrangement(
                "each arc needs at least one local node; use the consecutive "
                "form otherwise"
            )
        splits[c] = (arc1, arc2)

    # reduced scales per clique and arc; the denser side pins each subframe
    red = {
        (c, j): _reduced_scale(demands, delta, splits[c][j], len(splits[c][j]) + 1)
        for c in (0, 1)
        for j in (0, 1)
    }
    rstar = {j: min(red[(0, j)], red[(1, j)]) for j in (0, 1)}
    denom = demands[i1] + demands[i2] + 1 / rstar[0] + 1 / rstar[1]
    slot: dict[int, Fraction] = {i1: demands[i1] / denom, i2: demands[i2] / denom}
    guard: dict[int, Fraction] = {}
    arc_guard = {}
    for c in (0, 1):
        for j in (0, 1):
            g = red[(c, j)] / rstar[j] / denom
            arc_guard[(c, j)] = g * delta
            for v in splits[c][j]:
                slot[v] = g * demands[v]
                guard[v] = g * delta
    # the shared nodes' own gaps resolve in whichever arc is denser
    guard[i1] = min(arc_guard[(0, 1)], arc_guard[(1, 1)])
    guard[i2] = min(arc_guard[(0, 0)], arc_guard[(1, 0)])
    orders, upsilon = {}, {}
    for c in (0, 1):
        arc1, arc2 = splits[c]
        order = (i1,) + tuple(arc1) + (i2,) + tuple(arc2)
        # each arc carries one guard before every node plus one trailing
        # guard closing onto the next shared node's start
        vec: list[Fraction] = [arc_guard[(c, 1)], slot[i1]]
        for v in arc1:
            vec.extend((arc_guard[(c, 0)], slot[v]))
        vec.extend((arc_guard[(c, 0)], slot[i2]))
        for v in arc2:
            vec.extend((arc_guard[(c, 1)], slot[v]))
        orders[c] = order
        upsilon[c] = tuple(vec)
    return FixedPointPrediction(
        provenance="two-clique-split",
        orders=orders,
        upsilon=upsilon,
        slot=slot,
        guard=guard,
    )


def _is_tree(topology: Topology) -> bool:
    return len(topology.edges) == topology.node_count - 1


def fixed_point_multiclique(topology: Topology, cover: CliqueCover, demands,
                            delta) -> FixedPointPrediction:
    """Closed-form prediction for multi-clique topologies.

    Trees (lines and stars included) recurse outward from the
    highest-demand edge: every node splits the window left free by its
    already-scheduled neighbor proportionally to (delta, demand, delta);
    demands must not increase outward.  General equal-demand topologies
    use the demand-ordered partition recursion and need the structural
    assumptions; a violation raises ``AssumptionViolated`` unless the
    topology is the chained three-clique pattern, which yields the known
    set-valued family with a free gap parameter.
    """
    demands = [Fraction(d) for d in demands]
    delta = Fraction(delta)

    if _is_tree(topology) and max(len(m) for m in cover.cliques) == 2:
        return _tree_prediction(topology, cover, demands, delta)

    if len(set(demands)) != 1:
        raise AssumptionViolated(
            "the multi-clique closed form needs equal demands (trees excepted)",
            witness=tuple(sorted(set(demands))),
        )
    partition = demand_partition(cover, demands, delta, strict=False)
    ok, witness = check_assumption_two(cover, partition)
    if not ok:
        chain = _chained_three_clique(cover, partition)
        if chain is not None:
            return _chained_prediction(cover, demands, delta, chain)
        raise AssumptionViolated(
            f"clique {witness[0]} spans partitions {witness[1]}", witness=witness
        )
    return _partition_recursion(cover, demands, delta, partition)


def _tree_prediction(topology, cover, demands, delta):
    edge_total = {e: demands[e[0]] + demands[e[1]] + 2 * delta for e in topology.edges}
    root = max(topology.edges, key=lambda e: (edge_total[e], -e[0], -e[1]))
    a, b = root
    pair = demands[a] + demands[b]
    gamma = pair / (pair + 2 * delta)
    slot = {a: gamma * demands[a] / pair, b: gamma * demands[b] / pair}
    guard = {a: gamma * delta / pair, b: gamma * delta / pair}
    rank = {a: 0, b: 0}
    frontier = [a, b]
    while frontier:
        nxt = []
        for u in frontier:
            for v in topology.neighbors[u]:
                if v in slot:
                    continue
                if demands[v] > demands[u]:
                    raise AssumptionViolated(
                        f"child {v} demands more than its parent {u}; the tree "
                        "closed form needs non-increasing demand outward",
                        witness=(u, v),
                    )
                window = 1 - slot[u]
                scale = window / (demands[v] + 2 * delta)
                slot[v] = scale * demands[v]
                guard[v] = scale * delta
                rank[v] = rank[u] + 1
                nxt.append(v)
        frontier = nxt
    orders, upsilon = {}, {}
    for c, members in enumerate(cover.cliques):
        i, j = members
        # both gaps of an edge clique equal the later-scheduled node's guard
        child = i if rank[i] > rank[j] else j
        g = guard[child] if rank[i] != rank[j] else guard[i]
        orders[c] = (i, j)
        upsilon[c] = (g, slot[i], g, slot[j])
    return FixedPointPrediction(
        provenance="multi-clique-recursion",
        orders=orders,
        upsilon=upsilon,
        slot=slot,
        guard=guard,
    )


def _partition_recursion(cover, demands, delta, partition: DemandPartition):
    """Equal-demand recursion over partitions in decreasing demand order."""
    D = demands[0]
    T: dict[int, Fraction] = {}
    g: dict[int, Fraction] = {}
    members = {c: partition.members(c) for c in range(len(cover))}
    for c in partition.order:
        if not members[c]:
            continue
        clique_nodes = set(cover.cliques[c])
        assigned = set(members[c])
        if assigned == clique_nodes:
            frame_c = Fraction(1)
            T[c] = D / (D + delta) * frame_c / len(assigned)
        else:
            others = {partition.assignment[i] for i in clique_nodes - assigned}
            if len(others) != 1:
                raise AssumptionViolated(
                    f"clique {c} depends on partitions {sorted(others)}",
                    witness=(c, tuple(sorted(others))),
                )
            cp = others.pop()
            if cp not in T:
                raise AssumptionViolated(
                    f"clique {c} depends on partition {cp} not yet scheduled",
                    witness=(c, cp),
                )
            n_shared = len(clique_nodes - assigned)
            frame_c = 1 - n_shared * (T[cp] + g[cp]) + g[cp]
            T[c] = D / (D + delta) * frame_c / (len(assigned) + delta / (D + delta))
        g[c] = delta / D * T[c]
    slot = {i: T[partition.assignment[i]] for i in partition.assignment}
    guard = {i: g[partition.assignment[i]] for i in partition.assignment}
    orders, upsilon = {}, {}
    for c, clique_nodes in enumerate(cover.cliques):
        own = [i for i in clique_nodes if partition.assignment[i] == c]
        foreign = [i for i in clique_nodes if partition.assignment[i] != c]
        order = tuple(foreign) + tuple(own)
        vec: list[Fraction] = []
        for i in order:
            vec.extend((guard[i], slot[i]))
        # the gap before the first node absorbs the clique's leftover share
        used = sum(vec[2:], vec[1])
        vec[0] = 1 - used
        orders[c] = order
        upsilon[c] = tuple(vec)
    return FixedPointPrediction(
        provenance="multi-clique-recursion",
        orders=orders,
        upsilon=upsilon,
        slot=slot,
        guard=guard,
    )


def _chained_three_clique(cover, partition: DemandPartition):
    """Detect three cliques joined by single gateways into a chain whose
    outer cliques own both gateways; returns (left, mid, right) or None."""
    if len(cover) != 3:
        return None
    pairs = sorted(cover.shared)
    if len(pairs) != 2 or any(len(cover.shared[p]) != 1 for p in pairs):
        return None
    linked = [c for pair in pairs for c in pair]
    mids = [c for c in range(3) if linked.count(c) == 2]
    if len(mids) != 1:
        return None
    mid = mids[0]
    for pair in pairs:
        gw = cover.shared[pair][0]
        if partition.assignment[gw] == mid:
            return None
    outer = [c for c in range(3) if c != mid]
    return outer[0], mid, outer[1]


def _chained_prediction(cover, demands, delta, chain):
    left, mid, right = chain
    orders, upsilon = {}, {}
    slot: dict[int, Fraction] = {}
    guard: dict[int, Fraction] = {}
    for c in (left, right):
        members = cover.cliques[c]
        vec = _proportional_vector([demands[i] for i in members], delta)
        orders[c] = tuple(members)
        upsilon[c] = vec
        for k, i in enumerate(members):
            guard[i] = vec[2 * k]
            slot[i] = vec[2 * k + 1]
    gw_left = cover.shared[tuple(sorted((left, mid)))][0]
    gw_right = cover.shared[tuple(sorted((mid, right)))][0]
    locs = [i for i in cover.cliques[mid] if i not in (gw_left, gw_right)]
    order = (gw_left,) + tuple(locs) + (gw_right,)
    arc_total = 1 - slot[gw_left] - slot[gw_right]
    split_den = sum((demands[i] for i in locs), Fraction(0)) + (len(locs) + 1) * delta
    base: list[Fraction] = [Fraction(0), slot[gw_left]]
    coef: list[Fraction] = [Fraction(1), Fraction(0)]
    for i in locs:
        base.extend((arc_total * delta / split_den, arc_total * demands[i] / split_den))
        coef.extend((-delta / split_den, -demands[i] / split_den))
    base.extend((arc_total * delta / split_den, slot[gw_right]))
    coef.extend((-delta / split_den, Fraction(0)))
    theta_min = max(guard[gw_left], guard[gw_right])
    theta_max = arc_total - split_den * theta_min / delta
    orders[mid] = order
    return FixedPointPrediction(
        provenance="set-valued",
        orders=orders,
        upsilon=upsilon,
        slot=slot,
        guard=guard,
        set_valued=True,
        theta_range=(theta_min, theta_max),
        upsilon_affine={mid: (tuple(base), tuple(coef))},
    )


def instantiate_theta(pred: FixedPointPrediction, theta) -> FixedPointPrediction:
    """Concrete prediction from a set-valued family at a given free gap."""
    if not pred.set_valued:
        return pred
    theta = Fraction(theta)
    lo, hi = pred.theta_range
    if not (lo <= theta <= hi):
        raise ConfigError(f"theta {theta} outside admissible range [{lo}, {hi}]")
    upsilon = dict(pred.upsilon)
    slot = dict(pred.slot)
    guard = dict(pred.guard)
    for c, (base, coef) in pred.upsilon_affine.items():
        vec = tuple(b + theta * k for b, k in zip(base, coef))
        upsilon[c] = vec
        for idx, i in enumerate(pred.orders[c]):
            if i not in slot:  # locals of the free clique
                slot[i] = vec[2 * idx + 1]
                guard[i] = vec[2 * idx]
    return FixedPointPrediction(
        provenance=pred.provenance + "-instantiated",
        orders=pred.orders,
        upsilon=upsilon,
        slot=slot,
        guard=guard,
    )


# -- fairness -----------------------------------------------------------------


@dataclass
class FairnessReport:
    partial: bool
    global_: bool
    witnesses: list


def check_fairness(source, cover: CliqueCover, demands, delta,
                   tol: float = 1e-9) -> FairnessReport:
    """Evaluate the proportional fairness criteria of a converged schedule.

    Partial: consecutive local nodes of every clique hold slots
    proportional to demand.  Global: proportionality across all local
    pairs per clique plus every node reaching its minimum share over the
    cliques it belongs to.  Witnesses name the offending pairs or nodes.
    """
    demands = [Fraction(d) for d in demands]
    delta = Fraction(delta)
    if isinstance(source, FixedPointPrediction):
        if source.set_valued:
            raise ConfigError(
                "fairness of a set-valued prediction needs instantiate_theta first"
            )
        slots = {i: float(v) for i, v in source.slot.items()}
        orders = source.orders
    else:
        slots = {i: source.gamma(i) for i in range(source.n)}
        orders = source.order
    witnesses = []
    partial = True
    for c in range(len(cover)):
        order = orders[c]
        locs = set(cover.local[c])
        for k, i in enumerate(order):
            j = order[k - 1]
            if i in locs and j in locs and i != j:
                if abs(slots[i] / float(demands[i]) - slots[j] / float(demands[j])) > tol:
                    partial = False
                    witnesses.append(("partial", c, j, i))
    global_ = partial
    for c in range(len(cover)):
        locs = sorted(cover.local[c])
        for a in range(len(locs)):
            for b in range(a + 1, len(locs)):
                i, j = locs[a], locs[b]
                if abs(slots[i] / float(demands[i]) - slots[j] / float(demands[j])) > tol:
                    global_ = False
                    witnesses.append(("global-proportionality", c, i, j))
    for i in sorted(slots):
        bound = min(
            demands[i] / sum((demands[v] + delta for v in cover.cliques[c]), Fraction(0))
            for c in cover.membership[i]
        )
        if slots[i] < float(bound) - tol:
            global_ = False
            witnesses.append(("global-minimum", i, float(bound), slots[i]))
    return FairnessReport(partial=partial, global_=global_, witnesses=witnesses)


# -- coloring -----------------------------------------------------------------


@dataclass
class ColoringResult:
    colors: dict[int, int]
    proper: bool
    color_count: int
    chromatic_number: int | None
    minimal: bool | None


def _brute_chromatic(topology: Topology) -> int:
    """Exact chromatic number by backtracking; intended for <= 12 nodes."""
    n = topology.node_count
    adj = [set(topology.neighbors[i]) for i in range(n)]
    order = sorted(range(n), key=lambda i: -len(adj[i]))
    lower = max(len(c) for c in maximal_cliques(topology).cliques)

    def colorable(k: int) -> bool:
        assign: dict[int, int] = {}

        def rec(idx: int) -> bool:
            if idx == n:
                return True
            v = order[idx]
            used = {assign[u] for u in adj[v] if u in assign}
            ceiling = min(k, (max(assign.values()) + 2) if assign else 1)
            for col in range(ceiling):  # first fresh color is canonical
                if col in used:
                    continue
                assign[v] = col
                if rec(idx + 1):
                    return True
                del assign[v]
            return False

        return rec(0)

    for k in range(lower, n + 1):
        if colorable(k):
            return k
    return n


def _tree_positions(topology, demands):
    """Zero-guard-limit slot positions over a tree: the root pair tiles the
    frame and every child takes the full complement of its parent's slot."""
    demands = [Fraction(d) for d in demands]
    edge_total = {e: demands[e[0]] + demands[e[1]] for e in topology.edges}
    root = max(topology.edges, key=lambda e: (edge_total[e], -e[0], -e[1]))
    a, b = root
    pair = demands[a] + demands[b]
    pos = {
        a: (Fraction(0), demands[a] / pair),
        b: (demands[a] / pair, demands[b] / pair),
    }
    frontier = [a, b]
    while frontier:
        nxt = []
        for u in frontier:
            for v in topology.neighbors[u]:
                if v in pos:
                    continue
                us, uw = pos[u]
                pos[v] = ((us + uw) % 1, 1 - uw)
                frontier_add = v
                nxt.append(frontier_add)
        frontier = nxt
    return pos


def schedule_to_coloring(source, cover: CliqueCover, topology: Topology,
                         demands=None, tol: float = 1e-6) -> ColoringResult:
    """Group nodes whose slots coincide into colors, verify properness
    against the conflict graph and compare against the exact chromatic
    number (skipped above 12 nodes; the coloring is still returned).

    Predictions evaluate in the zero-guard limit so reuse classes are
    exact; simulator states group (start, end) pairs within ``tol``.
    """
    classes: list = []
    colors: dict[int, int] = {}

    if isinstance(source, FixedPointPrediction):
        if demands is None:
            raise ConfigError("coloring a prediction needs the demand vector")
        if _is_tree(topology) and max(len(m) for m in cover.cliques) == 2:
            pos = _tree_positions(topology, demands)
        elif source.provenance == "single-clique":
            demands = [Fraction(d) for d in demands]
            total = sum(demands, Fraction(0))
            cursor = Fraction(0)
            pos = {}
            for i in source.orders[0]:
                pos[i] = (cursor, demands[i] / total)
                cursor += demands[i] / total
        else:
            raise ConfigError(
                f"no zero-guard layout for provenance {source.provenance!r}"
            )
        for i in sorted(pos):
            key = pos[i]
            for k, existing in enumerate(classes):
                if existing == key:
                    colors[i] = k
                    break
            else:
                classes.append(key)
                colors[i] = len(classes) - 1
    else:
        for i in range(source.n):
            key = (source.phi(i), source.psi(i))
            for k, existing in enumerate(classes):
                if (
                    abs((existing[0] - key[0] + 0.5) % 1.0 - 0.5) < tol
                    and abs((existing[1] - key[1] + 0.5) % 1.0 - 0.5) < tol
                ):
                    colors[i] = k
                    break
            else:
                classes.append(key)
                colors[i] = len(classes) - 1

    proper = all(colors[i] != colors[j] for (i, j) in topology.edges)
    if topology.node_count <= CHROMATIC_NODE_CAP:
        chrom = _brute_chromatic(topology)
        minimal = proper and len(classes) == chrom
    else:
        chrom = None
        minimal = None
    return ColoringResult(
        colors=colors,
        proper=proper,
        color_count=len(classes),
        chromatic_number=chrom,
        minimal=minimal,
    )


# -- prediction vs simulation -------------------------------------------------


def match_prediction(sim_vec, sim_order, pred_vec, pred_order, role=None,
                     tol: float = 1e-6) -> float | None:
    """Smallest entrywise deviation between the simulated clique vector and
    the prediction over all cyclic rotations whose node-role pattern
    matches; None when no rotation aligns the roles.

    ``role`` maps a node id to a comparable label (defaults to identity);
    pass e.g. shared/local flags so interchangeable nodes can permute.
    """
    n = len(pred_order)
    if len(sim_order) != n or len(sim_vec) != len(pred_vec):
        return None
    role = role or (lambda i: i)
    pred_roles = [role(i) for i in pred_order]
    pred_vals = [float(x) for x in pred_vec]
    best = None
    for r in range(n):
        nodes = list(sim_order[r:]) + list(sim_order[:r])
        if [role(i) for i in nodes] != pred_roles:
            continue
        vals = list(sim_vec[2 * r:]) + list(sim_vec[:2 * r])
        dev = max(abs(a - b) for a, b in zip(vals, pred_vals))
        if best is None or dev < best:
            best = dev
    return best
