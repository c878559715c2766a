"""Event-driven simulator of excitatory pulse-coupled synchronization.

Each node carries a phase in [0, 1) advancing at unit rate.  Reaching 1 the
node fires: it resets to 0 and its pulse is delivered to every neighbor
after the edge delay.  A delivery outside the receiver's refractory window
applies the multiplicative update min((1+alpha)*phase, 1); hitting 1 is an
absorption and the receiver fires within the same timestamp.

The engine stores each node's next natural firing time instead of its
phase, so advancing time is free and synchronized nodes stay bit-identical
forever.  Timestamps group all events within ``eps_time`` of the earliest
pending one; within a timestamp deliveries apply before natural firings,
ties break by ascending node id, and simultaneous pulses reaching one
receiver coalesce into a single update (interfering pulses are one pulse).
Absorption cascades complete before time advances.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

from .errors import ConfigError, EventStorm, NoHead, RefractoryWindowEmpty
from .rng import make_generator
from .topology import Topology, build_topology

__all__ = [
    "SyncConfig",
    "SyncState",
    "DeltaVector",
    "SyncRunRecord",
    "admissible_rho_window",
    "default_rho",
    "init_sync",
    "apply_firing_update",
    "step",
    "run_until_fixed",
    "head_nodes",
    "join_node",
    "write_trace",
]


@dataclass
class SyncConfig:
    """Parameters of a synchronization run.

    ``rho=None`` selects the smallest admissible refractory length plus a
    margin (0 in the zero-delay regime).  ``window`` is the number of
    consecutive unchanged firing rounds required to declare a fixed point.
    """

    alpha: float
    rho: float | None = None
    max_periods: float = 10_000.0
    eps_fix: float = 1e-10
    eps_time: float = 1e-12
    window: int = 3

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.rho is not None and not (0.0 <= self.rho < 1.0):
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if self.max_periods <= 0:
            raise ConfigError("max_periods must be positive")
        if self.window < 1:
            raise ConfigError("window must be at least 1")


def admissible_rho_window(topology: Topology) -> tuple[float, float]:
    """Open interval of admissible refractory lengths for the topology.

    With delays present the echo-free window is (2 max tau, 1/2 + min tau);
    without delays any rho in [0, 1/2) works.  Raises
    ``RefractoryWindowEmpty`` when the interval is empty.
    """
    if not topology.has_delays():
        return 0.0, 0.5
    lo = 2.0 * topology.max_delay()
    hi = 0.5 + topology.min_delay()
    if lo >= hi:
        raise RefractoryWindowEmpty(
            f"no admissible refractory length: 2*max_tau={lo} >= 1/2+min_tau={hi}"
        )
    return lo, hi


def default_rho(topology: Topology) -> float:
    """Smallest admissible refractory plus margin; 0 without delays."""
    if not topology.has_delays():
        return 0.0
    lo, hi = admissible_rho_window(topology)
    return lo + min(0.01, (hi - lo) / 2.0)


def apply_firing_update(phase: float, alpha: float, coupled: bool = True) -> float:
    """Multiplicative phase jump on hearing a pulse; 1.0 signals absorption."""
    if not coupled:
        return phase
    return min((1.0 + alpha) * phase, 1.0)


@dataclass
class DeltaVector:
    """Snapshot of pairwise cyclic phase distances.

    Per-edge entries delta_ij = min of the two cyclic differences; the
    directed differences xi_ij = (phi_i - phi_j) mod 1 are kept for
    diagnostics and head identification.
    """

    phases: tuple[float, ...]
    edges: tuple[tuple[int, int], ...]

    def xi(self, i: int, j: int) -> float:
        return (self.phases[i] - self.phases[j]) % 1.0

    def delta(self, i: int, j: int) -> float:
        a = self.xi(i, j)
        return min(a, 1.0 - a) if a > 0.0 else 0.0

    def edge_deltas(self) -> dict[tuple[int, int], float]:
        return {(i, j): self.delta(i, j) for (i, j) in self.edges}

    def edge_vector(self) -> tuple[float, ...]:
        return tuple(self.delta(i, j) for (i, j) in self.edges)

    def max_edge_delta(self) -> float:
        return max(self.edge_vector(), default=0.0)

    def delta_max(self) -> float:
        """Residual synchronization error: max cyclic distance over all pairs."""
        n = len(self.phases)
        best = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                d = self.delta(i, j)
                if d > best:
                    best = d
        return best


@dataclass
class SyncRunRecord:
    converged: bool
    time: float            # when the delta vector last changed
    periods: float         # total simulated time
    rounds: int
    delta: DeltaVector
    reason: str


class SyncState:
    """Mutable engine state for one synchronization run.

    ``next_fire[i]`` is the absolute time node i's phase reaches 1; the
    phase at time t is 1 - (next_fire[i] - t).  Firing pushes next_fire
    one full period ahead, so synchronized nodes share identical floats.
    """

    def __init__(self, topology: Topology, config: SyncConfig, phases, rho: float,
                 trace: bool = False):
        self.topology = topology
        self.config = config
        self.rho = rho
        self.sim_time = 0.0
        self.next_fire = [1.0 - float(p) for p in phases]
        self.fire_heap = [(t, i) for i, t in enumerate(self.next_fire)]
        heapq.heapify(self.fire_heap)
        self.pending: list[tuple[float, int, int]] = []  # (delivery time, sender, receiver)
        self.fire_counts = [0] * topology.node_count
        self.trace: list[tuple] | None = [] if trace else None

    def phase(self, i: int, t: float | None = None) -> float:
        t = self.sim_time if t is None else t
        return (1.0 - (self.next_fire[i] - t)) % 1.0

    def phases_now(self) -> tuple[float, ...]:
        t = self.sim_time
        return tuple((1.0 - (nf - t)) % 1.0 for nf in self.next_fire)

    def delta_vector(self) -> DeltaVector:
        return DeltaVector(phases=self.phases_now(), edges=self.topology.edges)

    def rounds_completed(self) -> int:
        return min(self.fire_counts)


def init_sync(topology: Topology, config: SyncConfig, seed=None, phases=None,
              trace: bool = False) -> SyncState:
    """Create a run state with seeded-uniform or explicit initial phases.

    Validates the refractory length against the topology's delays.  The
    same (topology, config, seed) always yields bit-identical phases.
    """
    if phases is None:
        if seed is None:
            raise ConfigError("init_sync needs either a seed or explicit phases")
        rng = make_generator(seed)
        phases = rng.random(topology.node_count)
    phases = [float(p) for p in phases]
    if len(phases) != topology.node_count:
        raise ConfigError("phase vector length does not match node count")
    if any(not (0.0 <= p < 1.0) for p in phases):
        raise ConfigError("phases must lie in [0, 1)")

    if config.rho is None:
        rho = default_rho(topology)
    else:
        rho = config.rho
        if topology.has_delays():
            lo, hi = admissible_rho_window(topology)
            if not (lo < rho < hi):
                raise ConfigError(
                    f"rho={rho} outside the admissible window ({lo}, {hi})"
                )
        elif rho >= 0.5:
            raise ConfigError(f"rho={rho} must be below 1/2")
    return SyncState(topology, config, phases, rho, trace=trace)


def step(state: SyncState) -> list[tuple]:
    """Advance to the next event timestamp and process everything due there.

    Returns the (time, kind, sender, receiver, phase) events processed;
    kinds are 'fire', 'deliver' and 'absorb'.
    """
    eps = state.config.eps_time
    n = state.topology.node_count
    next_fire = state.next_fire
    heap = state.fire_heap

    while heap and heap[0][0] != next_fire[heap[0][1]]:
        heapq.heappop(heap)  # stale entry from an update
    t_fire = heap[0][0] if heap else math.inf
    t_del = state.pending[0][0] if state.pending else math.inf
    T = min(t_fire, t_del)
    if not math.isfinite(T):
        return []
    state.sim_time = T

    firing: list[int] = []
    while heap:
        t, i = heap[0]
        if t != next_fire[i]:
            heapq.heappop(heap)
            continue
        if t <= T + eps:
            heapq.heappop(heap)
            firing.append(i)
        else:
            break
    due: list[tuple[float, int, int]] = []
    while state.pending and state.pending[0][0] <= T + eps:
        due.append(heapq.heappop(state.pending))

    events: list[tuple] = []
    fired: set[int] = set()
    updated: set[int] = set()
    n_events = 0

    while due or firing:
        by_receiver: dict[int, list[int]] = {}
        for (_, s, r) in due:
            by_receiver.setdefault(r, []).append(s)
        due = []
        for r in sorted(by_receiver):
            n_events += len(by_receiver[r])
            sender = min(by_receiver[r])
            p = 1.0 - (next_fire[r] - T)
            if r in fired or p >= 1.0 - eps or r in updated:
                events.append((T, "deliver", sender, r, p % 1.0))
                continue
            updated.add(r)
            if p <= state.rho:
                events.append((T, "deliver", sender, r, p))
                continue
            newp = apply_firing_update(p, state.config.alpha)
            if newp >= 1.0:
                events.append((T, "absorb", sender, r, 0.0))
                firing.append(r)
            else:
                next_fire[r] = T + 1.0 - newp
                heapq.heappush(heap, (next_fire[r], r))
                events.append((T, "deliver", sender, r, newp))

        now_firing = sorted(set(firing) - fired)
        firing = []
        for i in now_firing:
            fired.add(i)
            next_fire[i] = T + 1.0
            heapq.heappush(heap, (next_fire[i], i))
            state.fire_counts[i] += 1
            n_events += 1
            events.append((T, "fire", i, None, 0.0))
            for j in state.topology.neighbors[i]:
                tau = state.topology.tau(i, j)
                if tau <= eps:
                    due.append((T, i, j))
                else:
                    heapq.heappush(state.pending, (T + tau, i, j))
        if n_events > n * n:
            raise EventStorm(
                f"{n_events} events at t={T}; refractory gating is broken"
            )

    if state.trace is not None:
        state.trace.extend(events)
    return events


def run_until_fixed(state: SyncState) -> SyncRunRecord:
    """Run until the per-edge delta vector is unchanged (within eps_fix)
    over ``window`` consecutive full firing rounds, or the period cap.

    Non-convergence is a verdict, not an error: the record comes back with
    ``converged=False`` and ``reason='max_periods'``.
    """
    cfg = state.config
    last = state.delta_vector().edge_vector()
    last_change_time = 0.0
    stable = 0
    rounds_seen = state.rounds_completed()

    while state.sim_time < cfg.max_periods:
        step(state)
        rounds = state.rounds_completed()
        if rounds > rounds_seen:
            rounds_seen = rounds
            cur = state.delta_vector().edge_vector()
            if max((abs(a - b) for a, b in zip(cur, last)), default=0.0) < cfg.eps_fix:
                stable += 1
                if stable >= cfg.window:
                    return SyncRunRecord(
                        converged=True,
                        time=last_change_time,
                        periods=state.sim_time,
                        rounds=rounds_seen,
                        delta=state.delta_vector(),
                        reason="fixed",
                    )
            else:
                stable = 0
                last_change_time = state.sim_time
            last = cur
    return SyncRunRecord(
        converged=False,
        time=last_change_time,
        periods=state.sim_time,
        rounds=rounds_seen,
        delta=state.delta_vector(),
        reason="max_periods",
    )


def head_nodes(delta: DeltaVector, tol: float = 1e-9) -> list[int]:
    """Nodes preceding every other node: (phi_h - phi_j) mod 1 equals the
    cyclic distance for all j.  Raises ``NoHead`` when none qualifies."""
    n = len(delta.phases)
    heads = []
    for h in range(n):
        ok = True
        for j in range(n):
            if j == h:
                continue
            fwd = delta.xi(h, j)
            if 0.5 + tol < fwd < 1.0 - tol:
                ok = False
                break
        if ok:
            heads.append(h)
    if not heads:
        raise NoHead("no node precedes all others; accumulated delays exceed 1/2?")
    return heads


def join_node(state: SyncState, attach_to, phase: float | None = None, seed=None,
              trace: bool = False) -> SyncState:
    """Attach one new node (fresh id) to a synchronized zero-delay state.

    The returned state covers the enlarged topology with the new node's
    phase drawn from ``seed`` unless given explicitly; simulation time
    restarts at 0 with the surviving phases carried over.
    """
    if state.topology.has_delays():
        raise ConfigError("join_node models the zero-delay regime only")
    if state.delta_vector().delta_max() >= state.config.eps_fix:
        raise ConfigError("join_node requires a synchronized starting state")
    attach_to = sorted(set(int(i) for i in attach_to))
    if not attach_to:
        raise ConfigError("the joining node needs at least one edge")
    n = state.topology.node_count
    new_edges = list(state.topology.edges) + [(i, n) for i in attach_to]
    topo = build_topology(n + 1, new_edges)
    if phase is None:
        if seed is None:
            raise ConfigError("join_node needs either a phase or a seed")
        rng = make_generator(seed)
        phase = float(rng.random())
    phases = list(state.phases_now()) + [float(phase)]
    return SyncState(topo, state.config, phases, rho=state.rho, trace=trace)


def write_trace(state: SyncState, fp) -> None:
    """Dump the recorded event trace as JSON lines (time, type, sender,
    receiver, new phase)."""
    if state.trace is None:
        raise ConfigError("tracing was not enabled for this run")
    for (t, kind, sender, receiver, phase) in state.trace:
        fp.write(json.dumps({
            "t": t,
            "type": kind,
            "sender": sender,
            "receiver": receiver,
            "phase": phase,
        }) + "\n")
