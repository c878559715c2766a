"""Event-driven simulator of inhibitory pulse-coupled scheduling.

Every node runs two timers over the unit frame: a start timer phi and an
end timer psi, each firing a beacon when it expires.  A node listens to
its clique neighbors: the first start beacon heard after its own end
firing is its successor's start and triggers the node's one update of the
round.  At that instant the node reads its predecessor's current end-timer
phase (the predecessor resolves across cliques by the smallest gap to the
node's own start), splits that window proportionally to (delta, demand,
delta), and moves both timers by a convex combination with weight beta.

Using the predecessor's current phase rather than the raw elapsed time
since its heard beacon makes updates within a frame compose sequentially,
which is what keeps the firing order inside every clique invariant for
every coupling weight.  Beacons are heard instantaneously (scheduling
runs carry no propagation delay); simultaneous expirations process end
timers before start timers, then ascend by node id.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    ConfigError,
    InitRejectionExhausted,
    MissingPreReference,
    NotInClique,
)
from .rng import make_generator
from .topology import CliqueCover, Topology

__all__ = [
    "SchedConfig",
    "SchedState",
    "SchedRunRecord",
    "init_schedule",
    "collision_free",
    "pre_suc",
    "global_pre_suc",
    "compute_target",
    "combine_update",
    "apply_update",
    "run_frames",
    "extract_upsilon",
    "upsilon_all",
    "write_schedule_dump",
]

INIT_ATTEMPT_CAP = 10_000
_PHASE_SEP = 1e-9  # minimum phase separation accepted at initialization

END, START = 0, 1  # event kinds; ends sort before starts at equal times


@dataclass
class SchedConfig:
    """Scheduling parameters; demands are kept as exact rationals."""

    beta: float
    delta: Fraction
    demands: tuple[Fraction, ...]
    max_frames: int = 5_000
    eps_fix: float = 1e-9
    window: int = 3

    def __init__(self, beta, delta, demands, max_frames=5_000, eps_fix=1e-9, window=3):
        if not (0.0 < beta < 1.0):
            raise ConfigError(f"beta must lie strictly inside (0, 1), got {beta}")
        self.beta = float(beta)
        self.delta = Fraction(delta)
        self.demands = tuple(Fraction(d) for d in demands)
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if any(d <= 0 for d in self.demands):
            raise ConfigError("all demands must be positive")
        self.max_frames = int(max_frames)
        self.eps_fix = float(eps_fix)
        self.window = int(window)


@dataclass
class SchedRunRecord:
    converged: bool
    frames: int                 # frames simulated
    frames_to_converge: int     # frame of the last observed change
    upsilons: dict[int, tuple[float, ...]]
    reason: str


class SchedState:
    """Mutable engine state for one scheduling run.

    Timers are stored as absolute next-firing times; the phase of node i's
    start timer at time t is 1 - (next_start[i] - t) and likewise for the
    end timer.  Slot and gap widths are differences of firing times, so
    they stay constant between updates.
    """

    def __init__(self, topology: Topology, cover: CliqueCover, config: SchedConfig,
                 next_start, next_end):
        n = topology.node_count
        if len(config.demands) != n:
            raise ConfigError("demands length does not match node count")
        for c, members in enumerate(cover.cliques):
            if len(members) < 2:
                raise ConfigError(
                    f"clique {c} has a single node; scheduling needs cliques of size >= 2"
                )
        self.topology = topology
        self.cover = cover
        self.config = config
        self.n = n
        self.next_start = [float(t) for t in next_start]
        self.next_end = [float(t) for t in next_end]
        self.sim_time = 0.0
        self.order: dict[int, tuple[int, ...]] = {}
        for c, members in enumerate(cover.cliques):
            phis = {i: self.phi(i, 0.0) for i in members}
            self.order[c] = tuple(sorted(members, key=lambda i: (-phis[i], i)))
        # beacon bookkeeping
        self.awaiting = [False] * n    # own end fired; update on next heard start
        self.updates_done = [0] * n
        self.end_fires = [0] * n
        self.heap: list[tuple[float, int, int]] = []
        for i in range(n):
            heapq.heappush(self.heap, (self.next_end[i], END, i))
            heapq.heappush(self.heap, (self.next_start[i], START, i))
        self.float_demands = [float(d) for d in config.demands]
        self.float_delta = float(config.delta)

    def phi(self, i: int, t: float | None = None) -> float:
        """Start-timer phase of node i at time t (defaults to now)."""
        t = self.sim_time if t is None else t
        return 1.0 - (self.next_start[i] - t)

    def psi(self, i: int, t: float | None = None) -> float:
        t = self.sim_time if t is None else t
        return 1.0 - (self.next_end[i] - t)

    def gamma(self, i: int) -> float:
        """Slot width of node i (start minus end phase, mod 1)."""
        return (self.next_end[i] - self.next_start[i]) % 1.0


def _collision_violations(phis, gammas, cover, tol=0.0):
    bad = []
    for c, members in enumerate(cover.cliques):
        for i in members:
            for j in members:
                if i == j:
                    continue
                if (phis[i] - phis[j]) % 1.0 < gammas[i] - tol:
                    bad.append((c, i, j))
    return bad


def collision_free(state: SchedState, tol: float = 1e-12) -> bool:
    """Check that no clique member's start phase falls inside another
    member's slot (the collision-avoidance condition)."""
    phis = [state.phi(i) for i in range(state.n)]
    gammas = [state.gamma(i) for i in range(state.n)]
    return not _collision_violations(phis, gammas, state.cover, tol=tol)


def _locals_consecutive(phis, cover) -> bool:
    for c, members in enumerate(cover.cliques):
        locs = set(cover.local[c])
        if not locs or len(locs) == len(members):
            continue
        order = sorted(members, key=lambda i: -phis[i])
        flags = [i in locs for i in order]
        # count blocks of locals in the circular order
        blocks = sum(
            1 for k in range(len(flags)) if flags[k] and not flags[k - 1]
        )
        if blocks > 1:
            return False
    return True


def init_schedule(topology: Topology, cover: CliqueCover, config: SchedConfig,
                  seed=None, mode: str = "random-rejection",
                  require_consecutive_locals: bool = False,
                  timers=None) -> SchedState:
    """Build an initial collision-free schedule state.

    Modes: ``global-equal`` divides the frame into equal slots by node id
    (always collision-free); ``random-rejection`` draws uniform start
    phases and slot widths up to half the equal-share width, resampling
    until every clique passes collision avoidance (and, when requested,
    until every clique's local nodes occupy consecutive slots).  Explicit
    ``timers=(phis, psis)`` bypasses sampling but is still validated.
    """
    n = topology.node_count
    if timers is not None:
        phis, psis = ([float(x) for x in arr] for arr in timers)
        gammas = [(p - q) % 1.0 for p, q in zip(phis, psis)]
        if _collision_violations(phis, gammas, cover):
            raise ConfigError("explicit timers violate collision avoidance")
        return _state_from_phases(topology, cover, config, phis, psis)

    if mode == "global-equal":
        width = 1.0 / (2 * n)
        next_start = [i / n for i in range(n)]
        next_end = [i / n + width for i in range(n)]
        return SchedState(topology, cover, config, next_start, next_end)

    if mode != "random-rejection":
        raise ConfigError(f"unknown init mode {mode!r}")
    if seed is None:
        raise ConfigError("random-rejection initialization needs a seed")
    rng = make_generator(seed)
    max_clique = max(len(m) for m in cover.cliques)
    w_max = 1.0 / (2 * max_clique)
    for _ in range(INIT_ATTEMPT_CAP):
        phis = rng.random(n).tolist()
        gammas = (rng.random(n) * w_max).tolist()
        sep_ok = all(
            (phis[i] - phis[j]) % 1.0 > _PHASE_SEP
            for members in cover.cliques
            for i in members
            for j in members
            if i != j
        )
        if not sep_ok:
            continue
        if _collision_violations(phis, gammas, cover, tol=-_PHASE_SEP):
            continue
        if require_consecutive_locals and not _locals_consecutive(phis, cover):
            continue
        psis = [(p - g) % 1.0 for p, g in zip(phis, gammas)]
        return _state_from_phases(topology, cover, config, phis, psis)
    raise InitRejectionExhausted(
        f"no collision-free initialization found in {INIT_ATTEMPT_CAP} attempts"
    )


def _state_from_phases(topology, cover, config, phis, psis):
    next_start = [1.0 - p for p in phis]
    next_end = [1.0 - q for q in psis]
    return SchedState(topology, cover, config, next_start, next_end)


def pre_suc(state: SchedState, i: int, c: int) -> tuple[int, int]:
    """Cyclic neighbors of node i in clique c's fixed firing order."""
    order = state.order.get(c)
    if order is None or i not in order:
        raise NotInClique(f"node {i} is not in clique {c}")
    k = order.index(i)
    return order[k - 1], order[(k + 1) % len(order)]


def global_pre_suc(state: SchedState, i: int) -> tuple[int, int]:
    """The nodes transmitting immediately before and after node i across
    all its cliques; ties resolve to the lower clique index."""
    cliques = state.cover.membership[i]
    best_pre, best_pre_gap = None, None
    best_suc, best_suc_gap = None, None
    for c in cliques:
        p, s = pre_suc(state, i, c)
        pre_gap = (state.psi(p) - state.phi(i)) % 1.0
        suc_gap = (state.psi(i) - state.phi(s)) % 1.0
        if best_pre_gap is None or pre_gap < best_pre_gap:
            best_pre, best_pre_gap = p, pre_gap
        if best_suc_gap is None or suc_gap < best_suc_gap:
            best_suc, best_suc_gap = s, suc_gap
    return best_pre, best_suc


def compute_target(psi_pre_value: float, demand: float, delta: float) -> tuple[float, float]:
    """Target phases splitting the window since the predecessor's end
    firing as (delta, demand, delta) out of demand + 2*delta."""
    demand = float(demand)
    delta = float(delta)
    scale = demand + 2.0 * delta
    return (demand + delta) / scale * psi_pre_value, delta / scale * psi_pre_value


def combine_update(phase: float, target: float, beta: float) -> float:
    """Convex combination of a current phase with its target."""
    return (1.0 - beta) * phase + beta * target


def apply_update(state: SchedState, i: int) -> None:
    """Move node i's timers toward their targets at the current instant.

    Only legal once per round, right when the successor's start fires;
    calling it without the node awaiting its trigger indicates the engine
    broke protocol order.
    """
    if not state.awaiting[i]:
        raise MissingPreReference(
            f"node {i} updating at t={state.sim_time} without an armed round"
        )
    state.awaiting[i] = False
    t = state.sim_time
    pre_node, _ = global_pre_suc(state, i)
    window = state.psi(pre_node)  # predecessor's end-timer phase right now
    phi_t, psi_t = state.phi(i), state.psi(i)
    tgt_phi, tgt_psi = compute_target(window, state.float_demands[i], state.float_delta)
    beta = state.config.beta
    new_phi = combine_update(phi_t, tgt_phi, beta)
    new_psi = combine_update(psi_t, tgt_psi, beta)
    state.next_start[i] = t + 1.0 - new_phi
    state.next_end[i] = t + 1.0 - new_psi
    heapq.heappush(state.heap, (state.next_start[i], START, i))
    heapq.heappush(state.heap, (state.next_end[i], END, i))
    state.updates_done[i] += 1


def _process_event(state: SchedState, t: float, kind: int, node: int) -> None:
    state.sim_time = t
    if kind == END:
        state.next_end[node] = t + 1.0
        heapq.heappush(state.heap, (state.next_end[node], END, node))
        state.end_fires[node] += 1
        state.awaiting[node] = True
    else:
        state.next_start[node] = t + 1.0
        heapq.heappush(state.heap, (state.next_start[node], START, node))
        for j in sorted(state.topology.neighbors[node]):
            if state.awaiting[j]:
                apply_update(state, j)


def run_frames(state: SchedState, n_frames: int | None = None,
               until_fixed: bool = True,
               dump: list | None = None) -> SchedRunRecord:
    """Simulate timer expirations in time order, frame by frame.

    Convergence means the largest per-clique state-vector change stays
    below ``eps_fix`` over ``window`` consecutive frame boundaries.  With
    ``dump`` given, (frame, node, phi, psi) rows are appended at every
    frame boundary for schedule trajectory export.
    """
    cfg = state.config
    limit = cfg.max_frames if n_frames is None else int(n_frames)
    prev = upsilon_all(state)
    last_change_frame = 0
    stable = 0
    frame = 0

    def snapshot(k: int):
        if dump is not None:
            for i in range(state.n):
                dump.append((k, i, state.phi(i, float(k)), state.psi(i, float(k))))

    snapshot(0)
    while frame < limit:
        boundary = frame + 1.0
        while state.heap and state.heap[0][0] < boundary:
            t, kind, node = heapq.heappop(state.heap)
            # stale entries (rescheduled timers) no longer match
            current = state.next_end[node] if kind == END else state.next_start[node]
            if t != current:
                continue
            _process_event(state, t, kind, node)
        state.sim_time = boundary
        frame += 1
        snapshot(frame)
        cur = upsilon_all(state)
        diff = max(
            (abs(a - b) for c in cur for a, b in zip(cur[c], prev[c])),
            default=0.0,
        )
        prev = cur
        if diff < cfg.eps_fix:
            stable += 1
            if until_fixed and stable >= cfg.window:
                return SchedRunRecord(
                    converged=True,
                    frames=frame,
                    frames_to_converge=last_change_frame,
                    upsilons=cur,
                    reason="fixed",
                )
        else:
            stable = 0
            last_change_frame = frame
    converged = stable >= cfg.window
    return SchedRunRecord(
        converged=converged,
        frames=frame,
        frames_to_converge=last_change_frame,
        upsilons=upsilon_all(state),
        reason="fixed" if converged else "max_frames",
    )


def extract_upsilon(state: SchedState, c: int) -> tuple[float, ...]:
    """Interleaved (gap, slot) vector of clique c in firing order; the
    entries partition the frame and sum to 1."""
    order = state.order[c]
    out = []
    for k, i in enumerate(order):
        pre = order[k - 1]
        theta = (state.next_start[i] - state.next_end[pre]) % 1.0
        gamma = (state.next_end[i] - state.next_start[i]) % 1.0
        out.extend((theta, gamma))
    return tuple(out)


def upsilon_all(state: SchedState) -> dict[int, tuple[float, ...]]:
    return {c: extract_upsilon(state, c) for c in range(len(state.cover))}


def write_schedule_dump(rows, fp) -> None:
    """Write (frame, node, phi, psi) rows as CSV for trajectory plots."""
    fp.write("frame,node,phi,psi\n")
    for (k, i, phi, psi) in rows:
        fp.write(f"{k},{i},{phi!r},{psi!r}\n")
