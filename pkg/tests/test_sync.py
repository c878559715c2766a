"""Excitatory synchronization engine: updates, cascades, fixed points."""

import numpy as np
import pytest

from pcosim import sync
from pcosim.errors import ConfigError, NoHead, RefractoryWindowEmpty
from pcosim.harness import chained_cliques_topology
from pcosim.rng import trial_seed
from pcosim.topology import build_topology, delay_distances


def line(n, taus=None):
    edges = [(i, i + 1) for i in range(n - 1)]
    return build_topology(n, edges, taus)


class TestFiringUpdate:
    def test_plain_jump(self):
        assert sync.apply_firing_update(0.5, 0.01) == pytest.approx(0.505)

    def test_absorption_threshold(self):
        # 0.995 > 1/1.01, so the update saturates at 1
        assert sync.apply_firing_update(0.995, 0.01) == 1.0

    def test_uncoupled(self):
        assert sync.apply_firing_update(0.5, 0.01, coupled=False) == 0.5


class TestConfigAndInit:
    def test_alpha_positive(self):
        with pytest.raises(ConfigError):
            sync.SyncConfig(alpha=0.0)

    def test_rho_window(self):
        t = build_topology(2, [(0, 1)], [0.3])
        lo, hi = sync.admissible_rho_window(t)
        assert (lo, hi) == (0.6, pytest.approx(0.8))
        st = sync.init_sync(t, sync.SyncConfig(alpha=0.1, rho=0.7), seed=1)
        assert st.rho == 0.7

    def test_empty_window(self):
        t = build_topology(3, [(0, 1), (1, 2)], [0.3, 0.1])
        with pytest.raises(RefractoryWindowEmpty):
            sync.admissible_rho_window(t)

    def test_rho_rejected_outside_window(self):
        t = build_topology(2, [(0, 1)], [0.3])
        with pytest.raises(ConfigError):
            sync.init_sync(t, sync.SyncConfig(alpha=0.1, rho=0.5), seed=1)

    def test_default_rho(self):
        t = build_topology(2, [(0, 1)], [0.01])
        assert sync.default_rho(t) == pytest.approx(0.03)
        assert sync.default_rho(line(2)) == 0.0

    def test_seed_determinism(self):
        t = line(3)
        cfg = sync.SyncConfig(alpha=0.1)
        a = sync.init_sync(t, cfg, seed=7).phases_now()
        b = sync.init_sync(t, cfg, seed=7).phases_now()
        assert a == b

    def test_explicit_synchronous_start(self):
        t = line(3)
        st = sync.init_sync(t, sync.SyncConfig(alpha=0.1), phases=(0.0, 0.0, 0.0))
        assert st.delta_vector().delta_max() == 0.0
        rec = sync.run_until_fixed(st)
        assert rec.converged and rec.time == 0.0
        assert rec.delta.delta_max() == 0.0


class TestStep:
    def test_single_update(self):
        t = line(2)
        st = sync.init_sync(t, sync.SyncConfig(alpha=1.0), phases=(0.999999, 0.4))
        sync.step(st)
        # node 0 fired; node 1 doubled its (advanced) phase
        assert st.phase(0) == 0.0
        assert st.phase(1) == pytest.approx(0.8, abs=1e-5)

    def test_absorption_cascade(self):
        t = line(2)
        st = sync.init_sync(t, sync.SyncConfig(alpha=1.0), phases=(1 - 1e-9, 0.6))
        events = sync.step(st)
        kinds = [e[1] for e in events]
        assert "absorb" in kinds
        assert st.next_fire[0] == st.next_fire[1]  # synchronized exactly
        assert st.delta_vector().delta_max() == 0.0

    def test_refractory_blocks_converged_pair(self):
        # pair at distance tau: all deliveries land inside the refractory
        t = build_topology(2, [(0, 1)], [0.01])
        st = sync.init_sync(t, sync.SyncConfig(alpha=1.0, rho=0.05),
                            phases=(0.5, 0.49))
        before = st.delta_vector().edge_vector()
        for _ in range(40):
            sync.step(st)
        after = st.delta_vector().edge_vector()
        assert after == pytest.approx(before, abs=1e-12)
        assert st.rounds_completed() >= 10

    def test_monotone_forward_motion(self):
        # updates may only pull firings earlier (phases jump forward)
        t = chained_cliques_topology((3, 3, 3), tau=0.005)
        st = sync.init_sync(t, sync.SyncConfig(alpha=0.3), seed=5)
        for _ in range(400):
            before = list(st.next_fire)
            events = sync.step(st)
            fired = {e[2] for e in events if e[1] in ("fire", "absorb")}
            for i in range(t.node_count):
                if i in fired:
                    continue
                assert st.next_fire[i] <= before[i] + 1e-12

    def test_zero_phase_receiver_unchanged(self):
        # a node at phase exactly 0 ignores simultaneous pulses
        t = line(2)
        st = sync.init_sync(t, sync.SyncConfig(alpha=1.0), phases=(0.5, 0.0))
        sync.step(st)  # node 1's phase would hit 1 only after 0 fires
        assert st.phase(1) == pytest.approx(1.0) or st.phase(1) == 0.0

    def test_complete_graph_cascade_within_budget(self):
        # a full sync cascade on a complete graph must not trip the storm guard
        n = 6
        edges = [(a, b) for a in range(n) for b in range(a + 1, n)]
        t = build_topology(n, edges)
        st = sync.init_sync(t, sync.SyncConfig(alpha=1.0), phases=[0.9] * n)
        sync.step(st)
        assert st.delta_vector().delta_max() == 0.0


class TestRunUntilFixed:
    def test_three_node_line_converges(self):
        t = line(3)
        cfg = sync.SyncConfig(alpha=0.01)
        for k in range(20):
            st = sync.init_sync(t, cfg, seed=trial_seed(1, k))
            rec = sync.run_until_fixed(st)
            assert rec.converged
            assert rec.delta.delta_max() < 1e-9

    def test_delayed_fixed_point_membership(self):
        rng = np.random.default_rng(3)
        for k in range(15):
            n = int(rng.integers(3, 8))
            edges = [(i, i + 1) for i in range(n - 1)]
            extra = [(i, j) for i in range(n) for j in range(i + 2, n)]
            rng.shuffle(extra)
            edges += extra[: n // 2]
            taus = rng.uniform(0.001, 0.02, len(edges)).tolist()
            t = build_topology(n, edges, taus)
            st = sync.init_sync(t, sync.SyncConfig(alpha=0.2), seed=trial_seed(2, k))
            rec = sync.run_until_fixed(st)
            if not rec.converged:
                continue
            for (i, j) in t.edges:
                assert -1e-12 <= rec.delta.delta(i, j) <= t.tau(i, j) + 1e-9

    def test_non_convergence_is_verdict(self):
        t = build_topology(2, [(0, 1)], [0.01])
        cfg = sync.SyncConfig(alpha=0.001, max_periods=3.0)
        st = sync.init_sync(t, cfg, seed=9)
        rec = sync.run_until_fixed(st)
        assert not rec.converged and rec.reason == "max_periods"

    def test_trace_determinism(self):
        t = line(3, [0.01, 0.01])
        cfg = sync.SyncConfig(alpha=0.2, max_periods=50)
        traces = []
        for _ in range(2):
            st = sync.init_sync(t, cfg, seed=17, trace=True)
            sync.run_until_fixed(st)
            traces.append(list(st.trace))
        assert traces[0] == traces[1]

    def test_trace_export(self, tmp_path):
        t = line(2)
        st = sync.init_sync(t, sync.SyncConfig(alpha=0.5), seed=3, trace=True)
        sync.run_until_fixed(st)
        out = tmp_path / "trace.jsonl"
        with open(out, "w") as fp:
            sync.write_trace(st, fp)
        lines = out.read_text().splitlines()
        assert lines
        import json
        kinds = {json.loads(line)["type"] for line in lines}
        assert kinds <= {"fire", "deliver", "absorb"}


class TestHeadNodes:
    def test_synchronized_all_heads(self):
        dv = sync.DeltaVector(phases=(0.2, 0.2, 0.2), edges=((0, 1), (1, 2)))
        assert sync.head_nodes(dv) == [0, 1, 2]

    def test_two_node_head(self):
        dv = sync.DeltaVector(phases=(0.30, 0.29), edges=((0, 1),))
        assert sync.head_nodes(dv) == [0]
        assert dv.delta(0, 1) == pytest.approx(0.01)

    def test_chained_clique_gateway_head(self):
        # uniform delays; offsets from the second gateway equal tau * hops,
        # so that gateway precedes everyone and the state is stationary
        tau = 0.005
        t = chained_cliques_topology((4, 3, 4), tau=tau)
        head = 5  # gateway between the middle and last cliques
        dist = delay_distances(t, head)
        phases = [(0.9 - dist[j]) % 1.0 for j in range(t.node_count)]
        st = sync.init_sync(t, sync.SyncConfig(alpha=0.01), phases=phases)
        dv = st.delta_vector()
        assert head in sync.head_nodes(dv)
        for j in range(t.node_count):
            if j != head:
                assert dv.delta(head, j) <= dist[j] + 1e-9
        before = dv.edge_vector()
        for _ in range(200):
            sync.step(st)
        assert st.rounds_completed() >= 10
        assert st.delta_vector().edge_vector() == pytest.approx(before, abs=1e-9)

    def test_no_head_raises(self):
        # three phases spread evenly: nobody precedes everyone
        dv = sync.DeltaVector(phases=(0.0, 1 / 3, 2 / 3), edges=((0, 1), (1, 2)))
        with pytest.raises(NoHead):
            sync.head_nodes(dv)


class TestJoinNode:
    def _synchronized_state(self, topo):
        st = sync.init_sync(topo, sync.SyncConfig(alpha=0.3), phases=[0.4] * topo.node_count)
        return st

    def test_join_triangle_reconverges(self):
        t = build_topology(3, [(0, 1), (0, 2), (1, 2)])
        st = self._synchronized_state(t)
        grown = sync.join_node(st, attach_to=[0, 1], seed=3)
        rec = sync.run_until_fixed(grown)
        assert rec.converged and rec.delta.delta_max() < 1e-9

    def test_join_with_matching_phase(self):
        t = build_topology(3, [(0, 1), (0, 2), (1, 2)])
        st = self._synchronized_state(t)
        grown = sync.join_node(st, attach_to=[2], phase=st.phase(0))
        rec = sync.run_until_fixed(grown)
        assert rec.converged and rec.time == 0.0

    def test_join_pendant_to_star(self):
        t = build_topology(5, [(0, i) for i in range(1, 5)])
        st = self._synchronized_state(t)
        for k in range(10):
            grown = sync.join_node(st, attach_to=[3], seed=trial_seed(77, k))
            rec = sync.run_until_fixed(grown)
            assert rec.converged and rec.delta.delta_max() < 1e-9

    def test_join_requires_sync(self):
        t = build_topology(2, [(0, 1)])
        st = sync.init_sync(t, sync.SyncConfig(alpha=0.1), phases=(0.1, 0.6))
        with pytest.raises(ConfigError):
            sync.join_node(st, attach_to=[0], phase=0.5)
