"""Update matrices, spectra, closed-form fixed points, fairness, coloring."""

import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from pcosim import harness, sched, spectral
from pcosim.errors import AssumptionViolated, ConfigError, UnsupportedArrangement
from pcosim.rng import trial_seed
from pcosim.topology import build_topology, maximal_cliques


def complete(n):
    return build_topology(n, [(a, b) for a in range(n) for b in range(a + 1, n)])


class TestMatrices:
    def test_block_entries(self):
        U = spectral.update_block(4, 1, 0.5)
        expected = np.array([
            [7 / 12, 1 / 12, 1 / 12],
            [1 / 3, 5 / 6, 1 / 3],
            [1 / 12, 1 / 12, 7 / 12],
        ])
        assert np.allclose(U, expected, atol=1e-15)

    def test_zero_coupling_is_identity(self):
        sysm = spectral.build_clique_system([4, 4, 4], 1, 0.0)
        assert np.allclose(sysm.round_matrix, np.eye(6))

    def test_column_sums_random_sweep(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            demands = [Fraction(int(rng.integers(1, 9))) for _ in range(n)]
            delta = Fraction(int(rng.integers(1, 4)))
            beta = float(rng.uniform(0.05, 0.95))
            sysm = spectral.build_clique_system(demands, delta, beta)
            for M in sysm.node_matrices + [sysm.round_matrix]:
                assert np.max(np.abs(M.sum(axis=0) - 1.0)) < 1e-12

    def test_round_matrix_fixes_prediction(self):
        demands = [4, 2, 5, 3]
        sysm = spectral.build_clique_system(demands, 1, 0.37)
        pred = spectral.fixed_point_single_clique(demands, 1)
        ups = np.array([float(x) for x in pred.upsilon[0]])
        assert np.linalg.norm(sysm.round_matrix @ ups - ups) < 1e-9

    def test_reduced_product_eigenvectors(self):
        # the product of all-but-last node updates fixes both the
        # proportional vector with a trailing zero and the last basis vector
        n = 4
        sysm = spectral.build_clique_system([4] * n, 1, 0.5)
        Mt = np.eye(2 * n)
        for k in range(n - 1):
            Mt = Mt @ sysm.node_matrices[k]
        dtil = Fraction(4 * (n - 1))
        gtil = dtil / (dtil + n)
        u = []
        for _ in range(n - 1):
            u += [float(gtil / dtil), float(gtil * 4 / dtil)]
        u += [float(gtil / dtil), 0.0]
        u = np.array(u)
        e_last = np.zeros(2 * n)
        e_last[-1] = 1.0
        assert np.linalg.norm(Mt @ u - u) < 1e-9
        assert np.linalg.norm(Mt @ e_last - e_last) < 1e-9


class TestEigenvalues:
    def test_unit_leading_eigenvalue(self):
        for demands in ([4, 4, 4, 4], [3, 1, 5]):
            rep = spectral.eigenvalues(spectral.build_clique_system(demands, 1, 0.5))
            assert abs(abs(rep.eigenvalues[0]) - 1.0) < 1e-9
            assert all(abs(v) <= 1.0 + 1e-9 for v in rep.eigenvalues)
            assert max(rep.residuals) < 1e-8

    def test_estimate_error_shrinks_with_n(self):
        errors = []
        for n in (8, 16, 32, 64):
            rep = spectral.eigenvalues(spectral.build_clique_system([4] * n, 1, 0.5))
            errors.append(abs(rep.lambda2_exact - rep.lambda2_estimate))
        assert all(a >= b for a, b in zip(errors, errors[1:]))
        assert errors[0] < 2e-2  # n=8 discrepancy of the closed form

    def test_n2_quartic_oracle(self):
        # characteristic polynomial via the trace recursion, roots via numpy
        sysm = spectral.build_clique_system([4, 4], 1, 0.5)
        M = sysm.round_matrix
        coeffs = _char_poly_coeffs(M)
        roots = sorted(np.roots(coeffs), key=lambda z: -abs(z))
        eigs = sorted(np.linalg.eigvals(M), key=lambda z: -abs(z))
        for r, e in zip(roots, eigs):
            assert abs(abs(r) - abs(e)) < 1e-8


def _char_poly_coeffs(M):
    """Faddeev-LeVerrier recursion; independent of the eigensolver."""
    n = M.shape[0]
    coeffs = [1.0]
    B = np.zeros_like(M)
    c = 1.0
    for k in range(1, n + 1):
        B = M @ B + c * np.eye(n)
        c = -np.trace(M @ B) / k
        coeffs.append(c)
    return coeffs


class TestClosedFormEstimate:
    def test_reference_value(self):
        est = spectral.lambda2_approx(8, 0.5, 4, 1)
        assert est == pytest.approx(1 - math.pi ** 2 / 384)
        assert est == pytest.approx(0.974297, abs=1e-5)

    def test_zero_coupling_limit(self):
        assert spectral.lambda2_approx(8, 0.0, 4, 1) == 1.0


class TestPerturbationRoots:
    def test_last_index_dominates(self):
        for beta in (0.2, 0.5, 0.8):
            for mu in (1 / 6, 1 / 12, 1 / 30):
                roots = spectral.perturbation_roots(16, beta, mu)
                mods = [abs(lam) for (_, _, lam) in roots]
                assert int(np.argmax(mods)) == len(mods) - 1  # k = n-1

    def test_vanishing_mu_reaches_unit_circle(self):
        roots = spectral.perturbation_roots(8, 0.5, 1e-9)
        for (k, _, lam) in roots:
            assert abs(abs(lam) - 1.0) < 1e-6
            assert abs(cmath.phase(lam) % (2 * math.pi) - 2 * math.pi * k / 8) % (
                2 * math.pi) < 1e-6

    def test_residual_shrinks_with_mu(self):
        n, beta = 16, 0.5
        residuals = []
        for mu in (1 / 6, 1 / 18, 1 / 60):
            lam = spectral.perturbation_roots(n, beta, mu)[-1][2]
            residuals.append(abs(spectral.char_poly_eval(lam, n, beta, mu)))
        assert residuals[0] < 1e-2
        assert residuals[-1] < 1e-3
        assert residuals[0] > residuals[1] > residuals[2]


class TestCharPoly:
    def test_unity_is_exact_root(self):
        for n in (2, 5, 16):
            for beta in (0.1, 0.5, 0.9):
                assert spectral.char_poly_eval(1.0, n, beta, 1 / 6) == 0.0

    def test_mu_zero_roots_of_unity(self):
        n = 12
        for k in range(n):
            lam = cmath.exp(2j * math.pi * k / n)
            assert abs(spectral.char_poly_eval(lam, n, 0.5, 0.0)) < 1e-12

    def test_cross_validation_with_solver(self):
        rep = spectral.eigenvalues(spectral.build_clique_system([4] * 8, 1, 0.5))
        assert rep.char_residuals is not None
        assert max(rep.char_residuals) < 1e-6


class TestSingleCliquePrediction:
    def test_reference_instance(self):
        pred = spectral.fixed_point_single_clique([4, 4, 4], 1)
        assert pred.upsilon[0] == (
            Fraction(1, 15), Fraction(4, 15),
        ) * 3

    def test_vanishing_guard_limit(self):
        eps = Fraction(1, 10 ** 9)
        pred = spectral.fixed_point_single_clique([4, 2, 6], eps)
        assert all(g < Fraction(1, 10 ** 8) for g in pred.guard.values())
        total = Fraction(12)
        for i, D in enumerate([4, 2, 6]):
            assert abs(pred.slot[i] - Fraction(D) / total) < Fraction(1, 10 ** 8)

    def test_exact_unit_sum_random(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(2, 8))
            demands = [Fraction(int(rng.integers(1, 12))) for _ in range(n)]
            delta = Fraction(int(rng.integers(1, 5)), int(rng.integers(1, 3)))
            pred = spectral.fixed_point_single_clique(demands, delta)
            assert sum(pred.upsilon[0], Fraction(0)) == 1


class TestTwoCliquePrediction:
    def test_one_shared_node_reference(self):
        # |V1|=4, |V2|=3, D=4, delta=1: gateway slot 1/5, guards 1/20
        topo = harness.two_clique_topology(3, 1, 2)
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_two_clique(cover, [4] * 6, 1)
        gw = cover.shared[(0, 1)][0]
        assert pred.slot[gw] == Fraction(1, 5)
        assert pred.guard[gw] == Fraction(1, 20)
        for c in (0, 1):
            assert sum(pred.upsilon[c], Fraction(0)) == 1

    def test_shared_constraint_exact(self):
        # the gateway's gaps equal (delta / demand) times its slot, exactly
        topo = harness.two_clique_topology(3, 1, 2)
        cover = maximal_cliques(topo)
        demands = [Fraction(5), Fraction(2), Fraction(7), Fraction(3),
                   Fraction(4), Fraction(6)]
        pred = spectral.fixed_point_two_clique(cover, demands, 2)
        gw = cover.shared[(0, 1)][0]
        assert pred.guard[gw] == Fraction(2) / demands[gw] * pred.slot[gw]

    def test_consecutive_block_matches_simulation(self):
        topo = harness.two_clique_topology(5, 2, 2)
        cover = maximal_cliques(topo)
        demands = [Fraction(4)] * 9
        pred = spectral.fixed_point_two_clique(cover, demands, 1)
        assert pred.slot[5] == Fraction(4, 35) and pred.slot[0] == Fraction(4, 35)
        cfg = sched.SchedConfig(beta=0.5, delta=1, demands=demands, max_frames=3000)
        shared = set(cover.shared[(0, 1)])
        st = sched.init_schedule(topo, cover, cfg, seed=trial_seed(9, 0),
                                 require_consecutive_locals=True)
        rec = sched.run_frames(st)
        assert rec.converged
        for c in (0, 1):
            dev = spectral.match_prediction(
                rec.upsilons[c], st.order[c], pred.upsilon[c], pred.orders[c],
                role=lambda i: i in shared)
            assert dev is not None and dev < 1e-6

    def test_split_arrangement_matches_simulation(self):
        topo = harness.two_clique_topology(2, 2, 2)
        cover = maximal_cliques(topo)
        demands = [Fraction(4), Fraction(3), Fraction(4), Fraction(5),
                   Fraction(2), Fraction(4)]
        arrangement = {0: ((0,), (1,)), 1: ((4,), (5,))}
        pred = spectral.fixed_point_two_clique(cover, demands, 1,
                                               arrangement=arrangement)
        for c in (0, 1):
            assert sum(pred.upsilon[c], Fraction(0)) == 1
        # explicit interleaved initialization: 2, (0|4), 3, (1|5)
        phis = {2: 0.95, 0: 0.7, 4: 0.72, 3: 0.45, 1: 0.2, 5: 0.22}
        phis_list = [phis[i] for i in range(6)]
        psis_list = [(phis[i] - 0.04) % 1.0 for i in range(6)]
        cfg = sched.SchedConfig(beta=0.5, delta=1, demands=demands,
                                max_frames=6000, eps_fix=1e-11)
        st = sched.init_schedule(topo, cover, cfg, timers=(phis_list, psis_list))
        rec = sched.run_frames(st)
        assert rec.converged
        for c in (0, 1):
            dev = spectral.match_prediction(rec.upsilons[c], st.order[c],
                                            pred.upsilon[c], pred.orders[c])
            assert dev is not None and dev < 1e-6
        fair = spectral.check_fairness(pred, cover, demands, 1)
        assert fair.partial and not fair.global_

    def test_unsupported_arrangements(self):
        topo = harness.two_clique_topology(2, 3, 2)
        cover = maximal_cliques(topo)
        with pytest.raises(UnsupportedArrangement):
            spectral.fixed_point_two_clique(cover, [4] * 7, 1,
                                            arrangement={0: ((), ()), 1: ((), ())})
        topo2 = harness.two_clique_topology(2, 2, 2)
        cover2 = maximal_cliques(topo2)
        with pytest.raises(UnsupportedArrangement):
            spectral.fixed_point_two_clique(
                cover2, [4] * 6, 1,
                arrangement={0: ((0, 1), ()), 1: ((4,), (5,))})


class TestMultiCliquePrediction:
    def test_equal_demand_star(self):
        topo = build_topology(6, [(0, i) for i in range(1, 6)])
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 6, 1)
        for i in range(6):
            assert pred.slot[i] == Fraction(4, 10)  # D/(D+delta) * 1/2

    def test_equal_demand_line(self):
        topo = build_topology(6, [(i, i + 1) for i in range(5)])
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 6, 1)
        assert all(s == Fraction(2, 5) for s in pred.slot.values())
        for c in range(len(cover)):
            assert sum(pred.upsilon[c], Fraction(0)) == 1

    def test_tree_decreasing_demand(self):
        #    0 - 1 - 2 ;  1 - 3 ; 3 - 4   with demands 8, 6, 3, 4, 2
        topo = build_topology(5, [(0, 1), (1, 2), (1, 3), (3, 4)])
        cover = maximal_cliques(topo)
        demands = [8, 6, 3, 4, 2]
        pred = spectral.fixed_point_multiclique(topo, cover, demands, 1)
        # root pair (0,1): slots split 8:6 of gamma
        pair = Fraction(14)
        gamma = pair / (pair + 2)
        assert pred.slot[0] == gamma * 8 / pair
        assert pred.slot[1] == gamma * 6 / pair
        # child 2 takes the window left by node 1
        w = 1 - pred.slot[1]
        assert pred.slot[2] == w * 3 / (3 + 2)
        for c in range(len(cover)):
            assert sum(pred.upsilon[c], Fraction(0)) == 1

    def test_tree_increasing_demand_rejected(self):
        topo = build_topology(3, [(0, 1), (1, 2)])
        cover = maximal_cliques(topo)
        with pytest.raises(AssumptionViolated):
            spectral.fixed_point_multiclique(topo, cover, [8, 6, 7], 1)

    def test_chained_set_valued(self):
        topo = harness.chained_cliques_topology((4, 3, 4))
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 9, 1)
        assert pred.set_valued
        assert pred.theta_range == (Fraction(1, 20), Fraction(3, 10))
        for c in (0, 2):
            assert pred.upsilon[c] == (Fraction(1, 20), Fraction(1, 5)) * 4
        base, coef = pred.upsilon_affine[1]
        assert base == (Fraction(0), Fraction(1, 5), Fraction(1, 10),
                        Fraction(2, 5), Fraction(1, 10), Fraction(1, 5))
        assert coef == (Fraction(1), Fraction(0), Fraction(-1, 6),
                        Fraction(-2, 3), Fraction(-1, 6), Fraction(0))

    def test_theta_instantiation(self):
        topo = harness.chained_cliques_topology((4, 3, 4))
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 9, 1)
        inst = spectral.instantiate_theta(pred, Fraction(1, 10))
        assert not inst.set_valued
        assert sum(inst.upsilon[1], Fraction(0)) == 1
        with pytest.raises(ConfigError):
            spectral.instantiate_theta(pred, Fraction(1, 2))

    def test_assumption_violation_witness(self):
        # a middle clique of pure gateways spanning three partitions, with a
        # two-node shared block breaking the chained pattern
        edges = (
            [(a, b) for a in (0, 1, 2, 3) for b in (0, 1, 2, 3) if a < b]
            + [(2, 4), (3, 4)]
            + [(a, b) for a in (4, 5, 6, 7) for b in (4, 5, 6, 7) if a < b]
        )
        topo = build_topology(8, sorted(set(edges)))
        cover = maximal_cliques(topo)
        with pytest.raises(AssumptionViolated) as err:
            spectral.fixed_point_multiclique(topo, cover, [4] * 8, 1)
        assert err.value.witness is not None

    def test_unequal_demand_non_tree_rejected(self):
        topo = harness.chained_cliques_topology((3, 3, 3))
        cover = maximal_cliques(topo)
        with pytest.raises(AssumptionViolated):
            spectral.fixed_point_multiclique(topo, cover, list(range(1, 8)), 1)


class TestFairness:
    def test_single_clique_fair(self):
        topo = complete(3)
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_single_clique([4, 4, 4], 1)
        rep = spectral.check_fairness(pred, cover, [4, 4, 4], 1)
        assert rep.partial and rep.global_ and not rep.witnesses

    def test_chained_theta_endpoints(self):
        # minimal free gap maximizes the middle local's share: globally fair;
        # maximal free gap starves it below its clique bound
        topo = harness.chained_cliques_topology((4, 3, 4))
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 9, 1)
        lo, hi = pred.theta_range
        at_lo = spectral.check_fairness(
            spectral.instantiate_theta(pred, lo), cover, [4] * 9, 1)
        at_hi = spectral.check_fairness(
            spectral.instantiate_theta(pred, hi), cover, [4] * 9, 1)
        assert at_lo.partial and at_lo.global_
        assert at_hi.partial and not at_hi.global_
        local_mid = cover.local[1][0]
        assert any(w[0] == "global-minimum" and w[1] == local_mid
                   for w in at_hi.witnesses)
        # the bound itself: slot 1/5 against minimum share 4/15
        inst = spectral.instantiate_theta(pred, hi)
        assert inst.slot[local_mid] == Fraction(1, 5)

    def test_simulated_state_fairness(self):
        topo = complete(3)
        cover = maximal_cliques(topo)
        cfg = sched.SchedConfig(beta=0.5, delta=1, demands=[4, 4, 4])
        st = sched.init_schedule(topo, cover, cfg, seed=3)
        sched.run_frames(st)
        rep = spectral.check_fairness(st, cover, [4, 4, 4], 1, tol=1e-6)
        assert rep.partial and rep.global_


class TestColoring:
    def test_line_of_three(self):
        topo = build_topology(3, [(0, 1), (1, 2)])
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 3, 1)
        res = spectral.schedule_to_coloring(pred, cover, topo, demands=[4] * 3)
        assert res.proper and res.color_count == 2 == res.chromatic_number
        assert res.minimal

    def test_triangle(self):
        topo = complete(3)
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_single_clique([4, 4, 4], 1)
        res = spectral.schedule_to_coloring(pred, cover, topo, demands=[4] * 3)
        assert res.proper and res.color_count == 3 == res.chromatic_number

    def test_star_center_vs_leaves(self):
        topo = build_topology(5, [(0, i) for i in range(1, 5)])
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * 5, 1)
        res = spectral.schedule_to_coloring(pred, cover, topo, demands=[4] * 5)
        assert res.proper and res.color_count == 2 == res.chromatic_number
        leaves = {res.colors[i] for i in range(1, 5)}
        assert len(leaves) == 1 and res.colors[0] not in leaves

    def test_simulated_state_coloring(self):
        topo = build_topology(5, [(0, i) for i in range(1, 5)])
        cover = maximal_cliques(topo)
        cfg = sched.SchedConfig(beta=0.5, delta=1, demands=[4] * 5)
        st = sched.init_schedule(topo, cover, cfg, seed=12)
        sched.run_frames(st)
        res = spectral.schedule_to_coloring(st, cover, topo, tol=1e-5)
        assert res.proper
        assert res.chromatic_number == 2

    def test_large_graph_skips_verdict(self):
        n = 13
        topo = build_topology(n, [(i, i + 1) for i in range(n - 1)])
        cover = maximal_cliques(topo)
        pred = spectral.fixed_point_multiclique(topo, cover, [4] * n, 1)
        res = spectral.schedule_to_coloring(pred, cover, topo, demands=[4] * n)
        assert res.proper
        assert res.chromatic_number is None and res.minimal is None


class TestMatchPrediction:
    def test_rotation_and_roles(self):
        pred_vec = [0.1, 0.2, 0.1, 0.2, 0.2, 0.2]
        pred_order = (0, 1, 2)
        sim_vec = [0.2, 0.2, 0.1, 0.2, 0.1, 0.2]
        sim_order = (2, 0, 1)
        dev = spectral.match_prediction(sim_vec, sim_order, pred_vec, pred_order)
        assert dev == pytest.approx(0.0)
        assert spectral.match_prediction(
            sim_vec, (2, 1, 0), pred_vec, pred_order) is None
