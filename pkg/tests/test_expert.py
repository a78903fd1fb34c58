import math

import numpy as np
import pytest

from routeflow.core import (
    Instance,
    build_distance_matrix,
    check_feasible,
    exact_solve_small,
    make_solution,
    solution_cost,
)
from routeflow.expert import (
    HgsConfig,
    compute_barycenters,
    decompose,
    expert_refine,
    hgs_solve,
    initial_solution,
    kmeans,
    solve_subproblems,
    split_giant_tour,
)
from routeflow.io import generate_uniform

FAST = HgsConfig(population_size=6, max_iterations=30, seed=0)


class TestInitialSolution:
    def test_single_customer(self):
        inst = Instance((0.0, 0.0), ((1.0, 2.0),), (1,), 10)
        sol = initial_solution(inst, seed=0)
        assert [r.nodes for r in sol.routes] == [(1,)]

    def test_compass_points_pair_adjacent_angles(self):
        # four customers at N/E/S/W, capacity fits two: the sweep must pair
        # angular neighbours, never opposite points
        inst = Instance(
            (0.0, 0.0),
            ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)),
            (5, 5, 5, 5),
            10,
        )
        sol = initial_solution(inst, seed=3)
        opposite = {frozenset((1, 3)), frozenset((2, 4))}
        for r in sol.routes:
            assert frozenset(r.nodes) not in opposite

    def test_always_feasible(self):
        for seed in range(15):
            inst = generate_uniform(50, seed)
            sol = initial_solution(inst, seed)
            assert check_feasible(inst, sol).feasible


class TestSplit:
    def test_split_optimal_against_enumeration(self):
        # the DP split must match brute force over all contiguous partitions
        rng = np.random.default_rng(4)
        for trial in range(10):
            inst = generate_uniform(7, 300 + trial)
            dm = build_distance_matrix(inst)
            D = dm.dist.tolist()
            demand = [0] + list(inst.demands)
            tour = list(rng.permutation(np.arange(1, 8)))
            tour = [int(c) for c in tour]
            routes = split_giant_tour(D, demand, inst.capacity, tour)
            got = solution_cost(dm, [make_solution(inst, dm, [r]).routes[0] for r in routes])

            best = math.inf
            n = len(tour)
            for mask in range(2 ** (n - 1)):
                parts, cur = [], [tour[0]]
                for k in range(1, n):
                    if mask >> (k - 1) & 1:
                        parts.append(cur)
                        cur = [tour[k]]
                    else:
                        cur.append(tour[k])
                parts.append(cur)
                if any(sum(demand[c] for c in p) > inst.capacity for p in parts):
                    continue
                cost = solution_cost(
                    dm, make_solution(inst, dm, parts).routes
                )
                best = min(best, cost)
            assert got == pytest.approx(best, rel=1e-12)

    def test_fleet_capped_split(self):
        inst = Instance(
            (0.0, 0.0),
            ((1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)),
            (3, 3, 3, 3),
            6,
        )
        dm = build_distance_matrix(inst)
        D = dm.dist.tolist()
        demand = [0] + list(inst.demands)
        assert split_giant_tour(D, demand, 6, [1, 2, 3, 4], max_routes=1) is None
        routes = split_giant_tour(D, demand, 6, [1, 2, 3, 4], max_routes=2)
        assert len(routes) == 2
        assert all(sum(demand[c] for c in r) <= 6 for r in routes)


class TestHgs:
    def test_matches_exact_on_tiny(self):
        hits = 0
        for seed in range(40):
            inst = generate_uniform(6, 900 + seed)
            exact = exact_solve_small(inst)
            sol = hgs_solve(inst, cfg=HgsConfig(population_size=10, max_iterations=60, seed=seed))
            assert check_feasible(inst, sol).feasible
            assert sol.total_cost >= exact.total_cost - 1e-9
            if sol.total_cost <= exact.total_cost + 1e-9:
                hits += 1
        assert hits >= 38  # expected to match on nearly all

    def test_warm_start_never_worsens(self):
        for seed in range(8):
            inst = generate_uniform(30, 500 + seed)
            warm = initial_solution(inst, seed)
            sol = hgs_solve(inst, warm_start=warm, cfg=FAST)
            assert sol.total_cost <= warm.total_cost + 1e-9

    def test_optimal_warm_start_unchanged(self):
        inst = generate_uniform(5, 12)
        exact = exact_solve_small(inst)
        sol = hgs_solve(inst, warm_start=exact, cfg=FAST)
        assert sol.total_cost == pytest.approx(exact.total_cost, abs=1e-12)

    def test_deterministic(self):
        inst = generate_uniform(25, 77)
        a = hgs_solve(inst, cfg=FAST)
        b = hgs_solve(inst, cfg=FAST)
        assert a == b

    def test_bounded_by_sweep(self):
        for seed in range(5):
            inst = generate_uniform(40, 600 + seed)
            sweep = initial_solution(inst, seed, None)
            sol = hgs_solve(inst, cfg=HgsConfig(population_size=6, max_iterations=20, seed=seed))
            assert sol.total_cost <= sweep.total_cost + 1e-9


class TestBarycenters:
    def test_single_point_route(self):
        inst = Instance((0.0, 0.0), ((0.3, 0.7),), (1,), 10)
        dm = build_distance_matrix(inst)
        sol = make_solution(inst, dm, [[1]])
        assert compute_barycenters(inst, sol).tolist() == [[0.3, 0.7]]

    def test_two_point_mean(self):
        inst = Instance((0.5, 0.5), ((0.0, 0.0), (1.0, 1.0)), (1, 1), 10)
        dm = build_distance_matrix(inst)
        sol = make_solution(inst, dm, [[1, 2]])
        assert compute_barycenters(inst, sol).tolist() == [[0.5, 0.5]]

    def test_matches_direct_mean(self):
        inst = generate_uniform(9, 21)
        dm = build_distance_matrix(inst)
        sol = make_solution(inst, dm, [[2, 5, 7, 1]])
        expected = np.mean([inst.coords[c - 1] for c in (2, 5, 7, 1)], axis=0)
        assert compute_barycenters(inst, sol)[0] == pytest.approx(expected)


class TestKmeans:
    def test_k_one(self):
        pts = np.random.default_rng(0).random((12, 2))
        assert set(kmeans(pts, 1).tolist()) == {0}

    def test_separated_blobs(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0, 0.01, size=(15, 2))
        b = rng.normal(10, 0.01, size=(15, 2))
        labels = kmeans(np.vstack([a, b]), 2, seed=5)
        assert len(set(labels[:15].tolist())) == 1
        assert len(set(labels[15:].tolist())) == 1
        assert labels[0] != labels[15]

    def test_fixed_point(self):
        rng = np.random.default_rng(2)
        pts = rng.random((30, 2))
        labels = kmeans(pts, 4, seed=9)
        centroids = np.array([pts[labels == c].mean(axis=0) for c in range(4)])
        dist = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        again = np.argmin(dist, axis=1)
        assert np.array_equal(again, labels)

    def test_all_clusters_nonempty(self):
        pts = np.random.default_rng(3).random((10, 2))
        labels = kmeans(pts, 7, seed=0)
        assert set(labels.tolist()) == set(range(7))


class TestDecompose:
    def test_single_cluster_when_m_large(self):
        inst = generate_uniform(20, 6)
        sol = initial_solution(inst, 6)
        plan, subs = decompose(inst, sol, m=100)
        assert plan.k == 1
        assert len(subs) == 1
        assert subs[0].instance.n_customers == 20
        assert subs[0].k_sub == sol.n_routes

    def test_partition_property(self):
        inst = generate_uniform(60, 13)
        sol = initial_solution(inst, 13)
        plan, subs = decompose(inst, sol, m=15)
        assert plan.k == math.ceil(60 / 15) or plan.k == sol.n_routes
        seen = []
        for sub in subs:
            seen.extend(sub.mapping)
        assert sorted(seen) == list(range(1, 61))

    def test_blobs_split_cleanly(self):
        # two spatial blobs of routes: decomposition must separate them
        coords, demands = [], []
        for cx in (0.0, 10.0):
            for i in range(8):
                coords.append((cx + 0.01 * i, 0.0))
                demands.append(5)
        inst = Instance((5.0, 5.0), tuple(coords), tuple(demands), 10)
        dm = build_distance_matrix(inst)
        sol = make_solution(
            inst, dm, [[1, 2], [3, 4], [5, 6], [7, 8], [9, 10], [11, 12], [13, 14], [15, 16]]
        )
        plan, subs = decompose(inst, sol, m=8)
        assert plan.k == 2
        groups = [set(sub.mapping) for sub in subs]
        assert {frozenset(g) for g in groups} == {
            frozenset(range(1, 9)),
            frozenset(range(9, 17)),
        }

    def test_mapping_bijection(self):
        inst = generate_uniform(30, 14)
        sol = initial_solution(inst, 14)
        _, subs = decompose(inst, sol, m=10)
        for sub in subs:
            assert len(set(sub.mapping)) == len(sub.mapping)
            assert sub.instance.n_customers == len(sub.mapping)
            for local, g in enumerate(sub.mapping, start=1):
                assert sub.instance.coords[local - 1] == inst.coords[g - 1]


class TestSolveSubproblems:
    def test_single_subproblem_matches_hgs(self):
        inst = generate_uniform(15, 3)
        sol = initial_solution(inst, 3)
        _, subs = decompose(inst, sol, m=100)
        results = solve_subproblems(subs, FAST)
        assert len(results) == 1
        assert check_feasible(inst, results[0]).feasible

    def test_cluster_cost_never_worsens(self):
        inst = generate_uniform(50, 8)
        dm = build_distance_matrix(inst)
        sol = initial_solution(inst, 8, dm)
        _, subs = decompose(inst, sol, m=20)
        results = solve_subproblems(subs, FAST)
        for sub, res in zip(subs, results):
            warm_cost = solution_cost(
                dm,
                make_solution(
                    inst, dm, [tuple(sub.to_global(c) for c in r) for r in sub.warm_routes]
                ).routes,
            )
            assert res.total_cost <= warm_cost + 1e-9

    def test_concatenation_feasible(self):
        inst = generate_uniform(45, 9)
        sol = initial_solution(inst, 9)
        _, subs = decompose(inst, sol, m=15)
        results = solve_subproblems(subs, FAST)
        from routeflow.core import Solution

        merged = Solution(
            tuple(r for part in results for r in part.routes),
            sum(p.total_cost for p in results),
        )
        assert check_feasible(inst, merged).feasible


class TestExpertRefine:
    def test_never_worsens_seed_solution(self):
        for seed in range(5):
            inst = generate_uniform(60, 40 + seed)
            start = initial_solution(inst, seed)
            refined = expert_refine(inst, start, m=20, cfg=FAST)
            assert refined.total_cost <= start.total_cost + 1e-9
            assert check_feasible(inst, refined).feasible

    def test_merged_cost_is_sum_of_parts(self):
        inst = generate_uniform(80, 55)
        dm = build_distance_matrix(inst)
        start = initial_solution(inst, 55, dm)
        refined = expert_refine(inst, start, m=25, cfg=FAST, dm=dm)
        recomputed = solution_cost(dm, refined.routes)
        assert refined.total_cost == pytest.approx(recomputed, rel=1e-9)

    def test_m_ge_n_equivalent_to_plain_hgs(self):
        inst = generate_uniform(12, 66)
        start = initial_solution(inst, 66)
        refined = expert_refine(inst, start, m=50, cfg=FAST)
        assert check_feasible(inst, refined).feasible
        assert refined.total_cost <= start.total_cost + 1e-9

    def test_deterministic_despite_threads(self):
        inst = generate_uniform(40, 31)
        start = initial_solution(inst, 31)
        a = expert_refine(inst, start, m=10, cfg=FAST)
        b = expert_refine(inst, start, m=10, cfg=FAST)
        assert a == b
