"""Decomposition-augmented expert solver.

A compact hybrid-genetic-search metaheuristic (giant-tour chromosomes with
optimal Split decoding, order crossover, and 2-opt/relocate/swap/2-opt*
local search) plus the route-barycenter clustering pipeline that partitions a
solution into independent subproblems, solves them concurrently, and merges.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    DistanceMatrix,
    Instance,
    InstanceError,
    Route,
    Solution,
    build_distance_matrix,
    make_solution,
)
from .io import derive_seed


@dataclass(frozen=True)
class HgsConfig:
    population_size: int = 40
    elite_fraction: float = 0.5
    max_iterations: int = 400
    time_budget_s: float | None = None
    use_two_opt: bool = True
    use_relocate: bool = True
    use_swap: bool = True
    use_two_opt_star: bool = True
    mutation_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ValueError("time_budget_s must be positive")


@dataclass(frozen=True)
class DecompositionPlan:
    """Route barycenters, their cluster labels, and the subproblem count."""

    barycenters: np.ndarray  # (n_routes, 2)
    labels: np.ndarray  # (n_routes,) int in [0, k)
    k: int
    m: int


@dataclass(frozen=True)
class Subproblem:
    """One cluster's customers as a standalone instance.

    ``mapping[local - 1]`` is the global customer index of local customer
    ``local``; the depot is local node 0 in every subproblem.
    """

    instance: Instance
    mapping: tuple[int, ...]
    warm_routes: tuple[tuple[int, ...], ...]  # local ids
    k_sub: int

    def to_global(self, local: int) -> int:
        return self.mapping[local - 1]


# ---------------------------------------------------------------------------
# construction + local search


def initial_solution(instance: Instance, seed: int, dm: DistanceMatrix | None = None) -> Solution:
    """Angular sweep around the depot, greedy capacity fill, one 2-opt pass
    per route. The seed rotates the sweep's starting customer.

    Always capacity-feasible. With a tight fleet limit the merge/repack repair
    is best-effort; a rare excess route is left for the caller's penalty
    handling rather than raised.
    """
    if dm is None:
        dm = build_distance_matrix(instance)
    n = instance.n_customers
    dx, dy = instance.depot
    angles = [math.atan2(y - dy, x - dx) for x, y in instance.coords]
    order = sorted(range(1, n + 1), key=lambda c: (angles[c - 1], c))
    start = int(np.random.default_rng(seed).integers(n))
    order = order[start:] + order[:start]

    D = dm.dist.tolist()
    demand = [0] + list(instance.demands)
    routes: list[list[int]] = []
    cur: list[int] = []
    load = 0
    for c in order:
        if load + demand[c] > instance.capacity:
            routes.append(cur)
            cur, load = [], 0
        cur.append(c)
        load += demand[c]
    if cur:
        routes.append(cur)
    routes = [_two_opt_route(D, r) for r in routes]
    if instance.fleet_limit is not None and len(routes) > instance.fleet_limit:
        routes = _repair_fleet(D, demand, instance.capacity, routes, instance.fleet_limit)
    return make_solution(instance, dm, routes)


def _two_opt_route(D, route: list[int]) -> list[int]:
    """Repeated best-improvement 2-opt on one route until local optimum."""
    r = list(route)
    n = len(r)
    if n < 3:
        return r
    improved = True
    while improved:
        improved = False
        best_delta = -1e-10
        best = None
        for i in range(n - 1):
            a = 0 if i == 0 else r[i - 1]
            b = r[i]
            for j in range(i + 1, n):
                c = r[j]
                d = 0 if j == n - 1 else r[j + 1]
                delta = D[a][c] + D[b][d] - D[a][b] - D[c][d]
                if delta < best_delta:
                    best_delta = delta
                    best = (i, j)
        if best is not None:
            i, j = best
            r[i : j + 1] = reversed(r[i : j + 1])
            improved = True
    return r


def _route_cost(D, route: list[int]) -> float:
    prev = 0
    total = 0.0
    for c in route:
        total += D[prev][c]
        prev = c
    return total + D[prev][0]


def _repair_fleet(D, demand, capacity: int, routes: list[list[int]], limit: int) -> list[list[int]]:
    """Reduce the route count toward the fleet limit.

    Merges route pairs by best savings; if merging stalls, falls back to
    first-fit-decreasing bin packing with nearest-neighbour sequencing. May
    still return more than ``limit`` routes when no packing is found; callers
    treat the excess as a penalized constraint violation.
    """
    routes = [list(r) for r in routes]
    loads = [sum(demand[c] for c in r) for r in routes]
    while len(routes) > limit:
        best = None
        best_saving = -math.inf
        for i in range(len(routes)):
            for j in range(len(routes)):
                if i == j or loads[i] + loads[j] > capacity:
                    continue
                saving = D[routes[i][-1]][0] + D[0][routes[j][0]] - D[routes[i][-1]][routes[j][0]]
                if saving > best_saving:
                    best_saving = saving
                    best = (i, j)
        if best is None:
            packed = _pack_into_bins(D, demand, capacity, [c for r in routes for c in r], limit)
            return packed if packed is not None else routes
        i, j = best
        merged = routes[i] + routes[j]
        loads[i] += loads[j]
        routes[i] = _two_opt_route(D, merged)
        del routes[j], loads[j]
    return routes


def _pack_into_bins(D, demand, capacity: int, customers: list[int], limit: int):
    """First-fit-decreasing packing into ``limit`` routes, each sequenced by
    nearest neighbour plus one 2-opt pass; None when packing fails."""
    order = sorted(customers, key=lambda c: (-demand[c], c))
    bins: list[list[int]] = [[] for _ in range(limit)]
    loads = [0] * limit
    for c in order:
        placed = False
        for b in range(limit):
            if loads[b] + demand[c] <= capacity:
                bins[b].append(c)
                loads[b] += demand[c]
                placed = True
                break
        if not placed:
            return None
    routes = []
    for group in bins:
        if not group:
            continue
        remaining = set(group)
        seq = []
        cur = 0
        while remaining:
            nxt = min(remaining, key=lambda c: (D[cur][c], c))
            seq.append(nxt)
            remaining.remove(nxt)
            cur = nxt
        routes.append(_two_opt_route(D, seq))
    return routes


def _local_search(D, demand, capacity: int, routes: list[list[int]], cfg: HgsConfig) -> list[list[int]]:
    """First-improvement passes over the enabled move set until stable.

    Moves: intra-route 2-opt, inter-route relocate and swap, and 2-opt*
    (tail exchange between route pairs). Scan order is fixed, so the result
    is deterministic.
    """
    routes = [list(r) for r in routes if r]
    loads = [sum(demand[c] for c in r) for r in routes]
    improved = True
    while improved:
        improved = False
        if cfg.use_relocate and _relocate_pass(D, demand, capacity, routes, loads):
            improved = True
        if cfg.use_swap and _swap_pass(D, demand, capacity, routes, loads):
            improved = True
        if cfg.use_two_opt_star and _two_opt_star_pass(D, demand, capacity, routes, loads):
            improved = True
        if cfg.use_two_opt:
            for idx, r in enumerate(routes):
                new = _two_opt_route(D, r)
                if new != r:
                    routes[idx] = new
                    improved = True
        # drop emptied routes
        keep = [i for i, r in enumerate(routes) if r]
        if len(keep) != len(routes):
            routes = [routes[i] for i in keep]
            loads = [loads[i] for i in keep]
    return routes


def _relocate_pass(D, demand, capacity, routes, loads) -> bool:
    improved = False
    for a in range(len(routes)):
        ra = routes[a]
        i = 0
        while i < len(ra):
            c = ra[i]
            prev = 0 if i == 0 else ra[i - 1]
            nxt = 0 if i == len(ra) - 1 else ra[i + 1]
            removal = D[prev][c] + D[c][nxt] - D[prev][nxt]
            best_delta = -1e-10
            best = None
            for b in range(len(routes)):
                if b != a and loads[b] + demand[c] > capacity:
                    continue
                rb = routes[b]
                for pos in range(len(rb) + 1):
                    if b == a and (pos == i or pos == i + 1):
                        continue
                    p = 0 if pos == 0 else rb[pos - 1]
                    q = 0 if pos == len(rb) else rb[pos]
                    if p == c or q == c:
                        continue
                    delta = D[p][c] + D[c][q] - D[p][q] - removal
                    if delta < best_delta:
                        best_delta = delta
                        best = (b, pos)
            if best is not None:
                b, pos = best
                del ra[i]
                if b == a and pos > i:
                    pos -= 1
                routes[b].insert(pos, c)
                loads[a] -= demand[c]
                loads[b] += demand[c]
                improved = True
            else:
                i += 1
    return improved


def _swap_pass(D, demand, capacity, routes, loads) -> bool:
    improved = False
    for a in range(len(routes)):
        for b in range(a + 1, len(routes)):
            ra, rb = routes[a], routes[b]
            for i in range(len(ra)):
                c = ra[i]
                pa = 0 if i == 0 else ra[i - 1]
                na = 0 if i == len(ra) - 1 else ra[i + 1]
                for j in range(len(rb)):
                    d = rb[j]
                    if loads[a] - demand[c] + demand[d] > capacity:
                        continue
                    if loads[b] - demand[d] + demand[c] > capacity:
                        continue
                    pb = 0 if j == 0 else rb[j - 1]
                    nb = 0 if j == len(rb) - 1 else rb[j + 1]
                    delta = (
                        D[pa][d] + D[d][na] + D[pb][c] + D[c][nb]
                        - D[pa][c] - D[c][na] - D[pb][d] - D[d][nb]
                    )
                    if delta < -1e-10:
                        ra[i], rb[j] = d, c
                        loads[a] += demand[d] - demand[c]
                        loads[b] += demand[c] - demand[d]
                        improved = True
                        c = ra[i]
                        pa = 0 if i == 0 else ra[i - 1]
                        na = 0 if i == len(ra) - 1 else ra[i + 1]
    return improved


def _two_opt_star_pass(D, demand, capacity, routes, loads) -> bool:
    """Exchange route tails: (a_prefix + b_suffix, b_prefix + a_suffix)."""
    improved = False
    for a in range(len(routes)):
        for b in range(a + 1, len(routes)):
            ra, rb = routes[a], routes[b]
            pre_a = [0] * (len(ra) + 1)
            for i, c in enumerate(ra):
                pre_a[i + 1] = pre_a[i] + demand[c]
            pre_b = [0] * (len(rb) + 1)
            for j, c in enumerate(rb):
                pre_b[j + 1] = pre_b[j] + demand[c]
            done = False
            for i in range(len(ra) + 1):
                if done:
                    break
                u = 0 if i == 0 else ra[i - 1]
                for j in range(len(rb) + 1):
                    if i == 0 and j == 0:
                        continue
                    v = 0 if j == 0 else rb[j - 1]
                    if pre_a[i] + (pre_b[-1] - pre_b[j]) > capacity:
                        continue
                    if pre_b[j] + (pre_a[-1] - pre_a[i]) > capacity:
                        continue
                    su = 0 if i == len(ra) else ra[i]
                    sv = 0 if j == len(rb) else rb[j]
                    delta = D[u][sv] + D[v][su] - D[u][su] - D[v][sv]
                    if delta < -1e-10:
                        new_a = ra[:i] + rb[j:]
                        new_b = rb[:j] + ra[i:]
                        routes[a] = new_a
                        routes[b] = new_b
                        loads[a] = pre_a[i] + (pre_b[-1] - pre_b[j])
                        loads[b] = pre_b[j] + (pre_a[-1] - pre_a[i])
                        improved = True
                        done = True
                        break
    return improved


# ---------------------------------------------------------------------------
# giant-tour split


def split_giant_tour(D, demand, capacity: int, tour: list[int], max_routes: int | None = None):
    """Optimal partition of a giant tour into consecutive feasible routes.

    Classic shortest-path Split: O(N * max-route-length) unlimited, or a
    vehicle-indexed DP when ``max_routes`` caps the fleet. Returns the route
    list, or None when no split satisfies the cap.
    """
    n = len(tour)
    if max_routes is None:
        dp = [math.inf] * (n + 1)
        dp[0] = 0.0
        pred = [0] * (n + 1)
        for i in range(n):
            if dp[i] == math.inf:
                continue
            load = 0
            inner = 0.0
            prev = None
            for j in range(i, n):
                c = tour[j]
                load += demand[c]
                if load > capacity:
                    break
                inner += D[0][c] if prev is None else D[prev][c]
                prev = c
                total = dp[i] + inner + D[c][0]
                if total < dp[j + 1]:
                    dp[j + 1] = total
                    pred[j + 1] = i
        cut = n
        cuts = []
        while cut > 0:
            cuts.append((pred[cut], cut))
            cut = pred[cut]
        return [tour[a:b] for a, b in reversed(cuts)]

    # dp[v][i]: cheapest split of the first i customers into exactly v routes
    dp = [[math.inf] * (n + 1) for _ in range(max_routes + 1)]
    pred = [[-1] * (n + 1) for _ in range(max_routes + 1)]
    dp[0][0] = 0.0
    for v in range(1, max_routes + 1):
        row_prev = dp[v - 1]
        for i in range(n):
            if row_prev[i] == math.inf:
                continue
            load = 0
            inner = 0.0
            prev = None
            for j in range(i, n):
                c = tour[j]
                load += demand[c]
                if load > capacity:
                    break
                inner += D[0][c] if prev is None else D[prev][c]
                prev = c
                total = row_prev[i] + inner + D[c][0]
                if total < dp[v][j + 1]:
                    dp[v][j + 1] = total
                    pred[v][j + 1] = i
    best_v = None
    best_cost = math.inf
    for v in range(1, max_routes + 1):
        if dp[v][n] < best_cost:
            best_cost = dp[v][n]
            best_v = v
    if best_v is None:
        return None
    routes = []
    cut, v = n, best_v
    while cut > 0:
        i = pred[v][cut]
        routes.append(tour[i:cut])
        cut, v = i, v - 1
    routes.reverse()
    return routes


# ---------------------------------------------------------------------------
# hybrid genetic search


def _canonical_routes(routes: list[list[int]]) -> tuple[tuple[int, ...], ...]:
    """Orientation- and order-normalized route list for stable output."""
    oriented = []
    for r in routes:
        if r[-1] < r[0]:
            r = list(reversed(r))
        oriented.append(tuple(r))
    return tuple(sorted(oriented))


def _order_crossover(rng, p1: list[int], p2: list[int]) -> list[int]:
    n = len(p1)
    if n < 2:
        return list(p1)
    i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
    child = [0] * n
    middle = p1[i : j + 1]
    chosen = set(middle)
    child[i : j + 1] = middle
    fill = [c for c in p2 if c not in chosen]
    pos = 0
    for k in list(range(0, i)) + list(range(j + 1, n)):
        child[k] = fill[pos]
        pos += 1
    return child


class _Individual:
    __slots__ = ("tour", "routes", "cost", "feasible")

    def __init__(self, tour, routes, cost, feasible):
        self.tour = tour
        self.routes = routes
        self.cost = cost
        self.feasible = feasible


_FLEET_PENALTY = 1e7


def hgs_solve(
    instance: Instance,
    warm_start: Solution | None = None,
    cfg: HgsConfig | None = None,
    dm: DistanceMatrix | None = None,
) -> Solution:
    """Population search over giant tours, deterministic for a fixed seed.

    The warm start (or the angular-sweep construction when absent) enters the
    initial population, and the incumbent never regresses, so the returned
    cost is bounded by both. ``time_budget_s`` is a hard cap checked between
    generations; bit-determinism across runs holds when ``max_iterations``
    binds first.
    """
    if cfg is None:
        cfg = HgsConfig()
    if dm is None:
        dm = build_distance_matrix(instance)
    start_time = time.monotonic()
    D = dm.dist.tolist()
    demand = [0] + list(instance.demands)
    q = instance.capacity
    limit = instance.fleet_limit
    rng = np.random.default_rng(cfg.seed)

    def evaluate(routes: list[list[int]], educate: bool = True) -> _Individual:
        if educate:
            routes = _local_search(D, demand, q, routes, cfg)
        cost = sum(_route_cost(D, r) for r in routes)
        feasible = limit is None or len(routes) <= limit
        if not feasible:
            cost += _FLEET_PENALTY * (len(routes) - limit)
        tour = [c for r in routes for c in r]
        return _Individual(tour, routes, cost, feasible)

    def from_tour(tour: list[int]) -> _Individual:
        routes = None
        if limit is not None:
            routes = split_giant_tour(D, demand, q, tour, limit)
        if routes is None:
            routes = split_giant_tour(D, demand, q, tour, None)
        return evaluate(routes)

    population: list[_Individual] = []
    sweep = initial_solution(instance, cfg.seed, dm)
    population.append(evaluate([list(r.nodes) for r in sweep.routes]))
    if warm_start is not None:
        population.append(evaluate([list(r.nodes) for r in warm_start.routes]))
        # preserve the untouched warm start as a monotonicity anchor
        population.append(evaluate([list(r.nodes) for r in warm_start.routes], educate=False))
    base = list(range(1, instance.n_customers + 1))
    while len(population) < cfg.population_size:
        tour = list(rng.permutation(base))
        population.append(from_tour([int(c) for c in tour]))

    best = min(
        (ind for ind in population if ind.feasible),
        key=lambda ind: ind.cost,
        default=None,
    )

    def tournament() -> _Individual:
        i, j = rng.integers(len(population), size=2)
        a, b = population[int(i)], population[int(j)]
        return a if a.cost <= b.cost else b

    for _ in range(cfg.max_iterations):
        if cfg.time_budget_s is not None and time.monotonic() - start_time > cfg.time_budget_s:
            break
        p1, p2 = tournament(), tournament()
        child = _order_crossover(rng, p1.tour, p2.tour)
        if rng.random() < cfg.mutation_rate and len(child) >= 2:
            i, j = sorted(rng.choice(len(child), size=2, replace=False).tolist())
            child[i : j + 1] = reversed(child[i : j + 1])
        ind = from_tour(child)
        if ind.feasible and (best is None or ind.cost < best.cost):
            best = ind
        population.append(ind)
        if len(population) > cfg.population_size:
            population.sort(key=lambda x: x.cost)
            n_elite = max(1, int(cfg.elite_fraction * cfg.population_size))
            survivors = population[:n_elite]
            seen = {tuple(s.tour) for s in survivors}
            for cand in population[n_elite:]:
                if len(survivors) >= cfg.population_size:
                    break
                key = tuple(cand.tour)
                if key in seen:
                    continue
                seen.add(key)
                survivors.append(cand)
            # duplicates may leave a shortfall; refill from the sorted pool
            for cand in population[n_elite:]:
                if len(survivors) >= cfg.population_size:
                    break
                if cand not in survivors:
                    survivors.append(cand)
            population = survivors

    if best is None:
        raise InstanceError("no fleet-feasible solution found; raise the budget")
    return make_solution(instance, dm, _canonical_routes(best.routes))


# ---------------------------------------------------------------------------
# barycenter-clustering decomposition


def compute_barycenters(instance: Instance, solution: Solution) -> np.ndarray:
    """Unweighted mean of each route's customer coordinates (depot excluded)."""
    pts = instance.all_points()
    return np.array(
        [pts[list(r.nodes)].mean(axis=0) for r in solution.routes], dtype=np.float64
    )


def kmeans(points: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Lloyd's algorithm from k-means++ seeding; deterministic per seed.

    Assignment ties go to the lower centroid id; an empty cluster steals the
    farthest point of the largest cluster. Stops at a fixed assignment or
    after 100 iterations.
    """
    points = np.asarray(points, dtype=np.float64)
    m = len(points)
    if not 1 <= k <= m:
        raise ValueError(f"need 1 <= k <= {m}, got {k}")
    rng = np.random.default_rng(seed)
    centroids = np.empty((k, 2), dtype=np.float64)
    centroids[0] = points[int(rng.integers(m))]
    for c in range(1, k):
        d2 = np.min(
            ((points[:, None, :] - centroids[None, :c, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total <= 0:
            centroids[c] = points[int(rng.integers(m))]
        else:
            centroids[c] = points[int(rng.choice(m, p=d2 / total))]
    labels = np.zeros(m, dtype=np.int64)
    for _ in range(100):
        dist = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            donor = int(np.argmax(counts))
            members = np.flatnonzero(new_labels == donor)
            far = members[int(np.argmax(dist[members, donor]))]
            new_labels[far] = empty
            counts[donor] -= 1
            counts[empty] += 1
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = points[labels == c].mean(axis=0)
    return labels


def decompose(
    instance: Instance, solution: Solution, m: int, seed: int = 0
) -> tuple[DecompositionPlan, list[Subproblem]]:
    """Group routes into ceil(N/m) spatial clusters via barycenter k-means.

    The cluster count is additionally capped by the route count (k-means
    cannot form more non-empty clusters than it has points). Every subproblem
    replicates the depot and carries a local<->global index bijection.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    n = instance.n_customers
    k = max(1, min(math.ceil(n / m), solution.n_routes))
    bary = compute_barycenters(instance, solution)
    labels = kmeans(bary, k, seed)
    plan = DecompositionPlan(bary, labels, k, m)
    subproblems = []
    for ci in range(k):
        route_ids = [ri for ri in range(solution.n_routes) if labels[ri] == ci]
        cluster_routes = [solution.routes[ri] for ri in route_ids]
        globals_sorted = sorted(c for r in cluster_routes for c in r.nodes)
        local_of = {g: i + 1 for i, g in enumerate(globals_sorted)}
        local_instance = Instance(
            depot=instance.depot,
            coords=tuple(instance.coords[g - 1] for g in globals_sorted),
            demands=tuple(instance.demands[g - 1] for g in globals_sorted),
            capacity=instance.capacity,
            fleet_limit=len(cluster_routes),
            distance_mode=instance.distance_mode,
            name=f"{instance.name}#sub{ci}",
        )
        warm = tuple(tuple(local_of[c] for c in r.nodes) for r in cluster_routes)
        subproblems.append(
            Subproblem(local_instance, tuple(globals_sorted), warm, len(cluster_routes))
        )
    return plan, subproblems


def _solve_one(sub: Subproblem, cfg: HgsConfig) -> Solution:
    dm = build_distance_matrix(sub.instance)
    warm = make_solution(sub.instance, dm, sub.warm_routes)
    local = hgs_solve(sub.instance, warm_start=warm, cfg=cfg, dm=dm)
    global_routes = [tuple(sub.to_global(c) for c in r.nodes) for r in local.routes]
    routes = tuple(
        Route(nodes, load=r.load) for nodes, r in zip(global_routes, local.routes)
    )
    return Solution(routes, local.total_cost)


def solve_subproblems(subproblems: list[Subproblem], cfg: HgsConfig) -> list[Solution]:
    """Solve each cluster concurrently with an even share of the budget.

    Results are returned in input order with per-index derived seeds, so the
    outcome does not depend on scheduling.
    """
    k = max(1, len(subproblems))
    per_iter = max(1, cfg.max_iterations // k)
    per_time = cfg.time_budget_s / k if cfg.time_budget_s is not None else None
    configs = [
        replace(cfg, max_iterations=per_iter, time_budget_s=per_time, seed=derive_seed(cfg.seed, i))
        for i in range(len(subproblems))
    ]
    with ThreadPoolExecutor(max_workers=min(8, k)) as pool:
        return list(pool.map(_solve_one, subproblems, configs))


def expert_refine(
    instance: Instance,
    seed_solution: Solution,
    m: int,
    cfg: HgsConfig | None = None,
    dm: DistanceMatrix | None = None,
) -> Solution:
    """Decompose, solve clusters concurrently, and merge.

    Each subproblem is warm-started with its own cluster's routes, so the
    merged cost never exceeds the seed solution's cost, and it equals the sum
    of the subproblem costs exactly (the depot is the only shared node).
    """
    if cfg is None:
        cfg = HgsConfig()
    if dm is None:
        dm = build_distance_matrix(instance)
    _, subproblems = decompose(instance, seed_solution, m, seed=cfg.seed)
    partials = solve_subproblems(subproblems, cfg)
    routes = tuple(r for part in partials for r in part.routes)
    total = sum(part.total_cost for part in partials)
    return Solution(routes, total)
