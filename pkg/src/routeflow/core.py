"""Problem data model, cost/feasibility semantics, and exact small-instance oracle.

Node indexing convention used throughout the package: node 0 is the depot,
customers are nodes 1..N. A Route stores customer indices only; the depot is
implicit at both ends.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

CONTINUOUS = "continuous"
ROUNDED = "rounded"

COST_REL_TOL = 1e-9


class InstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


@dataclass(frozen=True)
class Instance:
    """A CVRP instance: depot, customers with demands, capacity, fleet limit.

    ``fleet_limit=None`` means the number of vehicles is unbounded.
    ``distance_mode`` selects continuous Euclidean costs or the integer
    nearest-rounding convention used by the classic benchmark files.
    """

    depot: tuple[float, float]
    coords: tuple[tuple[float, float], ...]
    demands: tuple[int, ...]
    capacity: int
    fleet_limit: int | None = None
    distance_mode: str = CONTINUOUS
    name: str = ""

    def __post_init__(self):
        if self.distance_mode not in (CONTINUOUS, ROUNDED):
            raise InstanceError(f"unknown distance_mode {self.distance_mode!r}")
        if len(self.coords) != len(self.demands):
            raise InstanceError("coords and demands length mismatch")
        if not self.coords:
            raise InstanceError("instance needs at least one customer")
        if self.capacity <= 0:
            raise InstanceError("capacity must be positive")
        if self.fleet_limit is not None and self.fleet_limit <= 0:
            raise InstanceError("fleet_limit must be positive or None")
        for xy in (self.depot, *self.coords):
            if not (math.isfinite(xy[0]) and math.isfinite(xy[1])):
                raise InstanceError(f"non-finite coordinate {xy}")
        for i, d in enumerate(self.demands):
            if not 0 < d <= self.capacity:
                raise InstanceError(
                    f"customer {i + 1} demand {d} outside (0, Q={self.capacity}]"
                )

    @property
    def n_customers(self) -> int:
        return len(self.coords)

    @property
    def n_nodes(self) -> int:
        return len(self.coords) + 1

    def demand_of(self, customer: int) -> int:
        """Demand of a customer by node index (1..N)."""
        return self.demands[customer - 1]

    def all_points(self) -> np.ndarray:
        """(n_nodes, 2) array of coordinates, depot in row 0."""
        return np.array([self.depot, *self.coords], dtype=np.float64)


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric non-negative travel costs; entry [0] is the depot."""

    dist: np.ndarray
    mode: str

    def __post_init__(self):
        self.dist.setflags(write=False)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __getitem__(self, ij) -> float:
        return self.dist[ij]


@dataclass(frozen=True)
class SparseGraph:
    """k-nearest-neighbour lists with per-edge distances.

    ``neighbors[i]`` holds the retained neighbour indices of node i, sorted by
    distance (ties to the lower index). The depot appears in every customer's
    list so a depot-return arc always exists.
    """

    neighbors: np.ndarray  # (n, k) int
    edge_dist: np.ndarray  # (n, k) float
    k_nn: int

    def __post_init__(self):
        self.neighbors.setflags(write=False)
        self.edge_dist.setflags(write=False)

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    def neighbor_sets(self) -> list[set[int]]:
        return [set(row.tolist()) for row in self.neighbors]


@dataclass(frozen=True)
class Route:
    """Ordered customer indices of one vehicle; depot implicit at both ends."""

    nodes: tuple[int, ...]
    load: int

    def __post_init__(self):
        if not self.nodes:
            raise InstanceError("route may not be empty")
        if len(set(self.nodes)) != len(self.nodes):
            raise InstanceError("route repeats a customer")

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Solution:
    """A set of depot-anchored routes with a cached total cost."""

    routes: tuple[Route, ...]
    total_cost: float

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    def customers(self) -> list[int]:
        out: list[int] = []
        for r in self.routes:
            out.extend(r.nodes)
        return out

    def arcs(self) -> list[tuple[int, int]]:
        """Directed arcs of the solution, depot returns included."""
        out = []
        for r in self.routes:
            prev = 0
            for c in r.nodes:
                out.append((prev, c))
                prev = c
            out.append((prev, 0))
        return out


@dataclass(frozen=True)
class MtzCertificate:
    """Cumulative loads proving subtour-freedom of a feasible solution.

    ``u[i]`` is the load on board after serving customer i; satisfies
    d_i <= u_i <= Q and u_j = u_i + d_j along every intra-route arc.
    """

    u: dict[int, int]


@dataclass(frozen=True)
class Violation:
    kind: str  # "missing" | "duplicate" | "capacity" | "fleet"
    subject: int  # customer id, route index, or vehicle count
    amount: int = 0  # overflow for "capacity", excess vehicles for "fleet"


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: tuple[Violation, ...] = ()
    certificate: MtzCertificate | None = None


def make_route(instance: Instance, nodes) -> Route:
    nodes = tuple(int(v) for v in nodes)
    return Route(nodes, sum(instance.demand_of(c) for c in nodes))


def make_solution(instance: Instance, dm: DistanceMatrix, route_nodes) -> Solution:
    """Construct a Solution from raw node lists, computing loads and cost."""
    routes = tuple(make_route(instance, nodes) for nodes in route_nodes)
    cost = sum(route_cost(dm, r) for r in routes)
    return Solution(routes, cost)


def build_distance_matrix(instance: Instance) -> DistanceMatrix:
    """Pairwise travel costs for all nodes (depot row/column 0).

    Rounded mode applies the benchmark nearest-integer convention
    ``nint(d) = floor(d + 0.5)``; continuous mode keeps full precision.
    """
    pts = instance.all_points()
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    if instance.distance_mode == ROUNDED:
        d = np.floor(d + 0.5)
    return DistanceMatrix(d, instance.distance_mode)


def route_cost(dm: DistanceMatrix, route: Route) -> float:
    """Depot -> nodes -> depot travel cost of one route."""
    d = dm.dist
    prev = 0
    total = 0.0
    for c in route.nodes:
        total += d[prev, c]
        prev = c
    return total + d[prev, 0]


def solution_cost(dm: DistanceMatrix, routes) -> float:
    return sum(route_cost(dm, r) for r in routes)


def check_feasible(instance: Instance, solution: Solution) -> FeasibilityReport:
    """Check coverage, capacity, and fleet-limit constraints.

    Infeasibility is reported as data, never raised. When feasible, the report
    carries a cumulative-load certificate (running loads along each route)
    which proves subtour-freedom by construction.
    """
    violations: list[Violation] = []
    seen: dict[int, int] = {}
    for r_idx, route in enumerate(solution.routes):
        for c in route.nodes:
            if c in seen:
                violations.append(Violation("duplicate", c))
            else:
                seen[c] = r_idx
        load = sum(instance.demand_of(c) for c in route.nodes)
        if load > instance.capacity:
            violations.append(
                Violation("capacity", r_idx, load - instance.capacity)
            )
    for c in range(1, instance.n_customers + 1):
        if c not in seen:
            violations.append(Violation("missing", c))
    if instance.fleet_limit is not None and solution.n_routes > instance.fleet_limit:
        violations.append(
            Violation(
                "fleet",
                solution.n_routes,
                solution.n_routes - instance.fleet_limit,
            )
        )
    if violations:
        return FeasibilityReport(False, tuple(violations))
    u: dict[int, int] = {}
    for route in solution.routes:
        running = 0
        for c in route.nodes:
            running += instance.demand_of(c)
            u[c] = running
    return FeasibilityReport(True, (), MtzCertificate(u))


def verify_certificate(instance: Instance, solution: Solution, cert: MtzCertificate) -> bool:
    """Re-check the cumulative-load inequalities on every used arc."""
    q = instance.capacity
    for i in range(1, instance.n_customers + 1):
        if not instance.demand_of(i) <= cert.u[i] <= q:
            return False
    for route in solution.routes:
        prev = None
        for c in route.nodes:
            if prev is not None:
                # u_i - u_j + Q <= Q - d_j  on used arc (i, j)
                if cert.u[prev] - cert.u[c] + q > q - instance.demand_of(c):
                    return False
            prev = c
    return True


def knn_sparsify(dm: DistanceMatrix, k_nn: int) -> SparseGraph:
    """Keep each node's k_nn nearest neighbours, depot always retained.

    Ties break toward the lower node index. If the depot would fall outside a
    customer's list it replaces the farthest kept neighbour, so every customer
    keeps a depot arc.
    """
    if k_nn < 1:
        raise ValueError("k_nn must be >= 1")
    n = dm.n
    k = min(k_nn, n - 1)
    d = dm.dist
    idx = np.arange(n)
    neighbors = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        others = idx[idx != i]
        order = others[np.lexsort((others, d[i, others]))][:k]
        if i != 0 and 0 not in order:
            order = np.concatenate((order[: k - 1], [0]))
            order = order[np.lexsort((order, d[i, order]))]
        neighbors[i] = order
    edge_dist = d[np.arange(n)[:, None], neighbors]
    return SparseGraph(neighbors, edge_dist, k)


class TooLargeError(ValueError):
    """Instance exceeds the exact solver's exhaustive-search limit."""


_EXACT_LIMIT = 8


def _best_sequence(dm: DistanceMatrix, subset: tuple[int, ...]) -> tuple[float, tuple[int, ...]]:
    """Optimal visiting order of one route by exhaustive permutation.

    Ties resolve to the lexicographically smallest sequence; a route and its
    reversal cost the same, so this also fixes the orientation.
    """
    best_cost = math.inf
    best_seq: tuple[int, ...] = subset
    for perm in itertools.permutations(subset):
        c = 0.0
        prev = 0
        for node in perm:
            c += dm.dist[prev, node]
            prev = node
        c += dm.dist[prev, 0]
        if c < best_cost or (c == best_cost and perm < best_seq):
            best_cost = c
            best_seq = perm
    return best_cost, best_seq


def exact_solve_small(instance: Instance, dm: DistanceMatrix | None = None) -> Solution:
    """Globally optimal solution by exhaustive set-partition enumeration.

    Every partition of the customers into capacity-feasible groups is visited
    (blocks are built around the lowest unassigned customer), each group is
    sequenced by exhaustive permutation, and the cheapest total wins. Ties
    break to the lexicographically smallest sorted route list. Limited to
    8 customers.
    """
    n = instance.n_customers
    if n > _EXACT_LIMIT:
        raise TooLargeError(f"exact solver limited to {_EXACT_LIMIT} customers, got {n}")
    if dm is None:
        dm = build_distance_matrix(instance)
    customers = list(range(1, n + 1))
    demand = {c: instance.demand_of(c) for c in customers}
    seq_cache: dict[tuple[int, ...], tuple[float, tuple[int, ...]]] = {}

    def sequenced(subset: tuple[int, ...]) -> tuple[float, tuple[int, ...]]:
        if subset not in seq_cache:
            seq_cache[subset] = _best_sequence(dm, subset)
        return seq_cache[subset]

    best_cost = math.inf
    best_routes: tuple[tuple[int, ...], ...] | None = None
    max_blocks = instance.fleet_limit if instance.fleet_limit is not None else n

    def recurse(remaining: tuple[int, ...], blocks: list[tuple[int, ...]], cost: float):
        nonlocal best_cost, best_routes
        if not remaining:
            routes = tuple(sorted(blocks))
            if cost < best_cost or (cost == best_cost and (best_routes is None or routes < best_routes)):
                best_cost = cost
                best_routes = routes
            return
        if len(blocks) == max_blocks:
            return
        anchor, rest = remaining[0], remaining[1:]
        # every block containing the lowest remaining customer
        for r in range(len(rest) + 1):
            for extra in itertools.combinations(rest, r):
                block = (anchor, *extra)
                if sum(demand[c] for c in block) > instance.capacity:
                    continue
                c_block, seq = sequenced(block)
                left = tuple(c for c in rest if c not in extra)
                recurse(left, blocks + [seq], cost + c_block)

    recurse(tuple(customers), [], 0.0)
    if best_routes is None:
        raise InstanceError("no feasible partition within the fleet limit")
    return make_solution(instance, dm, best_routes)
