"""Transportation simplex with MODI potentials.

Bases are spanning trees of the bipartite row/column graph with exactly
m + n - 1 cells; degenerate cells carry zero flow.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import SolverError

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-12

Cell = tuple[int, int]


@dataclass
class TransportSolution:
    flow: np.ndarray
    u: np.ndarray
    v: np.ndarray
    basis: list[Cell]
    iterations: int = 0


def northwest_corner(a: np.ndarray, b: np.ndarray) -> tuple[dict[Cell, float], list[Cell]]:
    """Initial basic feasible solution; walks from (0, 0) to (m - 1, n - 1)."""
    m, n = a.size, b.size
    ra = a.astype(float).copy()
    rb = b.astype(float).copy()
    flows: dict[Cell, float] = {}
    basis: list[Cell] = []
    i = j = 0
    while True:
        amount = max(min(ra[i], rb[j]), 0.0)
        flows[(i, j)] = amount
        basis.append((i, j))
        ra[i] -= amount
        rb[j] -= amount
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return flows, basis


def _adjacency(basis: list[Cell], m: int, n: int) -> list[list[tuple[int, Cell]]]:
    """Node ids: rows 0..m-1, columns m..m+n-1."""
    adjacency: list[list[tuple[int, Cell]]] = [[] for _ in range(m + n)]
    for cell in basis:
        i, j = cell
        adjacency[i].append((m + j, cell))
        adjacency[m + j].append((i, cell))
    return adjacency


def tree_potentials(
    basis: list[Cell], basis_costs: list[float], m: int, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """u_i + v_j = c_ij on every basic cell, with u_0 = 0."""
    cost_of = dict(zip(basis, basis_costs))
    adjacency = _adjacency(basis, m, n)
    value = np.full(m + n, np.nan)
    value[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other, cell in adjacency[node]:
            if np.isnan(value[other]):
                value[other] = cost_of[cell] - value[node]
                queue.append(other)
    if np.isnan(value).any():
        raise SolverError("basis is not a spanning tree")
    return value[:m], value[m:]


def _tree_path(adjacency: list[list[tuple[int, Cell]]], start: int, goal: int) -> list[Cell]:
    parent: dict[int, tuple[int, Cell]] = {start: (-1, (-1, -1))}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other, cell in adjacency[node]:
            if other not in parent:
                parent[other] = (node, cell)
                queue.append(other)
    if goal not in parent:
        raise SolverError("entering cell does not close a cycle")
    path: list[Cell] = []
    node = goal
    while node != start:
        node, cell = parent[node]
        path.append(cell)
    path.reverse()
    return path


def solve_transportation(
    a: np.ndarray,
    b: np.ndarray,
    cost: np.ndarray,
    *,
    tolerance: float = PIVOT_TOLERANCE,
    max_iter: int | None = None,
) -> TransportSolution:
    """Minimize <cost, flow> over couplings of a and b (equal total mass)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    max_iter = max_iter or max(1000, 50 * m * n)

    flows, basis = northwest_corner(a, b)
    degenerate_run = 0
    bland = False
    iterations = 0

    while True:
        u, v = tree_potentials(basis, [cost[c] for c in basis], m, n)
        reduced = cost - u[:, None] - v[None, :]
        if bland:
            candidates = np.flatnonzero(reduced < -tolerance)
            if candidates.size == 0:
                break
            entering = divmod(int(candidates[0]), n)
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tolerance:
                break
            entering = divmod(flat, n)

        iterations += 1
        if iterations > max_iter:
            raise SolverError(f"transportation simplex exceeded {max_iter} pivots")

        path = _tree_path(_adjacency(basis, m, n), entering[0], m + entering[1])
        losing = path[0::2]
        theta = min(flows[c] for c in losing)
        leaving = min((c for c in losing if flows[c] == theta), key=lambda c: c[0] * n + c[1])

        for cell in losing:
            flows[cell] -= theta
        for cell in path[1::2]:
            flows[cell] += theta
        flows[entering] = theta
        del flows[leaving]
        basis.remove(leaving)
        basis.append(entering)

        if theta > 0:
            degenerate_run = 0
        else:
            degenerate_run += 1
            if not bland and degenerate_run > m + n:
                logger.debug("Switching to Bland's rule after repeated degenerate pivots")
                bland = True

    flow = np.zeros((m, n))
    for (i, j), amount in flows.items():
        flow[i, j] = amount
    logger.debug(f"Transportation simplex {m}x{n} finished after {iterations} pivots")
    return TransportSolution(flow=flow, u=u, v=v, basis=list(basis), iterations=iterations)


def _is_spanning_tree(basis: list[Cell], m: int, n: int) -> bool:
    parent = list(range(m + n))

    def find(node: int) -> int:
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    for i, j in basis:
        a, b = find(i), find(m + j)
        if a == b:
            return False
        parent[a] = b
    return True


def dual_vertices(cost: np.ndarray, *, tolerance: float = PIVOT_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """All dual-feasible basic potentials (u, v) with u_0 = 0.

    The optimal cost against any pair of marginals is the maximum of
    <a, u> + <b, v> over these rows. Enumerates every spanning tree of the
    bipartite graph, so only meant for supports of a handful of atoms.
    """
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    cells = [(i, j) for i in range(m) for j in range(n)]
    seen: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
    for subset in itertools.combinations(range(m * n), m + n - 1):
        basis = [cells[s] for s in subset]
        if not _is_spanning_tree(basis, m, n):
            continue
        u, v = tree_potentials(basis, [cost[c] for c in basis], m, n)
        if (cost - u[:, None] - v[None, :]).min() < -tolerance:
            continue
        seen.setdefault(tuple(np.round(np.concatenate([u, v]), 12)), (u, v))
    if not seen:
        raise SolverError("no dual-feasible basis found")
    U = np.array([uv[0] for uv in seen.values()])
    V = np.array([uv[1] for uv in seen.values()])
    logger.debug(f"Enumerated {len(seen)} dual vertices for a {m}x{n} cost matrix")
    return U, V
