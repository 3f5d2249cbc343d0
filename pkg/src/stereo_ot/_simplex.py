"""Primal network simplex for the dense transportation problem.

Solves ``min <C, P>`` subject to ``P 1 = supply``, ``P^T 1 = demand``,
``P >= 0`` on the complete bipartite graph.  The basis is a spanning tree
with ``n + m - 1`` arcs (zero-flow arcs allowed); the optimum returned is a
vertex of the transport polytope.

Entering arcs use Dantzig's rule (most negative reduced cost, first in
row-major order).  After a run of degenerate pivots the solver falls back to
Bland's rule until the objective moves again, which rules out cycling.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def _northwest_corner(supply, demand):
    n, m = len(supply), len(demand)
    ra = supply.astype(float).copy()
    rb = demand.astype(float).copy()
    basis = []
    flow = []
    i = j = 0
    while True:
        x = max(min(ra[i], rb[j]), 0.0)
        basis.append((i, j))
        flow.append(x)
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if i < n - 1 and (j == m - 1 or ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return basis, flow


def _adjacency(basis, n, m):
    adj = [[] for _ in range(n + m)]
    for k, (i, j) in enumerate(basis):
        adj[i].append((n + j, k))
        adj[n + j].append((i, k))
    return adj


def _potentials(cost, basis, adj, n, m):
    pot = np.zeros(n + m)
    seen = np.zeros(n + m, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other, k in adj[node]:
            if seen[other]:
                continue
            i, j = basis[k]
            # u_i + v_j = c_ij
            pot[other] = cost[i, j] - pot[node]
            seen[other] = True
            queue.append(other)
    return pot[:n], pot[n:]


def _tree_path(adj, start, goal):
    """Arc indices along the unique tree path from ``start`` to ``goal``."""
    parent = {start: (None, None)}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other, k in adj[node]:
            if other not in parent:
                parent[other] = (node, k)
                queue.append(other)
    arcs = []
    node = goal
    while node != start:
        node, k = parent[node]
        arcs.append(k)
    arcs.reverse()
    return arcs


def network_simplex(cost, supply, demand, max_iter=None):
    """Return the optimal dense plan for a balanced transportation problem."""
    cost = np.asarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    n, m = cost.shape
    scale = max(1.0, float(np.max(np.abs(cost))))
    red_tol = 1e-11 * scale
    flow_tol = 1e-15 * max(1.0, float(supply.sum()))
    if max_iter is None:
        max_iter = 50 * (n + m) * max(n, m) + 1000

    basis, flow = _northwest_corner(supply, demand)
    flow = np.array(flow)
    stall = 0
    bland = False
    for _ in range(max_iter):
        adj = _adjacency(basis, n, m)
        u, v = _potentials(cost, basis, adj, n, m)
        red = cost - u[:, None] - v[None, :]
        if bland:
            candidates = np.flatnonzero(red.ravel() < -red_tol)
            if candidates.size == 0:
                break
            flat = int(candidates[0])
        else:
            flat = int(np.argmin(red))
            if red.flat[flat] >= -red_tol:
                break
        p, q = divmod(flat, m)

        arcs = _tree_path(adj, p, n + q)
        minus = arcs[0::2]
        plus = arcs[1::2]
        theta = min(flow[k] for k in minus)
        ties = [k for k in minus if flow[k] <= theta + flow_tol]
        leave = min(ties, key=lambda k: basis[k])

        if theta > flow_tol:
            stall = 0
            bland = False
        else:
            stall += 1
            if stall > n + m:
                bland = True
        for k in minus:
            flow[k] = max(flow[k] - theta, 0.0)
        for k in plus:
            flow[k] += theta
        basis[leave] = (p, q)
        flow[leave] = theta
    else:
        raise RuntimeError("network simplex did not converge")

    plan = np.zeros((n, m))
    for (i, j), x in zip(basis, flow):
        if x > flow_tol:
            plan[i, j] = x
    return plan
