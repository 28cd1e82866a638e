"""Primal network simplex for the bipartite transportation problem.

Works on the spanning-tree representation of the transportation graph with
an artificial root: sources 0..m-1, sinks m..m+n-1, root m+n.  The initial
tree is the star through the root with big-M arc costs, which is strongly
feasible whenever every demand is positive; the leaving-arc rule (last
blocking arc when traversing the pivot cycle from the apex in the direction
of the entering arc) keeps trees strongly feasible, so the method terminates
without cycling even under degeneracy.

Entering rule: most negative reduced cost, ties broken by lowest (i, j)
index, which makes runs bit-reproducible.  The same code drives a float
mode (vectorized pricing) and an exact Fraction mode (looped pricing, zero
tolerances); callers pick the mode by the dtype of `cost`.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ._common import SolverError

_MAX_PIVOTS = 1_000_000


def solve_transportation(supplies, demands, cost, exact=False, entering_tol=1e-12):
    """Minimize sum f_ij c_ij subject to the transportation constraints.

    Parameters
    ----------
    supplies, demands:
        Positive masses per side; equal totals (exactly in exact mode).
    cost:
        (m, n) float array, or nested lists of Fractions in exact mode.
    exact:
        Run all arithmetic over Fractions with zero tolerances.

    Returns
    -------
    dict with keys ``flows`` ({(i, j): mass} over the basic support),
    ``phi``/``psi`` (dual potentials with phi_i + psi_j <= c_ij, equality
    on the tree), ``iterations``, ``degenerate_pivots``.
    """
    m, n = len(supplies), len(demands)
    root = m + n
    if m == 0 or n == 0:
        raise SolverError("empty market")

    if exact:
        a = [Fraction(v) for v in supplies]
        b = [Fraction(v) for v in demands]
        C = [[Fraction(v) for v in row] for row in cost]
        zero = Fraction(0)
        tol = zero
        cmax = max((abs(v) for row in C for v in row), default=zero)
        big = (cmax + 1) * (m + n + 2)
    else:
        a = [float(v) for v in supplies]
        b = [float(v) for v in demands]
        C = np.ascontiguousarray(np.asarray(cost, dtype=float))
        zero = 0.0
        tol = float(entering_tol)
        cmax = float(np.abs(C).max()) if C.size else 0.0
        big = (cmax + 1.0) * (m + n + 2)

    if min(a) <= 0 or min(b) <= 0:
        raise SolverError("masses must be strictly positive")

    # Star tree through the artificial root.  Source arcs point child->root
    # (safe at zero flow), sink arcs root->child carry positive demand, so
    # the tree starts strongly feasible.
    parent = [root] * (m + n) + [-1]
    up = [True] * m + [False] * n + [False]
    flow = a + b + [zero]
    depth = [1] * (m + n) + [0]
    if exact:
        pot = [big] * m + [-big] * n + [zero]
    else:
        pot = np.concatenate(
            [np.full(m, big), np.full(n, -big), np.zeros(1)]
        )
        rc_buf = np.empty_like(C)
    children = [[] for _ in range(m + n + 1)]
    children[root] = list(range(m + n))

    iterations = 0
    degenerate = 0
    refreshed = False

    def refresh_potentials():
        pot[root] = zero
        stack = [root]
        while stack:
            p = stack.pop()
            for c in children[p]:
                if p == root or c == root:
                    cc = big
                else:
                    cc = C[c][p - m] if c < m else C[p][c - m]
                pot[c] = cc + pot[p] if up[c] else pot[p] - cc
                stack.append(c)

    while True:
        if iterations > _MAX_PIVOTS:
            raise SolverError("pivot limit exceeded")

        # --- pricing ---------------------------------------------------
        if exact:
            best = None
            val = zero
            for i in range(m):
                pi = pot[i]
                row = C[i]
                for j in range(n):
                    rc = row[j] - pi + pot[m + j]
                    if rc < val:
                        val = rc
                        best = (i, j)
            if best is None:
                break
            i_star, j_star = best
        else:
            np.subtract(C, pot[:m, None], out=rc_buf)
            rc_buf += pot[None, m : m + n]
            k = int(np.argmin(rc_buf))
            val = float(rc_buf.flat[k])
            if val >= -tol:
                # Potentials accumulate drift through incremental updates;
                # rebuild them once from the tree before accepting optimality.
                if not refreshed:
                    refresh_potentials()
                    refreshed = True
                    continue
                break
            refreshed = False
            i_star, j_star = divmod(k, n)

        iterations += 1
        snk = m + j_star

        # --- pivot cycle ------------------------------------------------
        u, v = i_star, snk
        while depth[u] > depth[v]:
            u = parent[u]
        while depth[v] > depth[u]:
            v = parent[v]
        while u != v:
            u = parent[u]
            v = parent[v]
        apex = u

        chain_i = []
        w = i_star
        while w != apex:
            chain_i.append(w)
            w = parent[w]
        chain_j = []
        w = snk
        while w != apex:
            chain_j.append(w)
            w = parent[w]

        # Ordered traversal apex -> i* -> (entering) -> j* -> apex; an arc
        # decreases iff it opposes the walk direction.
        ordered = [(c, up[c]) for c in reversed(chain_i)]
        ordered += [(c, not up[c]) for c in chain_j]

        theta = None
        for c, dec in ordered:
            if dec and (theta is None or flow[c] < theta):
                theta = flow[c]
        if theta is None:
            raise SolverError("unbounded pivot cycle")
        leave = None
        for c, dec in ordered:
            if dec and flow[c] == theta:
                leave = c
        if theta == zero:
            degenerate += 1
        else:
            for c, dec in ordered:
                flow[c] = flow[c] - theta if dec else flow[c] + theta

        # --- tree update ------------------------------------------------
        # Membership test: does i* sit below the leaving arc?
        w = i_star
        in_t2 = False
        while w != root:
            if w == leave:
                in_t2 = True
                break
            w = parent[w]
        delta = val if in_t2 else -val
        in2, in1 = (i_star, snk) if in_t2 else (snk, i_star)

        prev, prev_up, prev_flow = in1, in_t2, theta
        node = in2
        while True:
            old_parent, old_up, old_flow = parent[node], up[node], flow[node]
            children[old_parent].remove(node)
            parent[node], up[node], flow[node] = prev, prev_up, prev_flow
            children[prev].append(node)
            if node == leave:
                break
            prev, prev_up, prev_flow = node, not old_up, old_flow
            node = old_parent

        stack = [in2]
        while stack:
            p = stack.pop()
            depth[p] = depth[parent[p]] + 1
            pot[p] = pot[p] + delta
            stack.extend(children[p])

    # --- extraction ----------------------------------------------------
    total = sum(a)
    art_cut = zero if exact else 1e-7 * max(1.0, total)
    flows = {}
    for c in range(m + n):
        p = parent[c]
        if p == root:
            if flow[c] > art_cut:
                raise SolverError("artificial arc kept positive flow")
            continue
        if flow[c] > zero:
            if c < m:
                flows[(c, p - m)] = flow[c]
            else:
                flows[(p, c - m)] = flow[c]

    phi = [pot[i] for i in range(m)]
    psi = [-pot[m + j] for j in range(n)]
    return {
        "flows": flows,
        "phi": phi,
        "psi": psi,
        "iterations": iterations,
        "degenerate_pivots": degenerate,
    }
