"""Ergodic decomposition machinery for finite spaces.

Three families of simplexes are supported, named by SimplexSpec:

* "full": every probability measure; extreme points are the Dirac measures.
* "group": measures invariant under a permutation action; extreme points are
  the uniform measures on orbits, and the decomposing kernel is the exact
  orbit average (the finite form of a Birkhoff/Følner limit, attained).
* "kernel": measures stationary for a Markov kernel; extreme points are the
  stationary distributions of the recurrent communicating classes.

decompose_measure writes a member of the simplex as a mixture of extreme
points; barycenter mixes it back. The round trip is exact to TAU_MASS.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .core import (
    TAU_MASS,
    ErgodicDecomposition,
    FiniteSpace,
    GroupAction,
    Measure,
    NotInSimplexError,
    SimplexSpec,
    StochKernel,
    TransientMassError,
    pushforward,
)


@dataclass(frozen=True, eq=False)
class OrbitPartition:
    space: FiniteSpace
    orbit_of: np.ndarray            # point index -> orbit id
    orbits: tuple[tuple[int, ...], ...]


@dataclass(frozen=True, eq=False)
class KernelCheck:
    passed: bool
    offending: tuple[int, ...]      # points x whose row charges a different row


def orbit_decompose(action: GroupAction) -> OrbitPartition:
    """Orbits of the generated group = connected components of {(x, g(x))}.

    Orbit ids are assigned by smallest contained point, so the result is
    deterministic regardless of generator order.
    """
    n = action.space.n
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for _, g in action.generators:
        for x in range(n):
            ra, rb = find(x), find(int(g[x]))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = [find(x) for x in range(n)]
    reps = sorted(set(roots))
    rep_to_id = {r: i for i, r in enumerate(reps)}
    orbit_of = np.array([rep_to_id[r] for r in roots], dtype=np.intp)
    orbits = tuple(tuple(np.flatnonzero(orbit_of == i).tolist()) for i in range(len(reps)))
    return OrbitPartition(action.space, orbit_of, orbits)


def averaging_kernel(action: GroupAction) -> StochKernel:
    """Kernel whose row at x is the uniform measure on the orbit of x.

    This is the exact value of the orbit average (1/N) sum_k d_{T^k x} once N
    reaches the cycle length, so no truncation is involved.
    """
    part = orbit_decompose(action)
    n = action.space.n
    q = np.zeros((n, n))
    for orb in part.orbits:
        idx = np.array(orb, dtype=np.intp)
        q[np.ix_(idx, idx)] = 1.0 / len(orb)
    return StochKernel(action.space, q)


def check_ergodic_kernel(q: StochKernel) -> KernelCheck:
    """Finite test that a kernel decomposes its own stationary measures.

    Passes iff for every x the support of row x lies inside the set of
    points whose rows coincide with row x (within TAU_MASS). On a finite
    space this is equivalent to the multiplicativity identity
    Q(g Q(f)) = Q(g) Q(f) for all functions f, g.
    """
    mat = q.q
    offending = []
    for x in range(q.space.n):
        support = np.flatnonzero(mat[x] > TAU_MASS)
        rows_differ = np.max(np.abs(mat[support] - mat[x]), axis=1, initial=0.0)
        if np.any(rows_differ > TAU_MASS):
            offending.append(x)
    return KernelCheck(passed=not offending, offending=tuple(offending))


def stationary_components(q: StochKernel) -> tuple[list[Measure], np.ndarray]:
    """Stationary distributions of the recurrent classes, plus a class map.

    Recurrent communicating classes are the sink components of the SCC
    condensation of the graph {q[x][y] > TAU_MASS}. Each class gets the
    unique solution of pi Q = pi supported on it (direct linear solve with a
    normalization row). The class map sends a point to its component index,
    or -1 for transient points. Components are ordered by smallest point.
    """
    n = q.space.n
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    xs, ys = np.nonzero(q.q > TAU_MASS)
    g.add_edges_from(zip(xs.tolist(), ys.tolist()))
    cond = nx.condensation(g)
    sinks = [c for c in cond.nodes if cond.out_degree(c) == 0]
    classes = sorted((sorted(cond.nodes[c]["members"]) for c in sinks), key=lambda cl: cl[0])

    comps: list[Measure] = []
    class_of = np.full(n, -1, dtype=np.intp)
    for k, cls in enumerate(classes):
        idx = np.array(cls, dtype=np.intp)
        block = q.q[np.ix_(idx, idx)]
        s = len(cls)
        lhs = np.vstack([block.T - np.eye(s), np.ones((1, s))])
        rhs = np.zeros(s + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        pi = np.maximum(pi, 0.0)
        pi /= pi.sum()
        if np.max(np.abs(pi @ block - pi)) > 1e-10:
            raise RuntimeError(
                f"stationary solve did not converge on class {cls}; "
                "the block is not numerically stochastic-irreducible")
        w = np.zeros(n)
        w[idx] = pi
        comps.append(Measure(q.space, w))
        class_of[idx] = k
    return comps, class_of


def simplex_components(spec: SimplexSpec) -> tuple[list[Measure], np.ndarray]:
    """All extreme measures of the simplex, with the point -> class map.

    Unlike decompose_measure this does not depend on any particular member:
    it enumerates Diracs (full), orbit-uniform measures (group) or recurrent
    stationary distributions (kernel). Transient points map to -1.
    """
    n = spec.space.n
    if spec.kind == "full":
        comps = [Measure(spec.space, np.eye(n)[i]) for i in range(n)]
        return comps, np.arange(n, dtype=np.intp)
    if spec.kind == "group":
        part = orbit_decompose(spec.action)
        comps = []
        for orb in part.orbits:
            w = np.zeros(n)
            w[list(orb)] = 1.0 / len(orb)
            comps.append(Measure(spec.space, w))
        return comps, part.orbit_of.copy()
    return stationary_components(spec.kernel)


def membership_violation(mu: Measure, spec: SimplexSpec) -> str | None:
    """None if mu belongs to the simplex, else a description of the failure."""
    if spec.kind == "full":
        return None
    if spec.kind == "group":
        for lbl, g in spec.action.generators:
            dev = float(np.max(np.abs(pushforward(g, mu).w - mu.w)))
            if dev > TAU_MASS:
                return f"not invariant under generator {lbl!r} (deviation {dev:.3g})"
        return None
    dev = float(np.max(np.abs(mu.w @ spec.kernel.q - mu.w)))
    if dev > TAU_MASS:
        return f"not stationary for the kernel (deviation {dev:.3g})"
    return None


def decompose_measure(mu: Measure, spec: SimplexSpec) -> ErgodicDecomposition:
    """Write a simplex member as a mixture of extreme measures.

    Membership is checked first and NotInSimplexError raised on failure; for
    kernel simplexes, mass on transient states is reported as the more
    specific TransientMassError. Classes carrying no mass are dropped, so an
    extreme measure decomposes into exactly one component of weight 1.
    """
    if spec.kind == "kernel":
        comps_all, class_all = simplex_components(spec)
        transient = float(mu.w[class_all < 0].sum()) if np.any(class_all < 0) else 0.0
        if transient > TAU_MASS:
            raise TransientMassError(
                f"measure puts mass {transient:.3g} on transient states "
                f"{np.flatnonzero(class_all < 0).tolist()}")
    else:
        comps_all, class_all = simplex_components(spec)
    bad = membership_violation(mu, spec)
    if bad is not None:
        raise NotInSimplexError(bad)

    kept_comps: list[Measure] = []
    kept_weights: list[float] = []
    class_of = np.full(mu.space.n, -1, dtype=np.intp)
    for k, comp in enumerate(comps_all):
        mask = class_all == k
        weight = float(mu.w[mask].sum())
        if weight <= TAU_MASS:
            continue
        class_of[mask] = len(kept_comps)
        kept_comps.append(comp)
        kept_weights.append(weight)
    return ErgodicDecomposition(tuple(kept_comps), np.array(kept_weights), class_of)


def barycenter(dec: ErgodicDecomposition) -> Measure:
    """Mix the components back: sum of weights[k] * components[k].

    No renormalization happens here; a decomposition of a probability
    measure must already mix back to one.
    """
    if not dec.components:
        raise ValueError("empty decomposition has no barycenter")
    space = dec.components[0].space
    w = np.zeros(space.n)
    for wk, comp in zip(dec.weights, dec.components):
        w += wk * comp.w
    return Measure(space, w)
