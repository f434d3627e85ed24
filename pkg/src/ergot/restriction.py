"""Linear restrictions on transport plans and their property checkers.

A restriction bundles a finite set of test matrices omega (a plan is
admissible when <omega, p> = 0 for each), the simplexes its marginals must
live in, and, for the shipped families, the structure of the product space:
a product action (invariance, subgroup) or a product kernel (stationarity).
That product structure is what later decomposes admissible plans into
ergodic components.

Constraint sets are finite spanning sets, never the full linear span: for
invariance-style restrictions each product orbit contributes a spanning tree
of difference matrices rooted at its smallest cell, which is exactly
orbit-size - 1 independent constraints and forces orbit constancy.

The checkers (weak regularity, geometricity, coherency) return reports with
recorded failures instead of raising, except where their preconditions are
violated outright.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import (
    TAU_LP,
    TAU_MASS,
    TAU_RANK,
    ConstraintSet,
    FiniteSpace,
    GroupAction,
    Measure,
    MissingProductStructureError,
    NotFeasibleError,
    NotInSimplexError,
    ProjectionNotFullError,
    SimplexSpec,
    StochKernel,
    TransportPlan,
    full_simplex,
    invariant_simplex,
    stationary_simplex,
)
from .ergodic import (
    check_ergodic_kernel,
    membership_violation,
    orbit_decompose,
    stationary_components,
)

MAX_GROUP_ORDER = 10_000


@dataclass(frozen=True, eq=False)
class LinearRestriction:
    """R = (omega, marginal simplexes, product structure)."""

    omega: ConstraintSet
    mx_spec: SimplexSpec
    my_spec: SimplexSpec
    product_action: GroupAction | None = None
    product_kernel: StochKernel | None = None

    @property
    def row_space(self) -> FiniteSpace:
        return self.omega.row_space

    @property
    def col_space(self) -> FiniteSpace:
        return self.omega.col_space


@dataclass(frozen=True, eq=False)
class CheckReport:
    passed: bool
    failures: tuple[str, ...]
    notes: tuple[str, ...] = ()


def _product_space(sx: FiniteSpace, sy: FiniteSpace) -> FiniteSpace:
    return FiniteSpace(tuple(f"({a},{b})" for a in sx.labels for b in sy.labels))


def _tree_constraints(product_action: GroupAction, nx_: int, ny: int) -> list[tuple[str, np.ndarray]]:
    """Spanning-tree difference constraints, one tree per product orbit.

    BFS starts at the smallest cell of each orbit and follows generators in
    order; every tree edge (cell, g(cell)) becomes the matrix with +1 at the
    parent cell and -1 at the child.
    """
    part = orbit_decompose(product_action)
    gens = product_action.generators
    out: list[tuple[str, np.ndarray]] = []
    for orb in part.orbits:
        root = min(orb)
        seen = {root}
        queue = deque([root])
        while queue:
            cell = queue.popleft()
            for lbl, g in gens:
                child = int(g[cell])
                if child in seen:
                    continue
                seen.add(child)
                queue.append(child)
                m = np.zeros((nx_, ny))
                m[divmod(cell, ny)] = 1.0
                m[divmod(child, ny)] = -1.0
                x, y = divmod(cell, ny)
                out.append((f"invariance:{lbl}:({x},{y})", m))
    return out


def invariance_restriction(action: GroupAction) -> LinearRestriction:
    """Plans invariant under the diagonal action (x, y) -> (g(x), g(y)).

    A plan satisfies the constraint set iff it is constant on every orbit of
    the diagonal action on the product space. Marginals must be invariant
    measures.
    """
    n = action.space.n
    pspace = _product_space(action.space, action.space)
    pgens = []
    for lbl, g in action.generators:
        gp = np.empty(n * n, dtype=np.intp)
        for x in range(n):
            gp[x * n: (x + 1) * n] = g[x] * n + g
        pgens.append((lbl, gp))
    paction = GroupAction(pspace, tuple(pgens))
    omegas = _tree_constraints(paction, n, n)
    spec = invariant_simplex(action)
    return LinearRestriction(
        omega=ConstraintSet(action.space, action.space, tuple(omegas)),
        mx_spec=spec, my_spec=spec, product_action=paction)


def _mulclose(gens: list[tuple], compose, cap: int) -> set:
    group = set(gens)
    frontier = list(group)
    while frontier:
        new = []
        for a in frontier:
            for b in gens:
                c = compose(a, b)
                if c not in group:
                    group.add(c)
                    new.append(c)
                    if len(group) > cap:
                        raise ValueError(
                            f"generated group exceeds {cap} elements; "
                            "subgroup restriction is only supported for small groups")
        frontier = new
    return group


def subgroup_restriction(action: GroupAction, pair_generators) -> LinearRestriction:
    """Plans invariant under a subgroup of pairwise moves (x, y) -> (g(x), h(y)).

    pair_generators is a list of (g, h) permutation pairs. The projections of
    the generated pair group onto each factor must reproduce the group
    generated by action; otherwise ProjectionNotFullError is raised, because
    marginal invariance is no longer implied.
    """
    n = action.space.n
    pairs = [(tuple(int(v) for v in np.asarray(g, dtype=np.intp)),
              tuple(int(v) for v in np.asarray(h, dtype=np.intp)))
             for g, h in pair_generators]
    for g, h in pairs:
        if sorted(g) != list(range(n)) or sorted(h) != list(range(n)):
            raise ValueError("pair generators must permute the same space as action")

    def compose_one(a, b):
        return tuple(a[i] for i in b)

    def compose_pair(a, b):
        return compose_one(a[0], b[0]), compose_one(a[1], b[1])

    base = [tuple(int(v) for v in g) for _, g in action.generators]
    ident = tuple(range(n))
    full_group = _mulclose(base + [ident], compose_one, MAX_GROUP_ORDER)
    pair_group = _mulclose(pairs + [(ident, ident)], compose_pair, MAX_GROUP_ORDER)
    proj1 = {g for g, _ in pair_group}
    proj2 = {h for _, h in pair_group}
    if proj1 != full_group or proj2 != full_group:
        raise ProjectionNotFullError(
            "factor projections of the pair group do not generate the full group "
            f"(sizes {len(proj1)}/{len(proj2)} vs {len(full_group)})")

    pspace = _product_space(action.space, action.space)
    pgens = []
    for k, (g, h) in enumerate(pairs):
        garr = np.array(g, dtype=np.intp)
        harr = np.array(h, dtype=np.intp)
        gp = np.empty(n * n, dtype=np.intp)
        for x in range(n):
            gp[x * n: (x + 1) * n] = garr[x] * n + harr
        pgens.append((f"pair{k}", gp))
    paction = GroupAction(pspace, tuple(pgens))
    omegas = [(lbl.replace("invariance:", "subgroup:", 1), m)
              for lbl, m in _tree_constraints(paction, n, n)]
    spec = invariant_simplex(action)
    return LinearRestriction(
        omega=ConstraintSet(action.space, action.space, tuple(omegas)),
        mx_spec=spec, my_spec=spec, product_action=paction)


def stationarity_restriction(qx: StochKernel, qy: StochKernel) -> LinearRestriction:
    """Plans stationary for the product kernel Q(x,y) = Q^x tensor Q^y.

    Both kernels must individually pass check_ergodic_kernel. One constraint
    matrix is emitted per product cell: the indicator of the cell minus the
    corresponding column of the product kernel; all-zero matrices (identity
    kernels) are pruned.
    """
    for name, q in (("qx", qx), ("qy", qy)):
        chk = check_ergodic_kernel(q)
        if not chk.passed:
            raise ValueError(
                f"{name} fails the decomposing-kernel check at rows {chk.offending}")
    nx_, ny = qx.space.n, qy.space.n
    qm = np.kron(qx.q, qy.q)
    pspace = _product_space(qx.space, qy.space)
    omegas = []
    eye = np.eye(nx_ * ny)
    for cell in range(nx_ * ny):
        vec = eye[cell] - qm[:, cell]
        if np.max(np.abs(vec)) <= TAU_MASS:
            continue
        x, y = divmod(cell, ny)
        omegas.append((f"stationarity:({x},{y})", vec.reshape(nx_, ny)))
    return LinearRestriction(
        omega=ConstraintSet(qx.space, qy.space, tuple(omegas)),
        mx_spec=stationary_simplex(qx), my_spec=stationary_simplex(qy),
        product_kernel=StochKernel(pspace, qm))


def no_restriction(row_space: FiniteSpace, col_space: FiniteSpace) -> LinearRestriction:
    """The unconstrained problem: empty omega, full simplexes, Dirac atoms."""
    pspace = _product_space(row_space, col_space)
    ident = StochKernel(pspace, np.eye(pspace.n))
    return LinearRestriction(
        omega=ConstraintSet(row_space, col_space, ()),
        mx_spec=full_simplex(row_space), my_spec=full_simplex(col_space),
        product_kernel=ident)


def product_atoms(r: LinearRestriction) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Atoms of the product ergodic partition, as cell-index lists.

    Group-style restrictions partition all cells into product orbits; kernel
    restrictions use the recurrent classes of the product kernel, leaving
    transient cells mapped to -1.
    """
    if r.product_action is not None:
        part = orbit_decompose(r.product_action)
        return [tuple(o) for o in part.orbits], part.orbit_of.copy()
    if r.product_kernel is not None:
        comps, class_of = stationary_components(r.product_kernel)
        atoms = [tuple(np.flatnonzero(class_of == k).tolist()) for k in range(len(comps))]
        return atoms, class_of
    raise MissingProductStructureError(
        "restriction carries neither a product action nor a product kernel")


def plan_violations(pi: TransportPlan, r: LinearRestriction) -> list[tuple[str, float]]:
    """(label, |<omega, p>|) for every constraint the plan breaks beyond TAU_LP."""
    out = []
    for lbl, m in r.omega.omegas:
        v = float(abs(np.sum(m * pi.p)))
        if v > TAU_LP:
            out.append((lbl, v))
    return out


def check_weak_regularity(r: LinearRestriction, samples: list[tuple[Measure, Measure]]) -> CheckReport:
    """Nonemptiness of the admissible set, witnessed by the product plan.

    For each sampled pair the product measure mu x nu is tested against
    every constraint; passing means the admissible set is nonempty for that
    pair. The topological conditions (closed set, continuous functionals)
    hold automatically on a finite space and are recorded as notes.
    """
    failures = []
    for k, (mu, nu) in enumerate(samples):
        for spec, m, side in ((r.mx_spec, mu, "mu"), (r.my_spec, nu, "nu")):
            bad = membership_violation(m, spec)
            if bad is not None:
                raise NotInSimplexError(f"sample {k} {side}: {bad}")
        prod = np.outer(mu.w, nu.w)
        for lbl, m in r.omega.omegas:
            v = float(abs(np.sum(m * prod)))
            if v > TAU_LP:
                failures.append(f"pair {k}: product plan breaks {lbl} by {v:.3g}")
    notes = (
        "closedness: automatic, the admissible set is an intersection of closed sets in a compact simplex",
        "continuity: automatic, every linear functional on a finite-dimensional space is continuous",
    )
    return CheckReport(passed=not failures, failures=tuple(failures), notes=notes)


def _echelon_basis(rows: list[np.ndarray]) -> list[np.ndarray]:
    """Reduced independent spanning rows, by elimination with TAU_RANK pivots."""
    basis: list[np.ndarray] = []
    for row in rows:
        v = _reduce_against(row, basis)
        piv = float(np.max(np.abs(v), initial=0.0))
        if piv > TAU_RANK:
            basis.append(v / piv)
    return basis


def _reduce_against(v: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    v = v.astype(float).copy()
    for b in basis:
        j = int(np.argmax(np.abs(b)))
        v -= (v[j] / b[j]) * b
    return v


def check_geometric(r: LinearRestriction, samples: list[Measure]) -> CheckReport:
    """The three conditions that make the restricted distance a metric.

    (1) every omega vanishes on the diagonal pushforward of each sample,
    (2) every omega vanishes on products of samples, and (3) the constraint
    row space is closed under matrix transposition (numerical rank test).
    Requires both marginal spaces to coincide.
    """
    if r.row_space.labels != r.col_space.labels:
        raise ValueError("geometricity only makes sense for plans on X x X")
    failures = []
    for lbl, m in r.omega.omegas:
        diag = np.diag(m)
        for k, mu in enumerate(samples):
            v = float(abs(diag @ mu.w))
            if v > TAU_LP:
                failures.append(f"{lbl}: diagonal pairing with sample {k} is {v:.3g}")
        for ka, mu in enumerate(samples):
            for kb, nu in enumerate(samples):
                v = float(abs(mu.w @ m @ nu.w))
                if v > TAU_LP:
                    failures.append(f"{lbl}: product pairing with samples ({ka},{kb}) is {v:.3g}")
    basis = _echelon_basis([m.reshape(-1) for _, m in r.omega.omegas])
    for lbl, m in r.omega.omegas:
        residual = _reduce_against(m.T.reshape(-1), basis)
        v = float(np.max(np.abs(residual), initial=0.0))
        if v > TAU_RANK:
            failures.append(f"{lbl}: transpose leaves the constraint row space (residual {v:.3g})")
    return CheckReport(passed=not failures, failures=tuple(failures))


def check_coherency(r: LinearRestriction, pi_samples: list[TransportPlan]) -> CheckReport:
    """Constraints must vanish atom by atom, not only globally.

    For each feasible sample plan, each constraint is re-paired with the
    plan restricted to every atom of the product partition; any nonzero
    localized pairing is recorded. For the shipped restriction families this
    is a regression test: it holds by construction.
    """
    atoms, _ = product_atoms(r)
    failures = []
    for k, pi in enumerate(pi_samples):
        broken = plan_violations(pi, r)
        if broken:
            raise NotFeasibleError(
                f"sample plan {k} violates {broken[0][0]} by {broken[0][1]:.3g}")
        flat = pi.p.reshape(-1)
        for lbl, m in r.omega.omegas:
            mflat = m.reshape(-1)
            for a, atom in enumerate(atoms):
                idx = list(atom)
                v = float(abs(mflat[idx] @ flat[idx]))
                if v > TAU_LP:
                    failures.append(f"plan {k}, {lbl}: pairing on atom {a} is {v:.3g}")
    return CheckReport(passed=not failures, failures=tuple(failures))
