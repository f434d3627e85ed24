import numpy as np
import pytest

from ergot import (
    ConstraintSet,
    FiniteSpace,
    GroupAction,
    LinearRestriction,
    Measure,
    MissingProductStructureError,
    NotFeasibleError,
    ProjectionNotFullError,
    StochKernel,
    TransportPlan,
    averaging_kernel,
    check_coherency,
    check_geometric,
    check_weak_regularity,
    full_simplex,
    invariance_restriction,
    no_restriction,
    plan_violations,
    product_atoms,
    simplex_components,
    stationarity_restriction,
    subgroup_restriction,
)


def c3x2_action():
    sp = FiniteSpace.of_size(6)
    return GroupAction(sp, (("g", np.array([1, 2, 0, 4, 5, 3], dtype=np.intp)),))


def swap_action():
    sp = FiniteSpace.of_size(2)
    return GroupAction(sp, (("s", np.array([1, 0], dtype=np.intp)),))


def numerical_rank(mats, tol=1e-8):
    if not mats:
        return 0
    stack = np.array([m.ravel() for m in mats])
    return int(np.linalg.matrix_rank(stack, tol=tol))


def test_identity_action_no_constraints():
    sp = FiniteSpace.of_size(3)
    act = GroupAction(sp, (("e", np.arange(3, dtype=np.intp)),))
    assert len(invariance_restriction(act).omega) == 0


def test_swap_constraints_tie_cells_together():
    r = invariance_restriction(swap_action())
    assert len(r.omega) == 2
    # semantics: exactly the plans with p00 = p11 and p01 = p10 satisfy them
    good = TransportPlan(r.row_space, r.col_space, np.array([[0.1, 0.4], [0.4, 0.1]]))
    bad = TransportPlan(r.row_space, r.col_space, np.array([[0.2, 0.4], [0.4, 0.0]]))
    assert plan_violations(good, r) == []
    assert plan_violations(bad, r)


def test_c3x2_orbit_and_constraint_counts():
    r = invariance_restriction(c3x2_action())
    atoms, class_of = product_atoms(r)
    assert len(atoms) == 12
    assert all(len(a) == 3 for a in atoms)
    assert set().union(*map(set, atoms)) == set(range(36))
    assert len(r.omega) == 24
    assert np.all(class_of >= 0)


def test_orbit_constancy_equivalence():
    # constraints hold iff the plan is constant on every product orbit
    r = invariance_restriction(c3x2_action())
    atoms, _ = product_atoms(r)
    rng = np.random.default_rng(2)
    for _ in range(20):
        raw = rng.uniform(0, 1, 36)
        flat = np.zeros(36)
        for atom in atoms:
            flat[list(atom)] = np.mean(raw[list(atom)])
        flat = (flat / flat.sum()).reshape(6, 6)
        pi = TransportPlan(r.row_space, r.col_space, flat)
        assert plan_violations(pi, r) == []
        bumped = flat.copy()
        x0, y0 = divmod(atoms[0][0], 6)
        bumped[x0, y0] += 0.05
        pi_bad = TransportPlan(r.row_space, r.col_space, bumped / bumped.sum())
        assert plan_violations(pi_bad, r)


def test_subgroup_diagonal_pairs_reproduce_invariance():
    act = c3x2_action()
    g = act.generators[0][1]
    inv = invariance_restriction(act)
    sub = subgroup_restriction(act, [(g, g)])
    mats_inv = [m for _, m in inv.omega.omegas]
    mats_sub = [m for _, m in sub.omega.omegas]
    assert numerical_rank(mats_inv) == numerical_rank(mats_sub)
    assert numerical_rank(mats_inv + mats_sub) == numerical_rank(mats_inv)


def test_subgroup_one_sided_pairs_give_block_orbits():
    act = c3x2_action()
    g = act.generators[0][1]
    e = np.arange(6, dtype=np.intp)
    r = subgroup_restriction(act, [(g, e), (e, g)])
    atoms, _ = product_atoms(r)
    assert len(atoms) == 4
    assert sorted(len(a) for a in atoms) == [9, 9, 9, 9]


def test_subgroup_rejects_partial_projection():
    act = c3x2_action()
    e = np.arange(6, dtype=np.intp)
    with pytest.raises(ProjectionNotFullError):
        subgroup_restriction(act, [(act.generators[0][1], e)])


def test_stationarity_identity_kernel_prunes_to_empty():
    sp = FiniteSpace.of_size(2)
    q = StochKernel(sp, np.eye(2))
    r = stationarity_restriction(q, q)
    assert len(r.omega) == 0


def test_stationarity_of_averaging_kernel_is_product_group_invariance():
    # the product kernel q (x) q averages both coordinates independently, so
    # its stationarity constraints span the same subspace as invariance under
    # the full product group, and strictly contain the diagonal-invariance
    # constraints
    for act in (swap_action(),
                GroupAction(FiniteSpace.of_size(3),
                            (("c", np.array([1, 2, 0], dtype=np.intp)),))):
        n = act.space.n
        g = act.generators[0][1]
        e = np.arange(n, dtype=np.intp)
        q = averaging_kernel(act)
        mk = [m for _, m in stationarity_restriction(q, q).omega.omegas]
        mp = [m for _, m in subgroup_restriction(act, [(g, e), (e, g)]).omega.omegas]
        md = [m for _, m in invariance_restriction(act).omega.omegas]
        assert numerical_rank(mk) == numerical_rank(mp)
        assert numerical_rank(mk + mp) == numerical_rank(mk)
        # diagonal invariance sits strictly inside
        assert numerical_rank(mk + md) == numerical_rank(mk)
        assert numerical_rank(md) < numerical_rank(mk)


def test_stationarity_product_kernel_passes_check():
    from ergot import check_ergodic_kernel
    act = c3x2_action()
    q = averaging_kernel(act)
    r = stationarity_restriction(q, q)
    assert r.product_kernel is not None
    assert check_ergodic_kernel(r.product_kernel).passed


def test_stationarity_rejects_non_decomposing_kernel():
    sp = FiniteSpace.of_size(2)
    swap = StochKernel(sp, np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        stationarity_restriction(swap, swap)


def test_weak_regularity_of_invariance():
    r = invariance_restriction(c3x2_action())
    comps, _ = simplex_components(r.mx_spec)
    rep = check_weak_regularity(r, [(a, b) for a in comps for b in comps])
    assert rep.passed
    assert rep.notes  # closedness/continuity recorded as automatic


def test_weak_regularity_failure_on_forbidden_cell():
    sp = FiniteSpace.of_size(2)
    om = np.zeros((2, 2))
    om[0, 0] = 1.0
    r = LinearRestriction(
        ConstraintSet(sp, sp, (("cell00", om),)),
        full_simplex(sp), full_simplex(sp))
    dirac = Measure(sp, np.array([1.0, 0.0]))
    rep = check_weak_regularity(r, [(dirac, dirac)])
    assert not rep.passed


def test_weak_regularity_empty_constraints():
    sp = FiniteSpace.of_size(3)
    r = no_restriction(sp, sp)
    rng = np.random.default_rng(4)
    pairs = []
    for _ in range(5):
        pairs.append((Measure(sp, rng.dirichlet(np.ones(3))),
                      Measure(sp, rng.dirichlet(np.ones(3)))))
    assert check_weak_regularity(r, pairs).passed


def test_geometric_invariance_passes_all_items():
    r = invariance_restriction(c3x2_action())
    comps, _ = simplex_components(r.mx_spec)
    rep = check_geometric(r, comps)
    assert rep.passed
    assert rep.failures == ()


def test_geometric_fails_on_single_cell_constraint():
    sp = FiniteSpace.of_size(2)
    om = np.zeros((2, 2))
    om[0, 1] = 1.0
    r = LinearRestriction(
        ConstraintSet(sp, sp, (("cell01", om),)),
        full_simplex(sp), full_simplex(sp))
    uniform = Measure(sp, np.array([0.5, 0.5]))
    rep = check_geometric(r, [uniform])
    assert not rep.passed


def test_geometric_empty_constraints():
    sp = FiniteSpace.of_size(2)
    rep = check_geometric(no_restriction(sp, sp), [Measure(sp, np.array([0.5, 0.5]))])
    assert rep.passed


def test_coherency_of_invariance_on_feasible_plans():
    r = invariance_restriction(c3x2_action())
    pi = TransportPlan(r.row_space, r.col_space, np.full((6, 6), 1.0 / 36.0))
    assert check_coherency(r, [pi]).passed


def test_coherency_failure_recorded_for_local_imbalance():
    # identity action: every product cell is its own invariant class, so a
    # constraint balanced globally but not cell-by-cell must be flagged
    sp = FiniteSpace.of_size(2)
    act = GroupAction(sp, (("e", np.arange(2, dtype=np.intp)),))
    om = np.zeros((2, 2))
    om[0, 0] = 1.0
    om[0, 1] = -1.0
    base = invariance_restriction(act)
    r = LinearRestriction(
        ConstraintSet(sp, sp, (("tilt", om),)),
        base.mx_spec, base.my_spec, product_action=base.product_action)
    pi = TransportPlan(sp, sp, np.full((2, 2), 0.25))
    rep = check_coherency(r, [pi])
    assert not rep.passed


def test_coherency_requires_feasible_samples():
    r = invariance_restriction(swap_action())
    lopsided = TransportPlan(r.row_space, r.col_space,
                             np.array([[0.6, 0.2], [0.1, 0.1]]))
    with pytest.raises(NotFeasibleError):
        check_coherency(r, [lopsided])


def test_coherency_empty_constraints():
    sp = FiniteSpace.of_size(2)
    r = no_restriction(sp, sp)
    pi = TransportPlan(sp, sp, np.full((2, 2), 0.25))
    assert check_coherency(r, [pi]).passed


def test_product_atoms_require_structure():
    sp = FiniteSpace.of_size(2)
    r = LinearRestriction(ConstraintSet(sp, sp, ()), full_simplex(sp), full_simplex(sp))
    with pytest.raises(MissingProductStructureError):
        product_atoms(r)


def test_extreme_product_plans_have_extreme_marginals():
    from ergot import decompose_measure
    for r in (invariance_restriction(c3x2_action()),
              stationarity_restriction(averaging_kernel(c3x2_action()),
                                       averaging_kernel(c3x2_action()))):
        atoms, _ = product_atoms(r)
        for atom in atoms:
            flat = np.zeros(36)
            flat[list(atom)] = 1.0 / len(atom)
            pi = TransportPlan(r.row_space, r.col_space, flat.reshape(6, 6))
            mu = pi.row_marginal()
            nu = pi.col_marginal()
            assert len(decompose_measure(mu, r.mx_spec).components) == 1
            assert len(decompose_measure(nu, r.my_spec).components) == 1
