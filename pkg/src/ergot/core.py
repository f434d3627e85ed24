"""Shared finite-scale types: spaces, measures, plans, actions, kernels, costs.

Points are dense indices 0..n-1; labels are presentation only. Every type is
plain immutable data built on numpy arrays, and every operation here is a pure
function, so objects can be shared freely between threads and processes.

Numeric contracts use the module tolerances below. ``validate`` reports
violations as data instead of raising, so callers decide what is fatal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAU_MASS = 1e-12     # mass bookkeeping (sums to one, marginal identities)
TAU_METRIC = 1e-9    # triangle inequality and other metric comparisons
TAU_LP = 1e-9        # LP feasibility and optimality
TAU_RANK = 1e-8      # numerical rank decisions (row-reduction pivots)
TAU_THM = 1e-8       # agreement of independently computed quantities


class NotInSimplexError(ValueError):
    """A measure fails membership in the simplex it was claimed to be in."""


class TransientMassError(NotInSimplexError):
    """A measure puts non-negligible mass on transient states of a kernel."""


class NotFeasibleError(ValueError):
    """A plan violates the constraint set it was claimed to satisfy."""


class MissingProductStructureError(ValueError):
    """A restriction carries neither a product action nor a product kernel."""


class ProjectionNotFullError(ValueError):
    """Pair generators whose factor projections do not generate the full group."""


def _freeze(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """An ordered finite set of points, identified by distinct string labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def n(self) -> int:
        return len(self.labels)

    @classmethod
    def of_size(cls, n: int, prefix: str = "") -> "FiniteSpace":
        return cls(tuple(f"{prefix}{i}" for i in range(n)))

    def __repr__(self):
        return f"FiniteSpace(n={self.n})"


@dataclass(frozen=True, eq=False)
class GroundMetric:
    """A metric on a finite space, stored as a dense symmetric matrix."""

    space: FiniteSpace
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _freeze(self.d))
        if self.d.shape != (self.space.n, self.space.n):
            raise ValueError(f"metric shape {self.d.shape} does not match space size {self.space.n}")


@dataclass(frozen=True, eq=False)
class Measure:
    """A probability vector over a finite space."""

    space: FiniteSpace
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _freeze(self.w))
        if self.w.shape != (self.space.n,):
            raise ValueError(f"weight vector length {self.w.shape} does not match space size {self.space.n}")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A joint probability matrix; row sums and column sums are its marginals."""

    row_space: FiniteSpace
    col_space: FiniteSpace
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _freeze(self.p))
        if self.p.shape != (self.row_space.n, self.col_space.n):
            raise ValueError(f"plan shape {self.p.shape} does not match spaces "
                             f"({self.row_space.n}, {self.col_space.n})")

    def row_marginal(self) -> Measure:
        return Measure(self.row_space, self.p.sum(axis=1))

    def col_marginal(self) -> Measure:
        return Measure(self.col_space, self.p.sum(axis=0))


@dataclass(frozen=True, eq=False)
class GroupAction:
    """A finite group acting by permutations, given by labeled generators.

    Each generator is an index array g with g[i] = image of point i.
    """

    space: FiniteSpace
    generators: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        gens = tuple((str(lbl), _freeze(g, dtype=np.intp)) for lbl, g in self.generators)
        object.__setattr__(self, "generators", gens)
        for lbl, g in self.generators:
            if g.shape != (self.space.n,):
                raise ValueError(f"generator {lbl!r} has length {g.shape}, space has {self.space.n} points")


@dataclass(frozen=True, eq=False)
class StochKernel:
    """A row-stochastic matrix; row x is the measure the kernel attaches to x."""

    space: FiniteSpace
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _freeze(self.q))
        if self.q.shape != (self.space.n, self.space.n):
            raise ValueError(f"kernel shape {self.q.shape} does not match space size {self.space.n}")


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """A finite cost table c[i][j] for moving unit mass from row i to column j."""

    row_space: FiniteSpace
    col_space: FiniteSpace
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", _freeze(self.c))
        if self.c.shape != (self.row_space.n, self.col_space.n):
            raise ValueError(f"cost shape {self.c.shape} does not match spaces "
                             f"({self.row_space.n}, {self.col_space.n})")


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Labeled test matrices; a plan p is admissible when <omega, p> = 0 for all.

    <omega, p> is the entrywise inner product. The set may be empty, which
    means the problem is unconstrained. Labels record where each matrix came
    from, e.g. "invariance:g:(0,4)".
    """

    row_space: FiniteSpace
    col_space: FiniteSpace
    omegas: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        oms = tuple((str(lbl), _freeze(m)) for lbl, m in self.omegas)
        object.__setattr__(self, "omegas", oms)
        for lbl, m in self.omegas:
            if m.shape != (self.row_space.n, self.col_space.n):
                raise ValueError(f"constraint {lbl!r} has shape {m.shape}, expected "
                                 f"({self.row_space.n}, {self.col_space.n})")

    def __len__(self):
        return len(self.omegas)


@dataclass(frozen=True, eq=False)
class SimplexSpec:
    """Which simplex of measures a decomposition refers to.

    kind is one of "full" (all probability measures), "group" (measures
    invariant under a group action) or "kernel" (measures stationary for a
    decomposing Markov kernel). For "kernel" the kernel must pass the
    idempotence check in ergodic.check_ergodic_kernel before it is used to
    decompose anything; the decompose operations enforce this.
    """

    kind: str
    space: FiniteSpace
    action: GroupAction | None = None
    kernel: StochKernel | None = None

    def __post_init__(self):
        if self.kind not in ("full", "group", "kernel"):
            raise ValueError(f"unknown simplex kind {self.kind!r}")
        if self.kind == "group" and (self.action is None or self.action.space.labels != self.space.labels):
            raise ValueError("group simplex needs an action on the same space")
        if self.kind == "kernel" and (self.kernel is None or self.kernel.space.labels != self.space.labels):
            raise ValueError("kernel simplex needs a kernel on the same space")


def full_simplex(space: FiniteSpace) -> SimplexSpec:
    return SimplexSpec("full", space)


def invariant_simplex(action: GroupAction) -> SimplexSpec:
    return SimplexSpec("group", action.space, action=action)


def stationary_simplex(kernel: StochKernel) -> SimplexSpec:
    return SimplexSpec("kernel", kernel.space, kernel=kernel)


@dataclass(frozen=True, eq=False)
class ErgodicDecomposition:
    """A measure written as a weighted mixture of extreme measures.

    components are the extreme measures actually charged; weights is the
    mixing vector over them; class_of sends each point to the index of the
    component whose class contains it, or -1 when the point's class carries
    no weight (or the point is transient).
    """

    components: tuple[Measure, ...]
    weights: np.ndarray
    class_of: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _freeze(self.weights))
        object.__setattr__(self, "class_of", _freeze(self.class_of, dtype=np.intp))
        if self.weights.shape != (len(self.components),):
            raise ValueError("one weight per component required")


def validate(obj) -> list[str]:
    """Check the numeric invariants of any core object.

    Returns a list of human-readable violation descriptions, empty when the
    object is valid. Violations are data, not errors; nothing raises here.
    """
    out: list[str] = []
    if isinstance(obj, FiniteSpace):
        if obj.n < 1:
            out.append("space has no points")
        if len(set(obj.labels)) != obj.n:
            out.append("labels are not unique")
    elif isinstance(obj, GroundMetric):
        d = obj.d
        if not np.all(np.isfinite(d)):
            out.append("non-finite distance entries")
            return out
        bad = np.flatnonzero(np.abs(np.diag(d)) > TAU_METRIC)
        for i in bad:
            out.append(f"nonzero diagonal d[{i}][{i}] = {d[i, i]:g}")
        if np.max(np.abs(d - d.T)) > TAU_METRIC:
            i, j = np.unravel_index(np.argmax(np.abs(d - d.T)), d.shape)
            out.append(f"asymmetric at ({i},{j}): {d[i, j]:g} vs {d[j, i]:g}")
        off = d + np.diag([np.inf] * obj.space.n)
        if np.min(off) <= 0:
            i, j = np.unravel_index(np.argmin(off), d.shape)
            out.append(f"non-positive off-diagonal distance d[{i}][{j}] = {d[i, j]:g}")
        # triangle inequality, all index triples at once
        viol = d[:, None, :] - (d[:, :, None] + d[None, :, :])
        if np.max(viol) > TAU_METRIC:
            i, j, k = np.unravel_index(np.argmax(viol), viol.shape)
            out.append(f"triangle violated at ({i},{j},{k}) by {viol[i, j, k]:g}")
    elif isinstance(obj, Measure):
        if np.min(obj.w) < 0:
            i = int(np.argmin(obj.w))
            out.append(f"negative mass w[{i}] = {obj.w[i]:g}")
        s = float(obj.w.sum())
        if abs(s - 1.0) > TAU_MASS:
            out.append(f"mass sum {s:g} ≠ 1")
    elif isinstance(obj, TransportPlan):
        if np.min(obj.p) < 0:
            i, j = np.unravel_index(np.argmin(obj.p), obj.p.shape)
            out.append(f"negative mass p[{i}][{j}] = {obj.p[i, j]:g}")
        s = float(obj.p.sum())
        if abs(s - 1.0) > TAU_MASS:
            out.append(f"mass sum {s:g} ≠ 1")
    elif isinstance(obj, GroupAction):
        for lbl, g in obj.generators:
            if sorted(g.tolist()) != list(range(obj.space.n)):
                out.append(f"generator {lbl!r} is not a permutation of 0..{obj.space.n - 1}")
    elif isinstance(obj, StochKernel):
        if np.min(obj.q) < 0:
            x, y = np.unravel_index(np.argmin(obj.q), obj.q.shape)
            out.append(f"negative entry q[{x}][{y}] = {obj.q[x, y]:g}")
        rs = obj.q.sum(axis=1)
        bad = np.flatnonzero(np.abs(rs - 1.0) > TAU_MASS)
        for x in bad:
            out.append(f"row {x} sums to {rs[x]:g} ≠ 1")
    elif isinstance(obj, CostMatrix):
        if not np.all(np.isfinite(obj.c)):
            i, j = np.unravel_index(int(np.argmax(~np.isfinite(obj.c))), obj.c.shape)
            out.append(f"non-finite cost at ({i},{j})")
    elif isinstance(obj, ConstraintSet):
        for lbl, m in obj.omegas:
            if not np.all(np.isfinite(m)):
                out.append(f"constraint {lbl!r} has non-finite entries")
    elif isinstance(obj, SimplexSpec):
        if obj.kind == "group":
            out.extend(validate(obj.action))
        elif obj.kind == "kernel":
            out.extend(validate(obj.kernel))
    elif isinstance(obj, ErgodicDecomposition):
        for k, comp in enumerate(obj.components):
            for v in validate(comp):
                out.append(f"component {k}: {v}")
        s = float(obj.weights.sum())
        if abs(s - 1.0) > TAU_MASS:
            out.append(f"weight sum {s:g} ≠ 1")
        if np.min(obj.weights, initial=0.0) < 0:
            out.append("negative weight")
    else:
        raise TypeError(f"validate does not know type {type(obj).__name__}")
    return out


def pushforward(g, mu: Measure) -> Measure:
    """Push a measure forward along a permutation: result[g[i]] = mu[i]."""
    g = np.asarray(g, dtype=np.intp)
    if g.shape != (mu.space.n,):
        raise ValueError(f"permutation length {g.shape} does not match space size {mu.space.n}")
    w = np.empty_like(mu.w)
    w[g] = mu.w
    return Measure(mu.space, w)


def transpose_plan(pi: TransportPlan) -> TransportPlan:
    """Swap the roles of the two marginals."""
    return TransportPlan(pi.col_space, pi.row_space, pi.p.T)


def inverse_perm(g) -> np.ndarray:
    """Inverse of a permutation given in image form."""
    g = np.asarray(g, dtype=np.intp)
    inv = np.empty_like(g)
    inv[g] = np.arange(g.size, dtype=np.intp)
    return inv
