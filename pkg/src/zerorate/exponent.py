"""The quadratic exponent functional over pair distributions and its
constrained maximization, with and without time-sharing.

E0(q) = q^T D q over distributions q on feasible pairs with equal
marginals, connected support within one strongly connected feasibility
component, and marginal cost within budget. When E0 is concave on the
simplex (checked through the reduced matrix), a single projected-gradient
solve is exact; otherwise the upper concave envelope is approached by
time-sharing mixtures whose only coupling is the shared cost budget.

The connectivity requirement is handled by closure: the maximum over the
polytope of one strongly connected component equals the supremum over
connected-support distributions (mass epsilon on connecting arcs changes
E0 continuously), so the reported value is the supremum and the argmax is
flagged when its own support is not connected.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .bhatt import DistanceMatrix
from .errors import InfeasibleError, UnsupportedChannelError, ValidationError
from .fsm import FeasiblePairSet
from .polytope import PGOptions, Polytope, maximize_quadratic

MARGINAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PairDistribution:
    """Probability vector over feasible pairs with equal in/out marginals."""

    pairs: FeasiblePairSet
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (len(self.pairs),):
            raise ValidationError(f"q must have length {len(self.pairs)}")
        if (q < -MARGINAL_TOL).any():
            raise ValidationError("q entries must be nonnegative")
        q = np.maximum(q, 0.0)
        if abs(q.sum() - 1.0) > MARGINAL_TOL:
            raise ValidationError(f"q sums to {q.sum()!r}, not 1")
        q = q / q.sum()
        out_m = np.bincount(self.pairs.tails, weights=q, minlength=self.pairs.n_states)
        in_m = np.bincount(self.pairs.heads, weights=q, minlength=self.pairs.n_states)
        if np.max(np.abs(out_m - in_m)) > MARGINAL_TOL:
            raise ValidationError("q does not have equal marginals")
        object.__setattr__(self, "q", q)
        q.setflags(write=False)

    @property
    def pi(self) -> np.ndarray:
        """The common state marginal."""
        return np.bincount(self.pairs.tails, weights=self.q,
                           minlength=self.pairs.n_states)

    def support(self, tol: float = 1e-12) -> np.ndarray:
        return np.nonzero(self.q > tol)[0]


@dataclass(frozen=True)
class CostModel:
    """Per-symbol cost phi and budget; the cost of arc (s, s+) is
    phi(g(s+)), charged to the emitted input symbol."""

    phi: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))
        self.phi.setflags(write=False)

    def pair_costs(self, pairs: FeasiblePairSet) -> np.ndarray:
        return self.phi[pairs.symbols]

    @classmethod
    def free(cls, n_symbols: int) -> "CostModel":
        return cls(np.zeros(n_symbols), 0.0)


@dataclass(frozen=True, eq=False)
class TimeSharingPlan:
    """Convex combination of pair distributions realized by segmenting the
    block; every segment is anchored at the shared state sigma."""

    weights: np.ndarray
    components: tuple
    anchor: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or len(w) == 0:
            raise ValidationError("weights and components must align")
        if (w < -1e-12).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError("weights must be a probability vector")
        object.__setattr__(self, "weights", np.maximum(w, 0.0) / max(w.sum(), 1e-300))
        self.weights.setflags(write=False)

    def mixture(self) -> PairDistribution:
        q = sum(w * comp.q for w, comp in zip(self.weights, self.components))
        return PairDistribution(self.components[0].pairs, q)

    def value(self, d: DistanceMatrix) -> float:
        return float(sum(w * e0(comp, d)
                         for w, comp in zip(self.weights, self.components)))

    def cost(self, cost: CostModel) -> float:
        c = cost.pair_costs(self.components[0].pairs)
        return float(sum(w * (c @ comp.q)
                         for w, comp in zip(self.weights, self.components)))


@dataclass(frozen=True, eq=False)
class ExponentResult:
    value: float
    argmax: object  # PairDistribution or TimeSharingPlan
    concave: bool
    scc_id: int
    support_connected: bool


class ConcavityReport(NamedTuple):
    concave: bool
    reduced: np.ndarray
    min_eigenvalue: float


@dataclass(frozen=True, eq=False)
class FeasibilityComponent:
    states: frozenset
    arcs: np.ndarray  # indices into the pair set; arcs crossing SCCs excluded


@dataclass
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 100_000
    starts: int = 32
    seed: int = 0
    sweep_points: int = 17
    relax_components: bool = False
    proj_tol: float = 1e-12

    def pg(self, tol=None) -> PGOptions:
        return PGOptions(tol=self.tol if tol is None else tol,
                         max_iter=self.max_iter, proj_tol=self.proj_tol)


def e0(q, d: DistanceMatrix) -> float:
    """The quadratic functional q^T D q; zero for point masses."""
    vec = q.q if hasattr(q, "q") else np.asarray(q, dtype=float)
    if len(vec) != len(d):
        raise ValidationError("dimension mismatch between q and D")
    sup = np.nonzero(vec > 0)[0]
    if np.isinf(d.d[np.ix_(sup, sup)]).any():
        raise UnsupportedChannelError(
            "infinite Bhattacharyya distance on the support of q "
            "(disjoint output supports); zero-rate theory does not apply")
    return float(vec @ d.d @ vec)


def concavity_test(d: DistanceMatrix, tol: float = 1e-9) -> ConcavityReport:
    """Concavity of q^T D q on the simplex via the reduced matrix with the
    last pair as reference: concave iff -Dt, with entries
    d(x,L) + d(L,x') - d(x,x'), is positive semi-definite."""
    mat = d.d
    L = len(mat)
    if L < 2:
        return ConcavityReport(True, np.zeros((0, 0)), 0.0)
    if np.isinf(mat).any():
        raise ValidationError("concavity test requires finite distances")
    ref = L - 1
    idx = np.arange(L - 1)
    reduced = mat[np.ix_(idx, idx)] - mat[idx, ref][:, None] - mat[ref, idx][None, :]
    neg = -reduced
    neg = 0.5 * (neg + neg.T)
    min_eig = float(np.linalg.eigvalsh(neg)[0])
    return ConcavityReport(min_eig >= -tol, reduced, min_eig)


def feasibility_sccs(pairs: FeasiblePairSet) -> list[FeasibilityComponent]:
    """Strongly connected components of the digraph (states, feasible
    pairs), each with the arcs internal to it; cross-component arcs belong
    to no component. Components are ordered by their smallest state."""
    S = pairs.n_states
    adj = csr_matrix((np.ones(len(pairs), dtype=np.int8),
                      (pairs.tails, pairs.heads)), shape=(S, S))
    _, labels = connected_components(adj, directed=True, connection="strong")
    comps = {}
    for s, lab in enumerate(labels):
        comps.setdefault(lab, set()).add(s)
    ordered = sorted(comps.values(), key=min)
    out = []
    for states in ordered:
        mask = np.isin(pairs.tails, list(states)) & np.isin(pairs.heads, list(states))
        out.append(FeasibilityComponent(frozenset(states), np.nonzero(mask)[0]))
    return out


def support_is_connected(q, pairs: FeasiblePairSet, tol: float = 1e-12) -> bool:
    """Whether the support arcs form one strongly connected digraph over
    the states they touch (the class-membership requirement on supports)."""
    vec = q.q if isinstance(q, PairDistribution) else np.asarray(q, dtype=float)
    sup = np.nonzero(vec > tol)[0]
    if not sup.size:
        return False
    touched = sorted(set(pairs.tails[sup].tolist()) | set(pairs.heads[sup].tolist()))
    remap = {s: i for i, s in enumerate(touched)}
    rows = [remap[int(t)] for t in pairs.tails[sup]]
    cols = [remap[int(h)] for h in pairs.heads[sup]]
    adj = csr_matrix((np.ones(len(sup), dtype=np.int8), (rows, cols)),
                     shape=(len(touched), len(touched)))
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


def _balance_rows(pairs: FeasiblePairSet, arcs: np.ndarray) -> tuple[np.ndarray, list]:
    """Out-minus-in rows, one per state touched by the arcs."""
    touched = sorted(set(pairs.tails[arcs].tolist()) | set(pairs.heads[arcs].tolist()))
    rows = np.zeros((len(touched), len(arcs)))
    for i, s in enumerate(touched):
        rows[i, pairs.tails[arcs] == s] += 1.0
        rows[i, pairs.heads[arcs] == s] -= 1.0
    return rows, touched


def component_polytope(pairs: FeasiblePairSet, arcs: np.ndarray,
                       cost: CostModel | None = None,
                       budget: float | None = None) -> Polytope:
    """{q >= 0 on the given arcs, sum q = 1, equal marginals, cost <= budget}."""
    n = len(arcs)
    bal, _ = _balance_rows(pairs, arcs)
    a_eq = np.vstack([np.ones((1, n)), bal])
    b_eq = np.zeros(len(a_eq))
    b_eq[0] = 1.0
    if cost is None:
        return Polytope(a_eq, b_eq)
    g = cost.gamma if budget is None else budget
    return Polytope(a_eq, b_eq, cost.pair_costs(pairs)[arcs].copy(), g)


def _embed(pairs: FeasiblePairSet, arcs: np.ndarray, sub_q: np.ndarray) -> PairDistribution:
    q = np.zeros(len(pairs))
    q[arcs] = np.maximum(sub_q, 0.0)
    q /= q.sum()
    return PairDistribution(pairs, q)


def _multistart_max(sub_d: np.ndarray, poly: Polytope, rng, n_starts: int,
                    opts: SolverOptions, extra_starts=(), tol=None) -> tuple[np.ndarray, float]:
    """Best stationary point of q^T D q over the polytope from several
    starts; deterministic given the generator state."""
    n = poly.dim
    starts = [np.full(n, 1.0 / n)]
    starts.extend(np.asarray(s, dtype=float) for s in extra_starts)
    starts.append(poly.feasible_point())
    for _ in range(max(n_starts - len(starts), 0)):
        starts.append(rng.dirichlet(np.ones(n)))
    best_q, best_v = None, -np.inf
    for s in starts:
        q, v = maximize_quadratic(sub_d, poly, s, opts.pg(tol))
        if v > best_v + 1e-15:
            best_q, best_v = q, v
    return best_q, best_v


def maximize_e0_single(d: DistanceMatrix, pairs: FeasiblePairSet, cost: CostModel,
                       opts: SolverOptions | None = None) -> ExponentResult:
    """Best single pair distribution (no time-sharing), per component.

    Exact for concave components; best-found via multi-start otherwise.
    """
    opts = opts or SolverOptions()
    comps = feasibility_sccs(pairs)
    best = None
    saw_finite = False
    for cid, comp in enumerate(comps):
        if not len(comp.arcs):
            continue
        sub_d = d.d[np.ix_(comp.arcs, comp.arcs)]
        if np.isinf(sub_d).any():
            continue
        saw_finite = True
        poly = component_polytope(pairs, comp.arcs, cost)
        try:
            poly.feasible_point()
        except InfeasibleError:
            continue
        rng = np.random.default_rng(np.random.SeedSequence((opts.seed, cid)))
        report = concavity_test(DistanceMatrix(sub_d)) if len(comp.arcs) > 1 else \
            ConcavityReport(True, np.zeros((0, 0)), 0.0)
        n_starts = 2 if report.concave else opts.starts
        q_sub, val = _multistart_max(sub_d, poly, rng, n_starts, opts)
        if best is None or val > best.value + 1e-15:
            arg = _embed(pairs, comp.arcs, q_sub)
            best = ExponentResult(val, arg, report.concave, cid,
                                  support_is_connected(arg, pairs))
    if best is None:
        if saw_finite:
            raise InfeasibleError("no feasibility component meets the cost budget")
        raise UnsupportedChannelError(
            "every feasibility component has an infinite distance entry")
    return best


def maximize_e0(d: DistanceMatrix, pairs: FeasiblePairSet, cost: CostModel,
                opts: SolverOptions | None = None) -> ExponentResult:
    """The zero-rate exponent: per component, the single-distribution
    maximum when E0 is concave there, otherwise the time-sharing value."""
    opts = opts or SolverOptions()
    comps = feasibility_sccs(pairs)
    best = None
    saw_finite = False
    for cid, comp in enumerate(comps):
        if not len(comp.arcs):
            continue
        sub_d = d.d[np.ix_(comp.arcs, comp.arcs)]
        if np.isinf(sub_d).any():
            continue
        saw_finite = True
        poly = component_polytope(pairs, comp.arcs, cost)
        try:
            poly.feasible_point()
        except InfeasibleError:
            continue
        report = concavity_test(DistanceMatrix(sub_d)) if len(comp.arcs) > 1 else \
            ConcavityReport(True, np.zeros((0, 0)), 0.0)
        if report.concave:
            rng = np.random.default_rng(np.random.SeedSequence((opts.seed, cid)))
            q_sub, val = _multistart_max(sub_d, poly, rng, 2, opts)
            arg = _embed(pairs, comp.arcs, q_sub)
            connected = support_is_connected(arg, pairs)
        else:
            anchor = min(comp.states)
            val, plan = maximize_uce(d, pairs, cost, anchor, opts)
            arg = plan
            connected = all(support_is_connected(c, pairs) for c in plan.components)
        if best is None or val > best.value + 1e-15:
            best = ExponentResult(val, arg, report.concave, cid, connected)
    if best is None:
        if saw_finite:
            raise InfeasibleError("no feasibility component meets the cost budget")
        raise UnsupportedChannelError(
            "every feasibility component has an infinite distance entry")
    return best


def _weight_lp(values: np.ndarray, costs: np.ndarray, gamma: float):
    """max w.values s.t. sum w = 1, w.costs <= gamma, w >= 0."""
    res = linprog(-values, A_ub=costs[None, :], b_ub=[gamma],
                  A_eq=np.ones((1, len(values))), b_eq=[1.0],
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise InfeasibleError("cost budget below every candidate component")
    return res.x, float(-res.fun)


def maximize_uce(d: DistanceMatrix, pairs: FeasiblePairSet, cost: CostModel,
                 anchor: int, opts: SolverOptions | None = None) -> tuple[float, TimeSharingPlan]:
    """Time-sharing value over the component containing the anchor state.

    Components each satisfy the class constraints (feasibility, equal
    marginals, support closure within the component); the mixture must meet
    the cost budget -- the only coupling, so time-sharing can only help when
    the budget binds. Solved by a budget sweep (the value-versus-cost curve's
    upper hull locates the split) followed by alternating maximization:
    a weight LP over the candidate pool, then per-component multi-start
    projected gradient at its allotted budget. For indefinite D the result
    is a certified lower bound (best found), exact in the concave case.

    With opts.relax_components the per-component marginal constraints are
    dropped and only the mixture is constrained (for comparison).
    """
    opts = opts or SolverOptions()
    comp = next((c for c in feasibility_sccs(pairs) if anchor in c.states and len(c.arcs)), None)
    if comp is None:
        raise InfeasibleError(f"anchor state {anchor} lies in no component with arcs")
    arcs = comp.arcs
    sub_d = d.d[np.ix_(arcs, arcs)]
    if np.isinf(sub_d).any():
        raise UnsupportedChannelError("infinite distances inside the anchor component")
    costs = cost.pair_costs(pairs)[arcs]
    rng = np.random.default_rng(np.random.SeedSequence((opts.seed, 0x7CE)))

    base = component_polytope(pairs, arcs, None)
    c_lo, c_hi = base.linear_range(costs)
    if c_lo > cost.gamma + 1e-9:
        raise InfeasibleError(
            f"cost budget {cost.gamma:g} below the cheapest component cost {c_lo:g} "
            "(mixtures cannot beat the cheapest component; the constraint is linear)")

    def solve_at(budget, extra=(), n_starts=4, tol=1e-8):
        poly = component_polytope(pairs, arcs, cost, budget)
        return _multistart_max(sub_d, poly, rng, n_starts, opts, extra_starts=extra, tol=tol)

    binding = cost.gamma < c_hi - 1e-12
    if not binding:
        q, v = solve_at(c_hi, n_starts=opts.starts, tol=opts.tol)
        best_val = v
        plan = TimeSharingPlan(np.array([1.0]), (_embed(pairs, arcs, q),), anchor)
    else:
        pool: list[tuple[np.ndarray, float, float]] = []  # (q, value, cost)

        def add(q, v):
            pool.append((q, v, float(costs @ q)))

        budgets = np.unique(np.concatenate([
            np.linspace(c_lo, c_hi, max(opts.sweep_points, 3)), [cost.gamma]]))
        prev = None
        for b in budgets:
            extra = (prev,) if prev is not None else ()
            q, v = solve_at(b, extra=extra, n_starts=max(2, opts.starts // 8))
            add(q, v)
            prev = q
        qg, vg = solve_at(cost.gamma, extra=(prev,), n_starts=opts.starts, tol=opts.tol)
        add(qg, vg)

        best_val = -np.inf
        best_w = best_idx = None
        for _ in range(60):
            vals = np.array([p[1] for p in pool])
            cs = np.array([p[2] for p in pool])
            w, val = _weight_lp(vals, cs, cost.gamma)
            active = np.nonzero(w > 1e-12)[0]
            stalled = val <= best_val + opts.tol
            if val > best_val:
                best_val, best_w, best_idx = val, w, active
            if stalled:
                break
            grew = False
            for u in active:
                others = [i for i in active if i != u]
                spent = sum(w[i] * pool[i][2] for i in others)
                slack = (cost.gamma - spent) / w[u] if w[u] > 1e-12 else c_hi
                slack = float(np.clip(slack, c_lo, c_hi))
                q, v = solve_at(slack, extra=(pool[u][0],), n_starts=max(2, opts.starts // 8))
                if v > pool[u][1] + 1e-12:
                    add(q, v)
                    grew = True
            if not grew:
                break
        comps = tuple(_embed(pairs, arcs, pool[i][0]) for i in best_idx)
        weights = np.array([best_w[i] for i in best_idx])
        plan = TimeSharingPlan(weights / weights.sum(), comps, anchor)

    if not opts.relax_components:
        return best_val, plan
    rel_val, rel_plan = _relax_components(sub_d, pairs, arcs, costs, cost.gamma,
                                          anchor, plan, rng, opts)
    if rel_val > best_val + opts.tol:
        return rel_val, rel_plan
    return best_val, plan


class RelaxedComponent:
    """Simplex component of a relaxed plan; need not be marginal-balanced."""

    def __init__(self, pairs, q):
        self.pairs = pairs
        self.q = np.asarray(q, dtype=float)


def _relax_components(sub_d, pairs, arcs, costs, gamma, anchor, strict_plan,
                      rng, opts: SolverOptions) -> tuple[float, TimeSharingPlan]:
    """Mixture-only constraints: each component roams the full simplex over
    the component's arcs; only the mixture must be balanced and on budget.
    Alternating improvement seeded from the strict plan; best found."""
    n = len(arcs)
    bal, _ = _balance_rows(pairs, arcs)
    comps = [c.q[arcs] for c in strict_plan.components]
    weights = list(strict_plan.weights)
    # extra slots let point-mass-like components emerge
    while len(comps) < min(n, 4):
        comps.append(np.full(n, 1.0 / n))
        weights.append(1e-3)
    weights = np.asarray(weights)
    weights = weights / weights.sum()

    def value(vs):
        return float(sum(w * (v @ sub_d @ v) for w, v in zip(weights, vs)))

    best = value(comps)
    for _ in range(100):
        improved = False
        for u in range(len(comps)):
            if weights[u] <= 1e-12:
                continue
            rest = sum(weights[i] * comps[i] for i in range(len(comps)) if i != u)
            target = -(bal @ rest) / weights[u]
            a_eq = np.vstack([np.ones((1, n)), bal])
            b_eq = np.concatenate([[1.0], target])
            cvec = costs.copy() if costs.any() else None
            budget = (gamma - float(costs @ rest)) / weights[u] if costs.any() else 0.0
            try:
                poly = Polytope(a_eq, b_eq, cvec, budget)
                q, _ = _multistart_max(sub_d, poly, rng, 3, opts,
                                       extra_starts=(comps[u],), tol=1e-8)
            except InfeasibleError:
                continue
            trial = list(comps)
            trial[u] = q
            tv = value(trial)
            if tv > best + opts.tol:
                comps, best, improved = trial, tv, True
        if not improved:
            break
    keep = weights > 1e-12
    plan = TimeSharingPlan(weights[keep],
                           tuple(RelaxedComponent(pairs, _embed_vec(pairs, arcs, comps[i]))
                                 for i in np.nonzero(keep)[0]), anchor)
    return best, plan


def _embed_vec(pairs, arcs, sub_q):
    q = np.zeros(len(pairs))
    q[arcs] = np.maximum(sub_q, 0.0)
    return q / q.sum()
