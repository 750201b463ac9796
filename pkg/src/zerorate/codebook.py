"""Zero-rate codebooks: integer Markov types, randomized Eulerian
circuits, time-sharing concatenation and expurgation.

A block of length n is a closed walk on the feasibility digraph whose
cyclic transition counts realize an integer-rounded pair distribution;
the walk determines the codeword through the recover map. 2M-1 walks are
drawn independently and the M best under the soft pairwise-distance score
are kept, which preserves the ensemble-average guarantee.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .bhatt import DistanceMatrix
from .errors import ValidationError
from .exponent import (CostModel, PairDistribution, TimeSharingPlan,
                       feasibility_sccs, support_is_connected)
from .fsm import FeasiblePairSet, StateMachine

RHO_SWEEP = tuple(float(2 ** k) for k in range(0, 11))  # 1, 2, 4, ..., 1024


@dataclass(frozen=True, eq=False)
class MarkovTypeSpec:
    """Integer arc counts with total n, balanced at every state, whose
    positive support is one strongly connected digraph."""

    pairs: FeasiblePairSet
    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.pairs),):
            raise ValidationError("counts must cover every feasible pair")
        if (counts < 0).any():
            raise ValidationError("counts must be nonnegative")
        if counts.sum() != self.n:
            raise ValidationError(f"counts total {counts.sum()}, expected {self.n}")
        out_d = np.bincount(self.pairs.tails, weights=counts, minlength=self.pairs.n_states)
        in_d = np.bincount(self.pairs.heads, weights=counts, minlength=self.pairs.n_states)
        if (out_d != in_d).any():
            raise ValidationError("counts are not balanced (in-degree != out-degree)")
        if not _support_connected(self.pairs, counts):
            raise ValidationError("positive-count support is not strongly connected")
        object.__setattr__(self, "counts", counts)
        counts.setflags(write=False)

    def support_states(self) -> np.ndarray:
        pos = self.counts > 0
        return np.unique(np.concatenate([self.pairs.tails[pos], self.pairs.heads[pos]]))

    def cost(self, cost: CostModel) -> float:
        return float(cost.pair_costs(self.pairs) @ self.counts)


def _support_connected(pairs: FeasiblePairSet, counts) -> bool:
    pos = np.nonzero(counts > 0)[0]
    if not pos.size:
        return False
    q = np.zeros(len(pairs))
    q[pos] = 1.0
    q /= q.sum()
    return support_is_connected(q, pairs)


def _cycle_cancel(pairs: FeasiblePairSet, arcs: np.ndarray, frac: np.ndarray) -> np.ndarray:
    """Round a fractional circulation on the given arcs to {0,1} while
    preserving every node imbalance: push along undirected cycles of
    fractional arcs until none remain. Existence of the cycles follows
    from the integrality of node imbalances."""
    r = frac.copy()
    tol = 1e-9
    for _ in range(len(arcs) + 1):
        frac_idx = np.nonzero((r > tol) & (r < 1 - tol))[0]
        if not frac_idx.size:
            break
        # walk the undirected fractional multigraph until a node repeats
        incident: dict[int, list[tuple[int, int]]] = {}
        for i in frac_idx:
            u, v = int(pairs.tails[arcs[i]]), int(pairs.heads[arcs[i]])
            incident.setdefault(u, []).append((int(i), +1))
            incident.setdefault(v, []).append((int(i), -1))
        start = int(pairs.tails[arcs[frac_idx[0]]])
        node = start
        seen_at = {node: 0}
        walk: list[tuple[int, int]] = []  # (arc local index, orientation)
        used: set[int] = set()
        while True:
            options = [(i, o) for i, o in incident[node] if i not in used]
            if not options:
                raise ValidationError("fractional subgraph is not cycle-covered; "
                                      "q is not balanced to rounding precision")
            i, o = options[0]
            used.add(i)
            # orientation +1 means we leave the tail (traverse forward)
            u, v = int(pairs.tails[arcs[i]]), int(pairs.heads[arcs[i]])
            node = v if o == +1 else u
            walk.append((i, o))
            if node in seen_at:
                cyc = walk[seen_at[node]:]
                break
            seen_at[node] = len(walk)
        up = min((1 - r[i]) if o == +1 else r[i] for i, o in cyc)
        down = min(r[i] if o == +1 else (1 - r[i]) for i, o in cyc)
        theta = up if up <= down else -down
        for i, o in cyc:
            r[i] += theta if o == +1 else -theta
        r = np.clip(r, 0.0, 1.0)
        r[r < tol] = 0.0
        r[r > 1 - tol] = 1.0
    return np.round(r).astype(np.int64)


def _shortest_cycle_through(pairs: FeasiblePairSet, allowed: np.ndarray, arc: int):
    """Arc indices of a shortest directed cycle containing `arc`, using
    only `allowed` arcs; None if head cannot reach tail."""
    u, v = int(pairs.tails[arc]), int(pairs.heads[arc])
    if u == v:
        return [arc]
    S = pairs.n_states
    prev_arc = np.full(S, -1, dtype=np.int64)
    dist = np.full(S, -1, dtype=np.int64)
    dist[v] = 0
    frontier = [v]
    by_tail: dict[int, list[int]] = {}
    for a in allowed:
        by_tail.setdefault(int(pairs.tails[a]), []).append(int(a))
    while frontier and dist[u] < 0:
        nxt = []
        for s in frontier:
            for a in by_tail.get(s, ()):  # canonical arc order keeps this deterministic
                h = int(pairs.heads[a])
                if dist[h] < 0:
                    dist[h] = dist[s] + 1
                    prev_arc[h] = a
                    nxt.append(h)
        frontier = nxt
    if dist[u] < 0:
        return None
    path = []
    node = u
    while node != v:
        a = int(prev_arc[node])
        path.append(a)
        node = int(pairs.tails[a])
    path.reverse()
    return [arc] + path


def round_type(q: PairDistribution, n: int) -> MarkovTypeSpec:
    """Integer Markov type approximating n*q: floor, then cycle repairs.

    The fractional circulation is rounded by cycle canceling (per-arc error
    below one), the total is then adjusted to exactly n by adding or
    removing unit flow along short directed cycles inside the support,
    preferring the arc with the largest residual; finally connectivity of
    the positive support is restored the same way. Per-arc deviation stays
    within the number of feasible pairs. Rejected when n is below the
    support size or when the support's cycle lengths cannot reach total n.
    """
    pairs = q.pairs
    sup = q.support()
    if not support_is_connected(q, pairs):
        raise ValidationError("q's support must be strongly connected")
    if n < sup.size:
        raise ValidationError(
            f"n={n} is below the support size; need n >= {sup.size} "
            "to place one arc per support element while staying balanced")
    target = n * q.q[sup]
    base = np.floor(target + 1e-9).astype(np.int64)
    frac = np.clip(target - base, 0.0, 1.0)
    add = _cycle_cancel(pairs, sup, frac)
    counts_sup = base + add

    counts = np.zeros(len(pairs), dtype=np.int64)
    counts[sup] = counts_sup
    _repair_total(pairs, counts, sup, n, n * q.q)
    _repair_connectivity(pairs, counts, sup, n, n * q.q)

    dev = np.abs(counts - n * q.q)
    if dev.max() > len(pairs) + 1e-6:
        raise ValidationError("rounded counts drifted beyond the deviation bound")
    return MarkovTypeSpec(pairs, counts, n)


def _repair_total(pairs, counts, sup, n, target):
    guard = 4 * (abs(int(counts.sum()) - n) + len(sup) + 1)
    for _ in range(guard):
        total = int(counts.sum())
        if total == n:
            return
        if total < n:
            deficit = n - total
            resid = target - counts
            order = sorted(sup.tolist(), key=lambda a: (-resid[a], a))
            chosen = None
            for a in order:
                cyc = _shortest_cycle_through(pairs, sup, a)
                if cyc is not None and len(cyc) <= deficit:
                    chosen = cyc
                    break
            if chosen is None:
                raise ValidationError(
                    f"cannot reach total {n}: every support cycle through the "
                    f"deficient arcs is longer than the remaining deficit {deficit}; "
                    f"adjust n (e.g. to {total})")
            for a in chosen:
                counts[a] += 1
        else:
            excess = total - n
            removable = np.array([a for a in sup if counts[a] >= 1], dtype=np.int64)
            resid = counts - target
            order = sorted(removable.tolist(), key=lambda a: (-resid[a], a))
            chosen = None
            for a in order:
                pos = np.array([b for b in sup if counts[b] >= 1], dtype=np.int64)
                cyc = _shortest_cycle_through(pairs, pos, a)
                if cyc is not None and len(cyc) <= excess:
                    chosen = cyc
                    break
            if chosen is None:
                raise ValidationError(
                    f"cannot reduce total to {n}; adjust n (e.g. to {total})")
            for a in chosen:
                counts[a] -= 1
    raise ValidationError("total repair did not converge")


def _repair_connectivity(pairs, counts, sup, n, target):
    for _ in range(len(sup) + 1):
        if _support_connected(pairs, counts):
            return
        pos = np.nonzero(counts > 0)[0]
        zero_sup = [a for a in sup if counts[a] == 0]
        labels = _scc_labels(pairs, pos)
        bridge = next((a for a in zero_sup
                       if labels.get(int(pairs.tails[a])) != labels.get(int(pairs.heads[a]))), None)
        if bridge is None:
            bridge = zero_sup[0] if zero_sup else None
        if bridge is None:
            raise ValidationError("support connectivity cannot be repaired")
        cyc = _shortest_cycle_through(pairs, sup, bridge)
        if cyc is None:
            raise ValidationError("support connectivity cannot be repaired")
        for a in cyc:
            counts[a] += 1
        # give the added length back from cycles that stay strictly positive
        excess = int(counts.sum()) - n
        for _ in range(excess):
            cand = np.array([a for a in sup if counts[a] >= 2], dtype=np.int64)
            resid = counts - target
            removed = False
            for a in sorted(cand.tolist(), key=lambda a: (-resid[a], a)):
                rich = np.array([b for b in sup if counts[b] >= 2], dtype=np.int64)
                cyc = _shortest_cycle_through(pairs, rich, a)
                if cyc is not None and len(cyc) <= int(counts.sum()) - n:
                    for b in cyc:
                        counts[b] -= 1
                    removed = True
                    break
            if not removed:
                raise ValidationError(
                    "connectivity repair cannot restore the total; increase n")
            if int(counts.sum()) == n:
                break
    if not _support_connected(pairs, counts):
        raise ValidationError("support connectivity cannot be repaired")


def _scc_labels(pairs, pos_arcs) -> dict[int, int]:
    touched = sorted(set(pairs.tails[pos_arcs].tolist()) | set(pairs.heads[pos_arcs].tolist()))
    remap = {s: i for i, s in enumerate(touched)}
    rows = [remap[int(t)] for t in pairs.tails[pos_arcs]]
    cols = [remap[int(h)] for h in pairs.heads[pos_arcs]]
    adj = csr_matrix((np.ones(len(pos_arcs), dtype=np.int8), (rows, cols)),
                     shape=(len(touched), len(touched)))
    _, lab = connected_components(adj, directed=True, connection="strong")
    return {s: int(lab[remap[s]]) for s in touched}


def euler_circuit(spec: MarkovTypeSpec, anchor: int, seed) -> np.ndarray:
    """A closed walk from the anchor using each arc exactly its count,
    with the next unused arc drawn uniformly (randomized Hierholzer).
    Returns the n states visited; the wrap arc (s_n, s_1) is implied."""
    pairs, counts, n = spec.pairs, spec.counts, spec.n
    rng = np.random.default_rng(np.random.SeedSequence(_as_entropy(seed)))
    out_heads: dict[int, list[int]] = {}
    for a in np.nonzero(counts > 0)[0]:
        t, h = int(pairs.tails[a]), int(pairs.heads[a])
        out_heads.setdefault(t, []).extend([h] * int(counts[a]))
    if anchor not in out_heads:
        raise ValidationError(f"anchor state {anchor} has no arcs in the type")
    for t in out_heads:
        rng.shuffle(out_heads[t])
    stack = [int(anchor)]
    circuit = []
    while stack:
        v = stack[-1]
        heads = out_heads.get(v)
        if heads:
            stack.append(heads.pop())
        else:
            circuit.append(stack.pop())
    circuit.reverse()
    if len(circuit) != n + 1 or circuit[0] != circuit[-1]:
        raise ValidationError("type is not Eulerian from the anchor "
                              "(unbalanced or disconnected counts)")
    return np.asarray(circuit[:-1], dtype=np.int64)


def _as_entropy(seed):
    return seed if isinstance(seed, (int, tuple)) else int(seed)


def emit_codeword(path: np.ndarray, machine: StateMachine) -> np.ndarray:
    """x_t = g(s_{t+1}) with the cyclic convention; verifies that running
    the next-state recursion reproduces the path, wrap arc included."""
    if machine.recover is None:
        raise ValidationError("emit_codeword needs a recover map")
    path = np.asarray(path, dtype=np.int64)
    nxt = np.roll(path, -1)
    x = machine.recover[nxt]
    if (machine.next_state[path, x] != nxt).any():
        raise ValidationError("state path is not consistent with the machine")
    return x


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """2M-1 anchored walks drawn from the type (or per-segment types)."""

    pairs: FeasiblePairSet
    paths: np.ndarray            # (n_candidates, n) states
    arc_paths: np.ndarray        # (n_candidates, n) arc indices
    certificate: tuple           # MarkovTypeSpec per segment
    segment_lengths: tuple
    anchor: int
    seed: int

    @property
    def n(self) -> int:
        return self.paths.shape[1]


def _segment_lengths(weights: np.ndarray, n: int) -> np.ndarray:
    raw = n * weights
    base = np.floor(raw).astype(np.int64)
    rem = int(n - base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rem]] += 1
    return base


def build_ensemble(source, M: int, n: int, seed: int, anchor: int | None = None) -> CandidateSet:
    """Draw 2M-1 independent candidates.

    A TimeSharingPlan is realized segment per segment: lengths are the
    largest-remainder rounding of n*w(u) and every segment is its own
    anchored circuit, so concatenation needs no seam repair.
    """
    if M < 1:
        raise ValidationError("M must be >= 1")
    if isinstance(source, TimeSharingPlan):
        keep = source.weights > 1e-12
        weights = source.weights[keep] / source.weights[keep].sum()
        comps = [c for c, k in zip(source.components, keep) if k]
        anchor = source.anchor if anchor is None else anchor
        lengths = _segment_lengths(weights, n)
        specs = []
        for comp, ell in zip(comps, lengths):
            sup = int((comp.q > 1e-12).sum())
            if ell < sup:
                raise ValidationError(
                    f"segment of length {ell} cannot realize a support of size {sup}")
            specs.append(round_type(comp, int(ell)))
        pairs = comps[0].pairs
    elif isinstance(source, MarkovTypeSpec):
        if source.n != n:
            raise ValidationError(f"type has n={source.n}, requested {n}")
        specs = [source]
        lengths = np.array([n], dtype=np.int64)
        pairs = source.pairs
        if anchor is None:
            raise ValidationError("anchor is required for a single type")
    else:
        raise ValidationError("source must be a MarkovTypeSpec or TimeSharingPlan")

    for spec in specs:
        if anchor not in set(spec.support_states().tolist()):
            raise ValidationError(f"anchor {anchor} is outside a segment's support")

    n_cand = 2 * M - 1
    paths = np.empty((n_cand, n), dtype=np.int64)
    for c in range(n_cand):
        pieces = [euler_circuit(spec, anchor, (int(seed), c, s))
                  for s, spec in enumerate(specs)]
        paths[c] = np.concatenate(pieces)
    lookup = pairs.index_lookup()
    arc_paths = lookup[paths, np.roll(paths, -1, axis=1)]
    if (arc_paths < 0).any():
        raise ValidationError("candidate walk uses an infeasible pair")
    return CandidateSet(pairs, paths, arc_paths, tuple(specs),
                        tuple(int(v) for v in lengths), int(anchor), int(seed))


@dataclass(frozen=True, eq=False)
class Codebook:
    """Expurgated code: M codewords with their state paths and the type
    certificate they were drawn from."""

    machine: StateMachine
    pairs: FeasiblePairSet
    codewords: np.ndarray        # (M, n) symbol indices
    state_paths: np.ndarray      # (M, n) state indices
    arc_paths: np.ndarray        # (M, n) arc indices
    certificate: tuple
    min_pair_distance: float
    seed: int
    rho: float

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    @property
    def M(self) -> int:
        return self.codewords.shape[0]

    def codeword_costs(self, cost: CostModel) -> np.ndarray:
        return cost.phi[self.codewords].sum(axis=1)

    def to_json_dict(self) -> dict:
        states = self.machine.states
        cert = []
        for spec in self.certificate:
            pos = np.nonzero(spec.counts > 0)[0]
            cert.append({
                "length": int(spec.n),
                "counts": [{"from": str(states[self.pairs.tails[a]]),
                            "to": str(states[self.pairs.heads[a]]),
                            "count": int(spec.counts[a])} for a in pos],
            })
        return {
            "n": int(self.n),
            "M": int(self.M),
            "alphabet": [str(a) for a in self.machine.alphabet],
            "codewords": self.codewords.tolist(),
            "state_paths": [[str(states[s]) for s in row] for row in self.state_paths],
            "type_counts": cert,
            "min_pair_distance": self.min_pair_distance,
            "seed": int(self.seed),
            "rho": self.rho,
        }


def pairwise_path_distances(arc_paths: np.ndarray, d: DistanceMatrix) -> np.ndarray:
    """Symmetric matrix of summed per-step distances between walks."""
    C = arc_paths.shape[0]
    out = np.zeros((C, C))
    for i in range(C):
        for j in range(i + 1, C):
            out[i, j] = out[j, i] = float(d.d[arc_paths[i], arc_paths[j]].sum())
    return out


def expurgate(candidates: CandidateSet, d: DistanceMatrix, M: int,
              rho: float | None = None, machine: StateMachine | None = None) -> Codebook:
    """Keep the M candidates with the smallest soft-distance scores
    B_m(rho) = sum_{m' != m} exp(-dist(m, m')/rho).

    At most M-1 of 2M-1 scores can exceed twice the ensemble average, so
    the kept set meets the average-based guarantee for any rho. When rho is
    None a geometric sweep picks the rho whose kept set has the largest
    minimum pairwise distance (the large-rho limit made operational).
    """
    C = candidates.paths.shape[0]
    if C < 2 * M - 1:
        raise ValidationError(f"need at least {2 * M - 1} candidates, got {C}")
    machine = machine or candidates.pairs.machine
    if machine is None:
        raise ValidationError("a machine is needed to emit codewords")
    dist = pairwise_path_distances(candidates.arc_paths, d)

    def keep_for(r):
        scores = np.exp(-dist / r).sum(axis=1) - 1.0  # minus the self term
        kept = np.argsort(scores, kind="stable")[:M]
        return np.sort(kept)

    def min_dist(kept):
        if len(kept) < 2:
            return float("inf")
        sub = dist[np.ix_(kept, kept)]
        iu = np.triu_indices(len(kept), 1)
        return float(sub[iu].min())

    if rho is None:
        best = None
        for r in RHO_SWEEP:
            kept = keep_for(r)
            md = min_dist(kept)
            if best is None or md >= best[0] - 1e-12:
                best = (md, r, kept)
        md, rho, kept = best
    else:
        kept = keep_for(float(rho))
        md = min_dist(kept)

    paths = candidates.paths[kept]
    codewords = np.stack([emit_codeword(p, machine) for p in paths])
    return Codebook(machine, candidates.pairs, codewords, paths,
                    candidates.arc_paths[kept], candidates.certificate,
                    md, candidates.seed, float(rho))


def blend_for_construction(q: PairDistribution, anchor: int | None, n: int,
                           theta: float | None = None) -> tuple[PairDistribution, int, float]:
    """Make a distribution constructible at block length n: if its support
    is not strongly connected, does not cover the anchor, or is too sparse
    to round, mix in mass theta of the uniform distribution on its
    component's arcs (the arbitrarily-small-degradation repair).

    Returns (usable q, anchor, theta actually applied)."""
    pairs = q.pairs
    comps = feasibility_sccs(pairs)
    weight = np.array([q.q[c.arcs].sum() if len(c.arcs) else 0.0 for c in comps])
    cid = int(np.argmax(weight))
    comp = comps[cid]
    if weight[cid] < 1.0 - 1e-12:
        raise ValidationError("q places mass outside a single strongly connected component")
    if anchor is None:
        pi = q.pi
        inside = sorted(comp.states)
        anchor = int(max(inside, key=lambda s: (pi[s], -s)))
    elif anchor not in comp.states:
        raise ValidationError(f"anchor {anchor} is outside the support's component")
    L_c = len(comp.arcs)
    needs = (not support_is_connected(q, pairs)) or (q.pi[anchor] <= 1e-12)
    if not needs and theta in (None, 0.0):
        return q, anchor, 0.0
    if theta is None:
        theta = min(0.5, 2.0 * L_c / n) if needs else 0.0
    if theta <= 0.0:
        return q, anchor, 0.0
    uni = np.zeros(len(pairs))
    uni[comp.arcs] = 1.0 / L_c
    blended = PairDistribution(pairs, (1.0 - theta) * q.q + theta * uni)
    return blended, anchor, float(theta)
