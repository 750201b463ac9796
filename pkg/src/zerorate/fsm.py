"""Finite-state machine channel skeletons.

A machine is a deterministic next-state function over a finite state set,
driven by channel inputs. When every state determines the input symbol
that produced it (a "recover" map), ordered state pairs (s, s+) with
s+ = f(s, g(s+)) stand in one-to-one correspondence with (state, input)
pairs and become the working alphabet of the zero-rate theory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, kron
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class StateMachine:
    """Deterministic FSM: states, input alphabet with numeric values,
    total next-state table, optional input-recover map.

    next_state has shape (S, K) of state indices; recover, when present,
    has shape (S,) of symbol indices and must invert the transition:
    recover[next_state[s, x]] == x for every (s, x).
    """

    states: tuple
    alphabet: tuple
    values: tuple
    next_state: np.ndarray
    recover: np.ndarray | None = None

    def __post_init__(self):
        S, K = len(self.states), len(self.alphabet)
        if S < 1:
            raise ValidationError("need at least one state")
        if K < 2:
            raise ValidationError("need at least two input symbols")
        if len(self.values) != K:
            raise ValidationError("values table must cover the alphabet")
        ns = np.asarray(self.next_state, dtype=np.int64)
        if ns.shape != (S, K):
            raise ValidationError(f"next_state must be {S}x{K}, got {ns.shape}")
        if ns.min() < 0 or ns.max() >= S:
            raise ValidationError("next_state entries must be valid state indices")
        object.__setattr__(self, "next_state", ns)
        if self.recover is not None:
            g = np.asarray(self.recover, dtype=np.int64)
            if g.shape != (S,):
                raise ValidationError("recover must assign one symbol per state")
            if g.min() < 0 or g.max() >= K:
                raise ValidationError("recover entries must be valid symbol indices")
            bad = np.nonzero(g[ns] != np.arange(K)[None, :])
            if bad[0].size:
                s, x = int(bad[0][0]), int(bad[1][0])
                raise ValidationError(
                    f"recover(next_state({self.states[s]!r}, {self.alphabet[x]!r})) "
                    f"!= {self.alphabet[x]!r}; machine is not recoverable"
                )
            object.__setattr__(self, "recover", g)
        self.next_state.setflags(write=False)
        if self.recover is not None:
            self.recover.setflags(write=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_symbols(self) -> int:
        return len(self.alphabet)

    @classmethod
    def from_tables(cls, states, alphabet, values, next_state, recover=None):
        """Build from label-keyed dict tables (the external spec format)."""
        states = tuple(states)
        alphabet = tuple(alphabet)
        sidx = {s: i for i, s in enumerate(states)}
        xidx = {x: i for i, x in enumerate(alphabet)}
        if len(sidx) != len(states) or len(xidx) != len(alphabet):
            raise ValidationError("duplicate state or symbol labels")
        if isinstance(values, dict):
            vals = tuple(float(values[x]) for x in alphabet)
        else:
            vals = tuple(float(v) for v in values)
        ns = np.empty((len(states), len(alphabet)), dtype=np.int64)
        for s in states:
            row = next_state.get(s)
            if row is None:
                raise ValidationError(f"next_state missing row for state {s!r}")
            for x in alphabet:
                if x not in row:
                    raise ValidationError(f"next_state[{s!r}] missing symbol {x!r}")
                ns[sidx[s], xidx[x]] = sidx[row[x]]
        g = None
        if recover is not None:
            g = np.array([xidx[recover[s]] for s in states], dtype=np.int64)
        return cls(states, alphabet, vals, ns, g)

    def value_of(self, symbol_index: int) -> float:
        return self.values[symbol_index]


@dataclass(frozen=True, eq=False)
class FeasiblePairSet:
    """The ordered state pairs (s, s+) satisfying s+ = f(s, g(s+)), in
    lexicographic (tail, head) order. For a valid recover map this is the
    image of the bijection (s, x) -> (s, f(s, x)), so L = S*K exactly.

    machine may be None for hand-built pair graphs (synthetic instances);
    symbols then just index into whatever cost table the caller supplies.
    """

    n_states: int
    tails: np.ndarray
    heads: np.ndarray
    symbols: np.ndarray  # g(head): the input emitted on the arc
    machine: StateMachine | None = None

    def __post_init__(self):
        for name in ("tails", "heads", "symbols"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)
        if not (len(self.tails) == len(self.heads) == len(self.symbols)):
            raise ValidationError("tails/heads/symbols must have equal length")
        seen = set(zip(self.tails.tolist(), self.heads.tolist()))
        if len(seen) != len(self.tails):
            raise ValidationError("duplicate pairs are not allowed")

    def __len__(self) -> int:
        return len(self.tails)

    def pair_labels(self):
        if self.machine is None:
            return [f"{t}->{h}" for t, h in zip(self.tails, self.heads)]
        st = self.machine.states
        return [f"{st[t]}->{st[h]}" for t, h in zip(self.tails, self.heads)]

    def index_of(self, tail: int, head: int) -> int:
        hits = np.nonzero((self.tails == tail) & (self.heads == head))[0]
        if not hits.size:
            raise KeyError(f"({tail}, {head}) is not a feasible pair")
        return int(hits[0])

    def index_lookup(self) -> np.ndarray:
        """Dense (S, S) table pair -> arc index, -1 where infeasible."""
        S = self.n_states
        table = np.full((S, S), -1, dtype=np.int64)
        table[self.tails, self.heads] = np.arange(len(self))
        return table


@dataclass(frozen=True)
class StructuralReport:
    irreducible: bool
    doubly_irreducible: bool
    approach_state: tuple[int, int] | None  # (sigma index, r)


def augment_origin(machine: StateMachine) -> list[tuple[int, int]]:
    """The (original state, stored symbol) behind each augmented state, in
    the augmented machine's canonical state order."""
    S, K = machine.n_states, machine.n_symbols
    ns = machine.next_state
    return sorted({(int(ns[s, x]), x) for s in range(S) for x in range(K)})


def augment(machine: StateMachine) -> StateMachine:
    """Extend the state with the previous input so it becomes recoverable.

    New states are the one-step image {(f(s, x), x)}; this is the set of
    states reachable after the first symbol regardless of initialization,
    and it is closed under transitions. Recover returns the stored symbol.
    """
    if machine.recover is not None:
        raise ValidationError("machine is already recoverable")
    S, K = machine.n_states, machine.n_symbols
    ns = machine.next_state
    pairs = augment_origin(machine)
    pidx = {p: i for i, p in enumerate(pairs)}
    labels = tuple(f"({machine.states[s]},{machine.alphabet[x]})" for s, x in pairs)
    new_ns = np.empty((len(pairs), K), dtype=np.int64)
    for i, (s, _) in enumerate(pairs):
        for x in range(K):
            new_ns[i, x] = pidx[(int(ns[s, x]), x)]
    g = np.array([x for _, x in pairs], dtype=np.int64)
    return StateMachine(labels, machine.alphabet, machine.values, new_ns, g)


def feasible_pairs(machine: StateMachine) -> FeasiblePairSet:
    """Enumerate pairs (s, f(s, x)) in canonical lexicographic order."""
    if machine.recover is None:
        raise ValidationError("feasible pairs require a recover map (use augment)")
    S, K = machine.n_states, machine.n_symbols
    tails = np.repeat(np.arange(S), K)
    heads = machine.next_state.reshape(-1)
    order = np.lexsort((heads, tails))
    tails, heads = tails[order], heads[order]
    symbols = machine.recover[heads]
    return FeasiblePairSet(S, tails, heads, symbols.copy(), machine)


def _adjacency(machine: StateMachine) -> csr_matrix:
    S, K = machine.n_states, machine.n_symbols
    rows = np.repeat(np.arange(S), K)
    cols = machine.next_state.reshape(-1)
    data = np.ones(S * K, dtype=np.int8)
    return csr_matrix((data, (rows, cols)), shape=(S, S))


def _strongly_connected(adj: csr_matrix) -> bool:
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


def check_structure(machine: StateMachine, max_r: int | None = None) -> StructuralReport:
    """Decide irreducibility, double irreducibility (product machine over
    independent input pairs), and search for a uniformly approachable state:
    a sigma reachable from every state by paths of one common length r.

    States with a self-transition are tried first (shortest-path eccentricity
    then gives the minimal r); otherwise exact-length reachable sets are
    iterated up to max_r, which defaults to S*(S+1).
    """
    if machine.recover is None:
        raise ValidationError("structure checks require a recover map")
    S = machine.n_states
    if max_r is None:
        max_r = S * (S + 1)
    adj = _adjacency(machine)
    irreducible = _strongly_connected(adj)
    doubly = bool(irreducible and _strongly_connected(kron(adj, adj, format="csr")))

    ns = machine.next_state
    has_loop = np.any(ns == np.arange(S)[:, None], axis=1)

    def eccentricity(sigma: int) -> int | None:
        # max over states of the shortest path length into sigma
        dist = np.full(S, -1, dtype=np.int64)
        dist[sigma] = 0
        frontier = np.zeros(S, dtype=bool)
        frontier[sigma] = True
        d = 0
        while frontier.any():
            d += 1
            reach = frontier[ns].any(axis=1) & (dist < 0)
            dist[reach] = d
            frontier = reach
        return int(dist.max()) if (dist >= 0).all() else None

    best: tuple[int, int] | None = None
    for sigma in np.nonzero(has_loop)[0]:
        r = eccentricity(int(sigma))
        if r is not None and r <= max_r and (best is None or r < best[1]):
            best = (int(sigma), max(r, 1))
    if best is None:
        for sigma in range(S):
            mask = np.zeros(S, dtype=bool)
            mask[sigma] = True
            for r in range(1, max_r + 1):
                mask = mask[ns].any(axis=1)
                if mask.all():
                    if best is None or r < best[1]:
                        best = (sigma, r)
                    break
    return StructuralReport(irreducible, doubly, best)


def shift_register(levels, k: int) -> StateMachine:
    """Order-k shift register fed by its input: states are k-tuples of
    symbols, recover reads the newest one. The canonical recoverable FSM."""
    if k < 1:
        raise ValidationError("shift_register needs k >= 1 (augment a 1-state machine for k=0)")
    levels = tuple(levels)
    K = len(levels)
    tuples = [()]
    for _ in range(k):
        tuples = [t + (x,) for t in tuples for x in range(K)]
    tuples.sort()
    tidx = {t: i for i, t in enumerate(tuples)}
    S = len(tuples)
    ns = np.empty((S, K), dtype=np.int64)
    for t, i in tidx.items():
        for x in range(K):
            ns[i, x] = tidx[t[1:] + (x,)]
    g = np.array([t[-1] for t in tuples], dtype=np.int64)
    labels = tuple("|".join(f"{levels[j]:g}" for j in t) for t in tuples)
    names = tuple(f"{v:g}" for v in levels)
    return StateMachine(labels, names, tuple(float(v) for v in levels), ns, g)
