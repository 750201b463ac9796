import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import zerorate as zr
from zerorate.isi import IsiSpec, build_isi_machine


@pytest.fixture(scope="session")
def order1():
    m = zr.shift_register([1.0, -1.0], 1)
    return m, zr.feasible_pairs(m)


@pytest.fixture(scope="session")
def order2():
    m = zr.shift_register([1.0, -1.0], 2)
    return m, zr.feasible_pairs(m)


def make_bsc(p=0.1):
    """Memoryless binary channel as an augmented one-state machine."""
    base = zr.StateMachine(("s",), ("0", "1"), (0.0, 1.0),
                           np.zeros((1, 2), dtype=np.int64))
    m = zr.augment(base)
    pairs = zr.feasible_pairs(m)
    rows = [[1 - p, p] if s == 0 else [p, 1 - p] for s in pairs.symbols]
    kern = zr.discrete_kernel(("0", "1"), rows)
    return m, pairs, kern, zr.bhattacharyya(kern, pairs)


def make_isi(h, levels=(1.0, -1.0), sigma2=1.0, gamma=1.0):
    spec = IsiSpec(np.asarray(h, float), sigma2, np.asarray(levels, float), gamma)
    machine, kern = build_isi_machine(spec)
    pairs = zr.feasible_pairs(machine)
    d = zr.bhattacharyya(kern, pairs)
    cost = zr.CostModel(np.asarray(machine.values) ** 2, gamma)
    return spec, machine, pairs, kern, d, cost


def make_dmc(dhat, values=None, phi=None, gamma=0.0):
    """K-symbol memoryless channel with a hand-set symbol distance matrix,
    embedded as the augmented one-state machine."""
    K = len(dhat)
    names = tuple(chr(ord("A") + i) for i in range(K))
    vals = tuple(float(i) for i in range(K)) if values is None else tuple(values)
    base = zr.StateMachine(("s",), names, vals, np.zeros((1, K), dtype=np.int64))
    m = zr.augment(base)
    pairs = zr.feasible_pairs(m)
    L = len(pairs)
    D = np.empty((L, L))
    for i in range(L):
        for j in range(L):
            D[i, j] = dhat[pairs.symbols[i], pairs.symbols[j]]
    cost = zr.CostModel(np.zeros(K) if phi is None else np.asarray(phi, float), gamma)
    return m, pairs, zr.DistanceMatrix(D), cost


NONCONCAVE_DHAT = np.array([[0.0, 1.0, 0.1],
                            [1.0, 0.0, 0.1],
                            [0.1, 0.1, 0.0]])
NONCONCAVE_PHI = np.array([1.0, 1.0, 0.0])
NONCONCAVE_GAMMA = 0.5
