"""Independent brute-force oracles the tests check the library against.

Everything here is deliberately dumb: dense grids, exhaustive recursion,
long time averages. None of it shares code with the solvers."""
from __future__ import annotations

import numpy as np


def dmc_e0_grid(dhat: np.ndarray, phi=None, gamma=None, res=64, refine=4):
    """max pi^T dhat pi over the K-simplex (K <= 3), optionally under
    phi.pi <= gamma, by dense grid search plus local refinement."""
    K = len(dhat)
    phi = np.zeros(K) if phi is None else np.asarray(phi, dtype=float)
    gamma = np.inf if gamma is None else float(gamma)

    def value(pts):
        ok = pts @ phi <= gamma + 1e-12
        vals = np.einsum("ni,ij,nj->n", pts, dhat, pts)
        vals[~ok] = -np.inf
        return vals

    if K == 2:
        p = np.linspace(0.0, 1.0, 200_001)
        pts = np.stack([p, 1.0 - p], axis=1)
        vals = value(pts)
        i = int(np.argmax(vals))
        return float(vals[i]), pts[i]
    if K != 3:
        raise NotImplementedError

    def grid_around(center, half, steps):
        a = np.linspace(max(center[0] - half, 0.0), min(center[0] + half, 1.0), steps)
        b = np.linspace(max(center[1] - half, 0.0), min(center[1] + half, 1.0), steps)
        aa, bb = np.meshgrid(a, b, indexing="ij")
        cc = 1.0 - aa - bb
        mask = cc >= -1e-12
        pts = np.stack([aa[mask], bb[mask], np.maximum(cc[mask], 0.0)], axis=1)
        return pts

    center = np.array([1 / 3, 1 / 3])
    half = 0.5
    best_val, best_pt = -np.inf, None
    steps = res + 1
    for _ in range(refine):
        pts = grid_around(center, half, steps)
        vals = value(pts)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_pt = float(vals[i]), pts[i]
        center = best_pt[:2]
        half = 4.0 * half / res
        steps = res + 1
    return best_val, best_pt


def simplex_grid(K: int, res: int) -> np.ndarray:
    """All probability vectors with denominator res."""
    pts = []

    def rec(prefix, left):
        if len(prefix) == K - 1:
            pts.append(prefix + [left])
            return
        for v in range(left + 1):
            rec(prefix + [v], left - v)

    rec([], res)
    return np.asarray(pts, dtype=float) / res


def dmc_uce_two_component_grid(dhat: np.ndarray, phi: np.ndarray, gamma: float,
                               res=64) -> float:
    """Two-component time-sharing oracle: components on the simplex grid,
    the weight solved in closed form against the budget."""
    pts = simplex_grid(len(dhat), res)
    vals = np.einsum("ni,ij,nj->n", pts, dhat, pts)
    costs = pts @ np.asarray(phi, dtype=float)
    best = vals[costs <= gamma + 1e-12].max()
    n = len(pts)
    a = vals[:, None].repeat(n, 1)
    b = vals[None, :].repeat(n, 0)
    ca = costs[:, None].repeat(n, 1)
    cb = costs[None, :].repeat(n, 0)
    # weight on component a: value is linear in w, so only the interval
    # endpoints of {w in [0,1]: w ca + (1-w) cb <= gamma} matter
    with np.errstate(divide="ignore", invalid="ignore"):
        w_cross = (gamma - cb) / (ca - cb)
    for w in (np.zeros_like(a), np.ones_like(a), np.clip(w_cross, 0.0, 1.0)):
        feas = w * ca + (1 - w) * cb <= gamma + 1e-12
        mix = w * a + (1 - w) * b
        mix[~feas] = -np.inf
        m = float(np.nanmax(mix))
        if m > best:
            best = m
    return float(best)


def count_euler_circuits(tails, heads, counts, anchor) -> int:
    """Exhaustively count distinct arc-usage circuits from the anchor."""
    arcs_by_tail: dict[int, list[int]] = {}
    for i, t in enumerate(tails):
        if counts[i] > 0:
            arcs_by_tail.setdefault(int(t), []).append(i)
    remaining = np.asarray(counts, dtype=np.int64).copy()
    total = int(remaining.sum())
    seen = set()

    def rec(node, used, trail):
        if used == total:
            if node == anchor:
                seen.add(tuple(trail))
            return
        for a in arcs_by_tail.get(node, ()):  # deterministic order
            if remaining[a] > 0:
                remaining[a] -= 1
                trail.append(a)
                rec(int(heads[a]), used + 1, trail)
                trail.pop()
                remaining[a] += 1

    rec(int(anchor), 0, [])
    return len(seen)


def gaussian_two_codeword_error(d_e: float, sigma: float) -> float:
    """Exact ML error between two codewords at Euclidean distance d_e."""
    from scipy.stats import norm
    return float(norm.cdf(-d_e / (2.0 * sigma)))


def quantized_sine_time_averages(A, delta, omega0, phase, n):
    """(R_ee(0), R_xe(0), power, R_ee(1), R_ee(2)) by long time averages."""
    t = np.arange(1, n + 1, dtype=float)
    s = A * np.sin(omega0 * t + phase)
    x = delta * (np.floor(s / delta) + 0.5)
    e = x - s
    return (float(np.mean(e * e)),
            float(np.mean(A * e * np.sin(omega0 * t + phase))),
            float(np.mean(x * x)),
            float(np.mean(e[:-1] * e[1:])),
            float(np.mean(e[:-2] * e[2:])))


def register_polytope_grid(d4: np.ndarray, res=512, phi4=None, gamma=None):
    """Dense scan of the 2-state register polytope q = (a, b, b, c),
    a + 2b + c = 1 (equal marginals force q2 = q3)."""
    a = np.linspace(0, 1, res + 1)
    b = np.linspace(0, 0.5, res + 1)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    cc = 1.0 - aa - 2 * bb
    mask = cc >= -1e-12
    q = np.stack([aa[mask], bb[mask], bb[mask], np.maximum(cc[mask], 0)], axis=1)
    vals = np.einsum("ni,ij,nj->n", q, d4, q)
    if phi4 is not None:
        ok = q @ np.asarray(phi4) <= gamma + 1e-12
        vals[~ok] = -np.inf
    i = int(np.argmax(vals))
    return float(vals[i]), q[i]
