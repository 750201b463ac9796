"""Validation by simulation and by the large-deviations oracle.

The channel is memoryless over consecutive state pairs, so a trial draws
y_t from the arc's output law and the ML decoder sums per-step
log-likelihoods over all codewords (ties count as errors, keeping bounds
valid). The z_rho operation minimizes the typed exponent of the soft
pairwise score over coupled pair processes; the conditional-product
coupling is always included as a start, which pins the value at or below
minus the exponent functional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bhatt import DISCRETE, ChannelKernel, DistanceMatrix, log_pmf
from .codebook import Codebook
from .errors import ValidationError
from .exponent import PairDistribution, SolverOptions
from .polytope import Polytope, minimize_smooth

_BATCH = 4096


@dataclass(frozen=True, eq=False)
class SimulationReport:
    trials: int
    errors: np.ndarray           # per codeword
    pe_estimates: np.ndarray     # per codeword
    std_errors: np.ndarray
    empirical_exponent: float
    exponent_band: tuple[float, float]
    n: int
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "trials": int(self.trials),
            "errors": [int(v) for v in self.errors],
            "pe_estimates": self.pe_estimates.tolist(),
            "std_errors": self.std_errors.tolist(),
            "empirical_exponent": self.empirical_exponent,
            "exponent_band": list(self.exponent_band),
            "n": int(self.n),
            "seed": int(self.seed),
        }


def _sample_outputs(kernel: ChannelKernel, arcs: np.ndarray, rng, n_trials: int) -> np.ndarray:
    """(n_trials, n) outputs for a fixed transmitted arc sequence."""
    n = len(arcs)
    if kernel.kind == DISCRETE:
        cdf = np.cumsum(kernel.pmf[arcs], axis=1)  # (n, Y)
        cdf[:, -1] = np.inf  # guard the top cell against cumsum roundoff
        u = rng.random((n_trials, n))
        return (u[:, :, None] > cdf[None, :, :]).sum(axis=2)
    mu = kernel.means[arcs]
    sigma = np.sqrt(kernel.variance)
    return mu[None, :] + sigma * rng.standard_normal((n_trials, n))


def _loglik(kernel: ChannelKernel, arc_paths: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(n_trials, M) decoder metric for each codeword hypothesis."""
    if kernel.kind == DISCRETE:
        logp = log_pmf(kernel)  # (L, Y)
        per = logp[arc_paths[None, :, :], y[:, None, :].astype(np.int64)]
        return per.sum(axis=2)
    mu = kernel.means[arc_paths]  # (M, n)
    diff = y[:, None, :] - mu[None, :, :]
    return -(diff * diff).sum(axis=2) / (2.0 * kernel.variance)


def simulate(kernel: ChannelKernel, book: Codebook, trials: int, seed: int,
             trial_log=None) -> SimulationReport:
    """Per-codeword ML error rates with exact binomial standard errors.

    trial_log, when given, receives one CSV row (trial, codeword, decoded,
    correct) per transmission; it may be a path or a writable text file."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    M, n = book.M, book.n
    errors = np.zeros(M, dtype=np.int64)
    log_fh = None
    close_log = False
    if trial_log is not None:
        import csv
        if hasattr(trial_log, "write"):
            log_fh = trial_log
        else:
            log_fh = open(trial_log, "w", encoding="utf-8", newline="")
            close_log = True
        log = csv.writer(log_fh)
        log.writerow(["trial", "codeword", "decoded", "correct"])
    for m in range(M):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), m)))
        done = 0
        while done < trials:
            batch = min(_BATCH, trials - done)
            y = _sample_outputs(kernel, book.arc_paths[m], rng, batch)
            if M > 1:
                ll = _loglik(kernel, book.arc_paths, y)
                own = ll[:, m]
                others = np.delete(ll, m, axis=1)
                # ties decode as errors (conservative)
                wrong = others.max(axis=1) >= own
                errors[m] += int(wrong.sum())
                decoded = np.argmax(ll, axis=1)
            else:
                wrong = np.zeros(batch, dtype=bool)
                decoded = np.zeros(batch, dtype=np.int64)
            if log_fh is not None:
                for t in range(batch):
                    log.writerow([done + t, m, int(decoded[t]), int(not wrong[t])])
            done += batch
    if close_log:
        log_fh.close()
    pe = errors / trials
    se = np.sqrt(pe * (1.0 - pe) / trials)
    worst = float(pe.max())
    # rule-of-three style fallback keeps the band finite at zero errors
    hi = min(1.0, max(worst + 3.0 * float(se[np.argmax(pe)]), 3.0 / trials))
    lo = max(worst - 3.0 * float(se[np.argmax(pe)]), 0.0)
    exponent = float("inf") if worst == 0.0 else -np.log(worst) / n
    band = (-np.log(hi) / n, float("inf") if lo == 0.0 else -np.log(lo) / n)
    return SimulationReport(trials, errors, pe, se, exponent, band, n, int(seed))


@dataclass(frozen=True)
class PairwiseReport:
    p_hat: float
    stderr: float
    bhattacharyya_bound: float
    distance: float


def pairwise_check(kernel: ChannelKernel, arcs_a: np.ndarray, arcs_b: np.ndarray,
                   trials: int, seed: int, d: DistanceMatrix | None = None) -> PairwiseReport:
    """Two-codeword ML error estimate against the Bhattacharyya bound
    exp(-sum_t d_B); raises if the estimate exceeds the bound by more than
    three standard errors."""
    arcs_a = np.asarray(arcs_a, dtype=np.int64)
    arcs_b = np.asarray(arcs_b, dtype=np.int64)
    if arcs_a.shape != arcs_b.shape:
        raise ValidationError("paths must have equal length")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x9A)))
    errs = 0
    done = 0
    while done < trials:
        batch = min(_BATCH, trials - done)
        y = _sample_outputs(kernel, arcs_a, rng, batch)
        ll = _loglik(kernel, np.stack([arcs_a, arcs_b]), y)
        errs += int((ll[:, 1] >= ll[:, 0]).sum())
        done += batch
    p = errs / trials
    se = float(np.sqrt(p * (1 - p) / trials))
    if d is None:
        if kernel.kind == DISCRETE:
            raise ValidationError("a distance matrix is required for discrete kernels")
        diff = kernel.means[arcs_a] - kernel.means[arcs_b]
        dist = float((diff * diff).sum() / (8.0 * kernel.variance))
    else:
        dist = float(d.d[arcs_a, arcs_b].sum())
    bound = float(np.exp(-dist))
    if p > bound + 3.0 * se:
        raise ValidationError(
            f"pairwise error {p:g} exceeds the Bhattacharyya bound {bound:g} "
            f"by more than 3 standard errors ({se:g})")
    return PairwiseReport(p, se, bound, dist)


@dataclass(frozen=True, eq=False)
class QuadrupleDistribution:
    """Joint law of two coupled pair processes, indexed (arc, arc'); both
    single-pair marginals are pinned and the head-pair joint must equal
    the tail-pair joint (stationarity of the coupled chain)."""

    pairs: object
    w: np.ndarray

    def _joint(self, nodes: np.ndarray) -> np.ndarray:
        S = self.pairs.n_states
        cell = nodes[:, None] * S + nodes[None, :]
        return np.bincount(cell.ravel(), weights=self.w.ravel(),
                           minlength=S * S).reshape(S, S)

    def tails_joint(self) -> np.ndarray:
        return self._joint(self.pairs.tails)

    def heads_joint(self) -> np.ndarray:
        return self._joint(self.pairs.heads)


@dataclass(frozen=True)
class ZRhoResult:
    value: float
    argmin: QuadrupleDistribution
    delta: float
    cross_term: float


def _entropy(p: np.ndarray) -> float:
    p = p[p > 1e-300]
    return float(-(p * np.log(p)).sum())


def _quad_constraints(q_star: PairDistribution):
    """Equality system for the coupled quadruple table, flattened (L*L,)."""
    pairs = q_star.pairs
    L = len(pairs)
    S = pairs.n_states
    rows = []
    rhs = []
    # left pair marginal = q*
    for i in range(L):
        row = np.zeros((L, L))
        row[i, :] = 1.0
        rows.append(row.ravel())
        rhs.append(q_star.q[i])
    # right pair marginal = q*
    for j in range(L):
        row = np.zeros((L, L))
        row[:, j] = 1.0
        rows.append(row.ravel())
        rhs.append(q_star.q[j])
    # stationarity: joint law of heads equals joint law of tails
    tails, heads = pairs.tails, pairs.heads
    for a in range(S):
        for b in range(S):
            row = np.zeros((L, L))
            row[np.ix_(heads == a, heads == b)] += 1.0
            row[np.ix_(tails == a, tails == b)] -= 1.0
            if np.abs(row).sum():
                rows.append(row.ravel())
                rhs.append(0.0)
    return np.asarray(rows), np.asarray(rhs)


def delta_of(w: np.ndarray, pairs) -> float:
    """H(S+|S) + H(S+'|S') - H(S+,S+'|S,S') of a quadruple table, computed
    from the table's own marginals; nonnegative for every joint law by
    submodularity, zero exactly on conditional-product couplings."""
    S = pairs.n_states
    tails = pairs.tails
    w = np.maximum(w, 0.0)
    m1 = w.sum(axis=1)
    m2 = w.sum(axis=0)
    pi1 = np.bincount(tails, weights=m1, minlength=S)
    pi2 = np.bincount(tails, weights=m2, minlength=S)
    tt = (tails[:, None] * S + tails[None, :]).ravel()
    u = np.bincount(tt, weights=w.ravel(), minlength=S * S)
    return float((_entropy(m1) - _entropy(pi1)) + (_entropy(m2) - _entropy(pi2))
                 - (_entropy(w.ravel()) - _entropy(u)))


def z_rho(q_star: PairDistribution, d: DistanceMatrix, rho: float,
          opts: SolverOptions | None = None,
          extra_starts: tuple = ()) -> ZRhoResult:
    """Minimize rho * Delta(w) - <w, d> over coupled quadruple laws.

    Delta(w) is the divergence of the coupling from the conditional-product
    family, so it is nonnegative and vanishes exactly there. The product
    coupling q* x q* is always a start, which guarantees a value at or below
    -E0(q*). Constraints (pinned pair marginals and heads-joint equal to
    tails-joint) are linear once multiplied out, so plain projected gradient
    applies; multi-start handles nonconvexity.
    """
    opts = opts or SolverOptions()
    if rho <= 0:
        raise ValidationError("rho must be positive")
    pairs = q_star.pairs
    L = len(pairs)
    dmat = d.d
    if np.isinf(dmat).any():
        raise ValidationError("z_rho requires finite distances")
    if pairs.n_states > 8:
        raise ValidationError("state space too large for the quadruple table (S <= 8)")
    a_eq, b_eq = _quad_constraints(q_star)
    poly = Polytope(a_eq, b_eq)
    tails = pairs.tails
    S = pairs.n_states
    tt = tails[:, None] * S + tails[None, :]  # joint tail cell per (i, j)
    tiny = 1e-300

    def objective(wf: np.ndarray) -> float:
        w = wf.reshape(L, L)
        return rho * delta_of(w, pairs) - float((w * dmat).sum())

    def gradient(wf: np.ndarray) -> np.ndarray:
        w = np.maximum(wf.reshape(L, L), tiny)
        m1 = np.maximum(w.sum(axis=1), tiny)
        m2 = np.maximum(w.sum(axis=0), tiny)
        pi1 = np.maximum(np.bincount(tails, weights=m1, minlength=S), tiny)
        pi2 = np.maximum(np.bincount(tails, weights=m2, minlength=S), tiny)
        u = np.maximum(np.bincount(tt.ravel(), weights=w.ravel(), minlength=S * S), tiny)
        g = (np.log(pi1[tails] / m1)[:, None]
             + np.log(pi2[tails] / m2)[None, :]
             + np.log(w) - np.log(u[tt]))
        return (rho * g - dmat).ravel()

    product = np.outer(q_star.q, q_star.q).ravel()
    starts = [product]
    starts.extend(np.asarray(s, dtype=float).ravel() for s in extra_starts)
    rng = np.random.default_rng(np.random.SeedSequence((opts.seed, 0x2D0)))
    for _ in range(max(opts.starts // 8 - len(starts), 1)):
        starts.append(rng.dirichlet(np.ones(L * L)))
    pg = opts.pg(max(opts.tol, 1e-10))
    pg.max_iter = min(pg.max_iter, 30_000)
    best_w, best_f = None, np.inf
    for s in starts:
        w, f = minimize_smooth(objective, gradient, poly, s, pg,
                               step0=1.0 / (1.0 + rho))
        if f < best_f:
            best_w, best_f = w, f
    projected_product = poly.project(product)
    guaranteed = objective(projected_product)
    if guaranteed < best_f:  # never worse than the analytic start
        best_w, best_f = projected_product, guaranteed
    w = best_w.reshape(L, L)
    return ZRhoResult(best_f, QuadrupleDistribution(pairs, w),
                      delta_of(w, pairs), float((w * dmat).sum()))


def z_rho_sweep(q_star: PairDistribution, d: DistanceMatrix, rhos,
                opts: SolverOptions | None = None) -> list[ZRhoResult]:
    """Evaluate z_rho over a rho grid with a shared minimizer pool, so the
    reported values are provably nondecreasing in rho."""
    opts = opts or SolverOptions()
    results = []
    pool: list[np.ndarray] = []
    for rho in sorted(float(r) for r in rhos):
        res = z_rho(q_star, d, rho, opts, extra_starts=tuple(pool))
        pool.append(res.argmin.w)
        # re-evaluate every pooled minimizer at this rho: keeps monotonicity
        best = res
        for w in pool:
            dd = float((w * d.d).sum())
            delta = delta_of(w, q_star.pairs)
            f = rho * delta - dd
            if f < best.value:
                best = ZRhoResult(f, QuadrupleDistribution(q_star.pairs, w), delta, dd)
        results.append(best)
    return results


def empirical_exponent_consistency(book: Codebook, report: SimulationReport) -> bool:
    """Union-bound consistency: -ln(pe)/n >= d_min/n - ln(M-1)/n within the
    simulation's three-sigma band."""
    if book.M < 2 or not np.isfinite(book.min_pair_distance):
        return True
    floor_exp = (book.min_pair_distance - np.log(book.M - 1)) / book.n
    return report.exponent_band[1] >= floor_exp - 1e-12
