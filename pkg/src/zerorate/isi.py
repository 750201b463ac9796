"""Gaussian channel with a finite impulse response: shift-register
machine, closed-form exponent, spectral upper bound, and the
quantized-sinusoid lower bound with its quantization loss.

The second-order statistics of the quantized sinusoid are spectral lines
at odd multiples of the carrier folded into [0, 1): the error waveform
e(theta) = Q(A sin theta) - A sin theta is periodic and piecewise equal to
(level - A sin theta), so its Fourier coefficients -- and all the
correlation sums built from them -- integrate in closed form piece by
piece. The classical Bessel-series expressions for the same coefficients
are kept as slower reference implementations and cross-checked in tests.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import jv

from .bhatt import ChannelKernel, gaussian_kernel
from .errors import InfeasibleError, ValidationError
from .fsm import FeasiblePairSet, StateMachine, augment, feasible_pairs, shift_register

STATE_GUARD = 4096


@dataclass(frozen=True)
class IsiSpec:
    """Impulse response h_0..h_k, noise variance, input levels, power
    budget with phi(x) = x^2."""

    h: np.ndarray
    sigma2: float
    levels: np.ndarray
    gamma: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 1 or h.size < 1 or not np.any(h):
            raise ValidationError("h must be a nonzero coefficient vector")
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim != 1 or levels.size < 2:
            raise ValidationError("need at least two input levels")
        if not float(self.sigma2) > 0:
            raise ValidationError("sigma2 must be positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "levels", levels)
        h.setflags(write=False)
        levels.setflags(write=False)

    @property
    def k(self) -> int:
        return len(self.h) - 1


def _register_tuples(K: int, k: int):
    return sorted(itertools.product(range(K), repeat=k))


def build_isi_machine(spec: IsiSpec) -> tuple[StateMachine, ChannelKernel]:
    """Shift-register machine plus the Gaussian kernel whose mean on the
    pair (s, s+) is the filtered window sum h_i x_{t-i}.

    k = 0 has no memory to store, so the one-state machine is augmented
    with the previous input to restore recoverability.
    """
    K = len(spec.levels)
    k = spec.k
    if K ** max(k, 1) > STATE_GUARD:
        raise ValidationError(f"state space {K}**{max(k, 1)} exceeds the guard {STATE_GUARD}")
    if k == 0:
        base = StateMachine(("s",), tuple(f"{v:g}" for v in spec.levels),
                            tuple(float(v) for v in spec.levels),
                            np.zeros((1, K), dtype=np.int64))
        machine = augment(base)
        pairs = feasible_pairs(machine)
        means = spec.h[0] * np.asarray(machine.values)[pairs.symbols]
    else:
        machine = shift_register(spec.levels, k)
        pairs = feasible_pairs(machine)
        means = pair_means(machine, pairs, spec.h)
    return machine, gaussian_kernel(means, spec.sigma2)


def pair_means(machine: StateMachine, pairs: FeasiblePairSet, h: np.ndarray) -> np.ndarray:
    """Filtered mean per feasible pair of a shift-register machine whose
    states are the canonical sorted k-tuples of symbol indices."""
    h = np.asarray(h, dtype=float)
    k = len(h) - 1
    vals = np.asarray(machine.values)
    mu = h[0] * vals[pairs.symbols]
    if k >= 1:
        tuples = _register_tuples(machine.n_symbols, k)
        if len(tuples) != machine.n_states:
            raise ValidationError("machine is not the canonical order-k register")
        hist = vals[np.asarray(tuples)]  # (S, k): x_{t-k} .. x_{t-1}
        for i in range(1, k + 1):
            mu = mu + h[i] * hist[pairs.tails, k - i]
    return mu


def window_distribution_to_pairs(q_tuples: np.ndarray, machine: StateMachine,
                                 pairs: FeasiblePairSet) -> np.ndarray:
    """Map a distribution over (k+1)-windows (axes oldest..newest) onto the
    feasible pairs of the register machine (the window <-> pair bijection).

    For k = 0 the window law only constrains the emitted symbol; the
    product law over (previous, current) realizes it with equal marginals.
    """
    K = machine.n_symbols
    k = q_tuples.ndim - 1
    q = np.zeros(len(pairs))
    if k == 0:
        tail_sym = machine.recover[pairs.tails]
        return q_tuples[tail_sym] * q_tuples[pairs.symbols]
    tuples = _register_tuples(K, k)
    for a in range(len(pairs)):
        window = tuples[pairs.tails[a]] + (int(pairs.symbols[a]),)
        q[a] = q_tuples[window]
    return q


def e0_isi(q_tuples: np.ndarray, spec: IsiSpec) -> float:
    """Closed-form exponent of a stationary window law:
    (1/4 sigma^2) [sum_ij h_i h_j E(x_0 x_|i-j|) - (sum_i h_i E x_0)^2]."""
    q = np.asarray(q_tuples, dtype=float)
    k = spec.k
    if q.ndim != k + 1 or q.shape != (len(spec.levels),) * (k + 1):
        raise ValidationError(f"q must be a {(len(spec.levels),) * (k + 1)} table")
    if abs(q.sum() - 1.0) > 1e-9 or (q < -1e-12).any():
        raise ValidationError("q must be a probability table")
    if k >= 1:
        left = q.sum(axis=k)
        right = q.sum(axis=0)
        if np.max(np.abs(left - right)) > 1e-9:
            raise ValidationError("window marginals are not shift-consistent")
    x = np.asarray(spec.levels)
    mean = float(np.tensordot(q.sum(axis=tuple(range(1, k + 1))) if k else q, x, axes=1))
    corr = np.empty(k + 1)
    for g in range(k + 1):
        axes = tuple(a for a in range(k + 1) if a not in (0, g))
        marg = q.sum(axis=axes) if axes else q
        if g == 0:
            corr[0] = float(marg @ (x * x)) if k else float(q @ (x * x))
        else:
            corr[g] = float(x @ marg @ x)
    h = spec.h
    quad = sum(h[i] * h[j] * corr[abs(i - j)] for i in range(k + 1) for j in range(k + 1))
    return float((quad - (h.sum() * mean) ** 2) / (4.0 * spec.sigma2))


def amplitude_response2(h: np.ndarray, omega) -> np.ndarray:
    """|H(e^{i omega})|^2 for scalar or vector omega."""
    h = np.asarray(h, dtype=float)
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    ph = np.exp(-1j * np.outer(om, np.arange(len(h))))
    out = np.abs(ph @ h) ** 2
    return out if np.ndim(omega) else float(out[0])


def spectral_bound(spec: IsiSpec, grid: int = 4096) -> tuple[float, float]:
    """Gamma * max_w |H|^2 / (4 sigma^2): grid scan over [0, pi] refined by
    golden section to 1e-10 in omega."""
    om = np.linspace(0.0, np.pi, grid)
    vals = amplitude_response2(spec.h, om)
    i = int(np.argmax(vals))
    lo = om[max(i - 1, 0)]
    hi = om[min(i + 1, grid - 1)]
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv * (b - a)
    e = a + inv * (b - a)
    fc = amplitude_response2(spec.h, c)
    fe = amplitude_response2(spec.h, e)
    while b - a > 1e-10:
        if fc >= fe:
            b, e, fe = e, c, fc
            c = b - inv * (b - a)
            fc = amplitude_response2(spec.h, c)
        else:
            a, c, fc = c, e, fe
            e = a + inv * (b - a)
            fe = amplitude_response2(spec.h, e)
    omega_star = 0.5 * (a + b)
    for snap in (0.0, np.pi):  # exact endpoints beat the bracket midpoint
        if abs(omega_star - snap) < 1e-6 and \
                amplitude_response2(spec.h, snap) >= amplitude_response2(spec.h, omega_star):
            omega_star = snap
    value = spec.gamma * amplitude_response2(spec.h, omega_star) / (4.0 * spec.sigma2)
    return float(value), float(omega_star)


def quantize_midrise(v, delta: float):
    """Uniform midrise quantizer with step delta: levels (i - 1/2) delta."""
    return delta * (np.floor(np.asarray(v) / delta) + 0.5)


@dataclass(frozen=True)
class TruncationConfig:
    max_m: int = 4096       # harmonics kept explicitly; the rest is tail mass
    rel_tol: float = 1e-12
    max_ell: int = 100_000  # Bessel-series reference only
    bessel_tol: float = 1e-12


def _phase_breakpoints(A: float, delta: float) -> np.ndarray:
    ks = np.arange(np.floor(-A / delta), np.floor(A / delta) + 1)
    ths = [0.0, 2.0 * np.pi]
    for k in ks:
        v = k * delta / A
        if -1.0 <= v <= 1.0:
            a = float(np.arcsin(v))
            ths.extend([a % (2 * np.pi), (np.pi - a) % (2 * np.pi)])
    return np.unique(np.asarray(ths))


def _phase_averages(A: float, delta: float) -> tuple[float, float, float]:
    """Exact (R_ee(0), R_xe(0), power) by piecewise closed-form integrals
    over the phase; valid for any frequency with equidistributing phase."""
    ths = _phase_breakpoints(A, delta)
    ree0 = rxe0 = power = 0.0
    for lo, hi in zip(ths[:-1], ths[1:]):
        mid = 0.5 * (lo + hi)
        c = float(quantize_midrise(A * np.sin(mid), delta))

        def ierr2(t):  # integral of (c - A sin t)^2
            return c * c * t + 2.0 * c * A * np.cos(t) + A * A * (t / 2.0 - np.sin(2.0 * t) / 4.0)

        def ixe(t):    # integral of A sin t * (c - A sin t)
            return -c * A * np.cos(t) - A * A * (t / 2.0 - np.sin(2.0 * t) / 4.0)

        ree0 += ierr2(hi) - ierr2(lo)
        rxe0 += ixe(hi) - ixe(lo)
        power += c * c * (hi - lo)
    tp = 2.0 * np.pi
    return ree0 / tp, rxe0 / tp, power / tp


def _error_harmonics(A: float, delta: float, max_m: int) -> np.ndarray:
    """|Fourier coefficient|^2 of e(theta) at odd order 2m-1, m = 1..max_m,
    by piecewise closed-form integration (the error has odd harmonics only)."""
    ths = _phase_breakpoints(A, delta)
    los, his = ths[:-1][None, :], ths[1:][None, :]
    cs = quantize_midrise(A * np.sin(0.5 * (los + his)), delta)
    orders = (2 * np.arange(1, max_m + 1) - 1).astype(float)[:, None]

    def int_exp(a, lo, hi):  # integral of e^{-i a theta}
        a = np.asarray(a, dtype=float)
        safe = np.where(a == 0, 1.0, a)
        out = (np.exp(-1j * a * hi) - np.exp(-1j * a * lo)) / (-1j * safe)
        return np.where(a == 0, (hi - lo) * np.ones_like(out), out)

    i_level = cs * int_exp(np.broadcast_to(orders, (max_m, los.shape[1])), los, his)
    i_sine = A / (2 * 1j) * (int_exp(orders - 1, los, his) - int_exp(orders + 1, los, his))
    coeff = (i_level - i_sine).sum(axis=1) / (2.0 * np.pi)
    return np.abs(coeff) ** 2


@dataclass(frozen=True, eq=False)
class QuantizedSinusoidStats:
    """Second-order statistics of x_t = Q[A sin(w0 t + phase)]."""

    A: float
    delta: float
    omega0: float
    B: float                 # R_xe(l) = A B cos(w0 l)
    eps: np.ndarray          # one-sided harmonic powers, m = 1..max_m
    lambdas: np.ndarray      # folded harmonic frequencies in [0, 1)
    tail_mass: float         # error power beyond the kept harmonics
    ree0: float
    rxe0: float
    power: float             # A^2/2 + 2 R_xe(0) + R_ee(0), computed exactly
    truncation: TruncationConfig

    def r_ee(self, lag: int) -> float:
        if lag == 0:
            return self.ree0
        return float(2.0 * (self.eps * np.cos(2.0 * np.pi * lag * self.lambdas)).sum())

    def r_xe(self, lag: int) -> float:
        return float(self.A * self.B * np.cos(self.omega0 * lag))

    @property
    def degraded(self) -> bool:
        return self.tail_mass > self.truncation.rel_tol * max(self.ree0, 1e-300)


def gray_stats(A: float, delta: float, omega0: float,
               truncation: TruncationConfig | None = None) -> QuantizedSinusoidStats:
    """Spectral decomposition of the quantization error of a sinusoid.

    eps_m sits at the folded frequency lambda_m = <(2m-1) w0 / 2pi>; the
    negative-m lines mirror the positive ones, so every correlation doubles
    the one-sided sum. R_ee(0), R_xe(0) and the power identity terms are
    exact phase averages; the unkept harmonic power is reported as tail
    mass (the harmonic powers decay like 1/m^2, so the explicit list alone
    converges slowly).
    """
    trunc = truncation or TruncationConfig()
    if A <= 0 or delta <= 0:
        raise ValidationError("A and delta must be positive")
    ree0, rxe0, power_q = _phase_averages(A, delta)
    eps = _error_harmonics(A, delta, trunc.max_m)
    m = np.arange(1, trunc.max_m + 1)
    lambdas = ((2 * m - 1) * omega0 / (2.0 * np.pi)) % 1.0
    tail = max(ree0 - 2.0 * float(eps.sum()), 0.0)
    return QuantizedSinusoidStats(float(A), float(delta), float(omega0),
                                  float(rxe0 / A), eps, lambdas, tail,
                                  float(ree0), float(rxe0), float(power_q), trunc)


@dataclass(frozen=True)
class LossReport:
    Lambda: float
    lower_bound: float
    h2_max: float
    power_used: float
    omega0: float


def quantization_loss(spec: IsiSpec, A: float, omega_star: float,
                      stats: QuantizedSinusoidStats) -> LossReport:
    """Exponent deficit of the quantized sinusoid: each error harmonic
    rides a non-optimal frequency, losing (H^2_max - |H|^2(lambda_m)) of
    gain; the unkept tail is spread uniformly (the folded frequencies
    equidistribute), worth H^2_max minus the mean response sum h_j^2.

    The achievable exponent uses the power the waveform actually carries,
    which the amplitude search drives to the budget."""
    h2max = float(amplitude_response2(spec.h, omega_star))
    resp = amplitude_response2(spec.h, 2.0 * np.pi * stats.lambdas)
    terms = np.maximum(h2max - resp, 0.0)
    lam = 2.0 * float((stats.eps * terms).sum())
    mean_resp = float((spec.h * spec.h).sum())
    lam += stats.tail_mass * max(h2max - mean_resp, 0.0)
    power = stats.power
    lower = (power * h2max - lam) / (4.0 * spec.sigma2)
    return LossReport(float(lam), float(lower), h2max, float(power), stats.omega0)


def power_identity_check(A: float, delta: float, omega0: float,
                         n_samples: int = 10 ** 6, phase: float = 0.0) -> dict:
    """Time-average power of the quantized sinusoid against the
    decomposition A^2/2 + 2 R_xe(0) + R_ee(0)."""
    t = np.arange(1, n_samples + 1, dtype=float)
    x = quantize_midrise(A * np.sin(omega0 * t + phase), delta)
    emp = float(np.mean(x * x))
    ree0, rxe0, _ = _phase_averages(A, delta)
    series = A * A / 2.0 + 2.0 * rxe0 + ree0
    rel = abs(emp - series) / max(abs(series), 1e-300)
    return {"empirical": emp, "decomposition": series, "rel_error": rel,
            "A": A, "delta": delta, "omega0": omega0, "phase": phase,
            "n_samples": n_samples}


def choose_amplitude(gamma: float, delta: float, max_level: float,
                     tol: float = 1e-10) -> float:
    """Largest A <= max_level whose quantized power stays within gamma,
    by bisection on the exact phase-average power (nondecreasing in A)."""
    def power(a):
        return _phase_averages(a, delta)[2]

    if power(max_level) <= gamma:
        return float(max_level)
    lo, hi = delta * 1e-6, max_level
    if power(lo) > gamma:
        raise InfeasibleError(
            f"power budget {gamma:g} below the smallest quantizer level power")
    while hi - lo > tol * max_level:
        mid = 0.5 * (lo + hi)
        if power(mid) <= gamma:
            lo = mid
        else:
            hi = mid
    return float(lo)


def irrationalize(omega: float, denominator_cap: int = 64) -> tuple[float, bool]:
    """Nudge frequencies that are small-denominator rational multiples of
    2 pi (including 0 and pi) off the resonance: omega +- 2 pi sqrt(2) 1e-3,
    keeping the result inside (0, pi)."""
    frac = omega / (2.0 * np.pi)
    rational = any(abs(frac * q - round(frac * q)) < 1e-9 for q in range(1, denominator_cap + 1))
    if not rational:
        return float(omega), False
    step = 2.0 * np.pi * np.sqrt(2.0) * 1e-3
    nudged = omega + step if omega < np.pi / 2 else omega - step
    return float(min(max(nudged, step), np.pi - step)), True


def bessel_j_simpson(order: int, z: float, tol: float = 1e-12) -> float:
    """J_order(z) = (1/pi) integral_0^pi cos(order t - z sin t) dt by
    adaptive Simpson; reference implementation for the series formulas."""
    def f(t):
        return np.cos(order * t - z * np.sin(t)) / np.pi

    def simpson(a, fa, fm, fb, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, eps, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(a, fa, flm, fm, m)
        right = simpson(m, fm, frm, fb, b)
        if depth > 48 or abs(left + right - whole) < 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, m, fa, flm, fm, left, eps / 2.0, depth + 1)
                + rec(m, b, fm, frm, fb, right, eps / 2.0, depth + 1))

    # oscillatory integrand: split once per expected oscillation
    n_seg = max(8, int(abs(z) + abs(order)) // 2)
    xs = np.linspace(0.0, np.pi, n_seg + 1)
    total = 0.0
    for lo, hi in zip(xs[:-1], xs[1:]):
        flo, fhi = f(lo), f(hi)
        fmid = f(0.5 * (lo + hi))
        whole = simpson(lo, flo, fmid, fhi, hi)
        total += rec(lo, hi, flo, fmid, fhi, whole, tol / n_seg, 0)
    return float(total)


def eps_bessel_series(m: int, A: float, delta: float,
                      truncation: TruncationConfig | None = None) -> float:
    """The classical series eps_m = [ (delta/pi) sum_l J_{2m-1}(2 pi l A/delta)/l ]^2.

    Slow reference: the series converges like l^{-3/2} with oscillation, so
    it is truncated at max_ell and cross-checked against the exact harmonic
    in tests rather than used in production."""
    trunc = truncation or TruncationConfig()
    ell = np.arange(1, trunc.max_ell + 1, dtype=float)
    s = float((jv(2 * m - 1, 2.0 * np.pi * ell * A / delta) / ell).sum())
    return (delta / np.pi * s) ** 2


def b_bessel_series(A: float, delta: float,
                    truncation: TruncationConfig | None = None) -> float:
    """B = (delta/pi) sum_m J_1(2 pi m A/delta)/m (reference; the exact
    value is R_xe(0)/A from the phase average)."""
    trunc = truncation or TruncationConfig()
    ell = np.arange(1, trunc.max_ell + 1, dtype=float)
    return float(delta / np.pi * (jv(1, 2.0 * np.pi * ell * A / delta) / ell).sum())
