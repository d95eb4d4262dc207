"""Special functions, series and root finding used by the analytic model.

Everything here is a pure function of its arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_GAMMA_ITER = 100_000


class DomainError(ValueError):
    """Argument outside the domain of a numerical routine."""


class ConvergenceError(ArithmeticError):
    """An iterative routine hit its iteration cap."""


class BracketError(ValueError):
    """Root-finding interval does not contain a sign change."""


@dataclass(frozen=True)
class SeriesControl:
    """Truncation control for the exponential-sum series."""

    rel_tol: float = 1e-10
    abs_floor: float = 1e-300
    max_terms: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise DomainError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.abs_floor < 0.0:
            raise DomainError(f"abs_floor must be >= 0, got {self.abs_floor}")
        if int(self.max_terms) != self.max_terms or self.max_terms < 1:
            raise DomainError(f"max_terms must be a positive integer, got {self.max_terms}")


DEFAULT_CONTROL = SeriesControl()


@dataclass(frozen=True)
class ExponentialMixture:
    """Independent exponential summands grouped by mean.

    ``multiplicities[i]`` summands have mean ``scales[i]``.
    """

    scales: tuple[float, ...]
    multiplicities: tuple[int, ...]

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        mults = tuple(int(m) for m in self.multiplicities)
        if len(scales) != len(mults):
            raise DomainError("scales and multiplicities must have equal length")
        for s in scales:
            if not (math.isfinite(s) and s > 0.0):
                raise DomainError(f"scales must be finite and positive, got {s}")
        for m, m_raw in zip(mults, self.multiplicities):
            if m < 0 or m != m_raw:
                raise DomainError(f"multiplicities must be non-negative integers, got {m_raw}")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "multiplicities", mults)

    @property
    def total(self) -> int:
        return sum(self.multiplicities)

    def merged(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct scales (ascending) and their summed multiplicities; empty slots dropped."""
        acc: dict[float, int] = {}
        for s, m in zip(self.scales, self.multiplicities):
            if m:
                acc[s] = acc.get(s, 0) + m
        keys = sorted(acc)
        return np.array(keys, dtype=float), np.array([acc[k] for k in keys], dtype=np.int64)


def _check_gamma_args(x: float, a: float) -> None:
    if not (math.isfinite(x) and math.isfinite(a)):
        raise DomainError(f"non-finite argument: x={x}, a={a}")
    if x < 0.0:
        raise DomainError(f"x must be >= 0, got {x}")
    if a <= 0.0:
        raise DomainError(f"a must be > 0, got {a}")


def _gamma_series(x: float, a: float) -> float:
    # p(x, a) = x^a e^-x / Gamma(a+1) * sum_k x^k / ((a+1)...(a+k))
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(_MAX_GAMMA_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            break
    else:
        raise ConvergenceError(f"incomplete gamma series did not converge (x={x}, a={a})")
    log_prefix = a * math.log(x) - x - math.lgamma(a + 1.0)
    return total * math.exp(log_prefix)


def _gamma_cont_frac(x: float, a: float) -> float:
    # Upper regularized gamma q(x, a) by modified Lentz.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_GAMMA_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ConvergenceError(f"incomplete gamma continued fraction did not converge (x={x}, a={a})")
    return math.exp(a * math.log(x) - x - math.lgamma(a)) * h


def reg_lower_gamma(x: float, a: float) -> float:
    """Regularized lower incomplete gamma function p(x, a).

    Series for ``x < a + 1``, continued fraction for the complement otherwise.
    """
    x = float(x)
    a = float(a)
    _check_gamma_args(x, a)
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(x, a))
    return max(0.0, 1.0 - _gamma_cont_frac(x, a))


def reg_upper_gamma(x: float, a: float) -> float:
    """Regularized upper incomplete gamma function q(x, a) = 1 - p(x, a)."""
    x = float(x)
    a = float(a)
    _check_gamma_args(x, a)
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(x, a))
    return min(1.0, _gamma_cont_frac(x, a))


def exp_sum_cdf(mix: ExponentialMixture, x: float, ctl: SeriesControl = DEFAULT_CONTROL) -> float:
    """CDF at ``x`` of a sum of independent exponentials with the given means.

    Uses the single-gamma series around the smallest mean ``b``::

        F(x) = C * sum_k delta_k * p(x / b, r + k)

    with ``C = prod (b / b_i)^m_i``, ``g_l = sum m_i (1 - b / b_i)^l`` and
    ``delta_{k+1} = sum_{l=1}^{k+1} g_l delta_{k+1-l} / (k + 1)``.
    """
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise DomainError(f"x must be finite and >= 0, got {x}")
    scales, mults = mix.merged()
    r = int(mults.sum()) if len(mults) else 0
    if r < 1:
        raise DomainError("mixture has no summands")
    if x == 0.0:
        return 0.0
    if len(scales) == 1:
        if r == 1:
            return -math.expm1(-x / scales[0])
        return reg_lower_gamma(x / scales[0], r)

    b_min = scales[0]
    ratio = b_min / scales
    log_c = float(np.sum(mults * np.log(ratio)))
    eps = 1.0 - ratio
    y = x / b_min

    kmax = ctl.max_terms
    g = np.zeros(kmax + 1)
    delta = np.zeros(kmax + 1)
    delta[0] = 1.0
    power = np.ones_like(eps)

    total = reg_lower_gamma(y, r)
    prev_inc = total
    small_run = 0
    for k in range(1, kmax + 1):
        power *= eps
        g[k] = float(np.dot(mults, power))
        delta[k] = float(np.dot(g[1:k + 1], delta[k - 1::-1])) / k
        inc = delta[k] * reg_lower_gamma(y, r + k)
        total += inc
        # increments at the underflow floor count as small, so tiny x cannot stall the loop
        limit = max(ctl.rel_tol * total, ctl.abs_floor)
        if inc <= limit:
            small_run += 1
        else:
            small_run = 0
        if small_run >= 3 and k >= r:
            # Increments are unimodal in k, so a shrinking ratio bounds the tail geometrically.
            q = inc / prev_inc if prev_inc > 0.0 else 0.0
            if q < 1.0 and inc * q / (1.0 - q) <= limit:
                break
        prev_inc = inc
    else:
        raise ConvergenceError(
            f"exponential-sum series not converged after {kmax} terms (x={x}, scales={tuple(scales)})"
        )
    if total <= 0.0:
        return 0.0
    return min(1.0, math.exp(log_c + math.log(total)))


def bisect_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-13,
    rel_tol: float = 0.0,
) -> float:
    """Root of ``f`` inside ``[lo, hi]`` by bisection.

    Stops once the bracket is narrower than ``tol``, or narrower than
    ``rel_tol`` times the smallest magnitude in the bracket when that is larger.
    """
    if not lo < hi:
        raise BracketError(f"need lo < hi, got [{lo}, {hi}]")
    if tol <= 0.0 or rel_tol < 0.0:
        raise DomainError(f"need tol > 0 and rel_tol >= 0, got {tol}, {rel_tol}")
    f_lo = f(lo)
    f_hi = f(hi)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)):
        raise DomainError(f"non-finite function value at bracket ends: f(lo)={f_lo}, f(hi)={f_hi}")
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0.0) == (f_hi > 0.0):
        raise BracketError(f"f(lo)={f_lo} and f(hi)={f_hi} have the same sign")
    lo_positive = f_lo > 0.0
    def wide() -> bool:
        floor = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
        return hi - lo > max(tol, rel_tol * floor)

    while wide():
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = f(mid)
        if not math.isfinite(f_mid):
            raise DomainError(f"non-finite function value at x={mid}")
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == lo_positive:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def power_iteration(
    A: np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 1_000_000,
) -> tuple[float, np.ndarray]:
    """Perron root and eigenvector of a non-negative matrix.

    The iteration runs on ``A + s I`` with ``s`` the largest column sum, which
    leaves the Perron vector unchanged and removes periodicity. Stops when both
    the eigenvalue estimate and the normalised vector change by less than
    ``tol`` (relative) between iterations; for stochastic matrices the
    eigenvalue is exact from the first step, so the vector test is the binding
    one. The eigenvector is scaled to sum to one.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    if np.any(A < 0.0) or not np.all(np.isfinite(A)):
        raise DomainError("matrix must be finite and non-negative")
    size = A.shape[0]
    shift = float(A.sum(axis=0).max())
    if shift == 0.0:
        return 0.0, np.full(size, 1.0 / size)
    B = A + shift * np.eye(size)
    v = np.full(size, 1.0 / size)
    lam = math.nan
    for _ in range(max_iter):
        w = B @ v
        norm = w.sum()
        lam_new = norm - shift
        w /= norm
        settled = float(np.max(np.abs(w - v))) <= tol * float(np.max(np.abs(w)))
        if settled and math.isfinite(lam) and abs(lam_new - lam) <= tol * max(abs(lam_new), _TINY):
            return max(float(lam_new), 0.0), w
        lam = lam_new
        v = w
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def logsumexp(values: Sequence[float] | np.ndarray) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return -math.inf
    top = float(arr.max())
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.exp(arr - top).sum()))
