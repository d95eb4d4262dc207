"""Effective capacity of the HARQ service process.

Each packet occupies the channel for a random number of frames ``L`` in
``1..M`` and releases ``n`` bits when it leaves. The effective capacity is
``-ln(chi) / (theta T)`` where ``chi`` is the positive root of

    f(chi) = chi^M - e^{-theta n} sum_L Pr{L} chi^{M-L}

Two forms of the constant term are supported; see :class:`Variant`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .harq import transition_matrix
from .numerics import BracketError, bisect_root, logsumexp, power_iteration

ROOT_TOL = 1e-13


class Variant(enum.Enum):
    """Constant term of the characteristic polynomial.

    RENEWAL_COMPLETE uses ``prod_{j<M-1} p_j`` (the probability that a packet
    reaches its last attempt), so the branch probabilities sum to one.
    PAPER_VERBATIM uses ``prod_{j<M} p_j``.
    """

    PAPER_VERBATIM = "paper"
    RENEWAL_COMPLETE = "renewal"


@dataclass(frozen=True)
class EffCapResult:
    theta: float
    chi_star: float
    log_chi_star: float
    eff_cap_bps: float
    eff_cap_bcu: float
    variant: Variant


def _branches(p, variant: Variant) -> tuple[np.ndarray, np.ndarray]:
    """Branch weights and the power of chi each multiplies (after the e^{-theta n} factor)."""
    p = np.asarray(p, dtype=float)
    M = len(p)
    if M < 1:
        raise ValueError("p must have at least one entry")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("failure probabilities must lie in [0, 1]")
    if M == 1:
        return np.array([1.0]), np.array([0])
    survive = np.concatenate(([1.0], np.cumprod(p)))  # survive[m] = prod_{j<m} p_j
    weights = [(1.0 - p[m]) * survive[m] for m in range(M - 1)]
    powers = [M - 1 - m for m in range(M - 1)]
    last = survive[M] if variant is Variant.PAPER_VERBATIM else survive[M - 1]
    weights.append(last)
    powers.append(0)
    return np.array(weights), np.array(powers)


def char_poly(chi: float, p, n: int, theta: float, variant: Variant = Variant.RENEWAL_COMPLETE) -> float:
    """Evaluate ``f(chi)``. For ``M = 1`` both variants reduce to ``chi - e^{-theta n}``."""
    weights, powers = _branches(p, variant)
    M = len(np.asarray(p))
    return chi**M - math.exp(-theta * n) * float(np.sum(weights * chi**powers.astype(float)))


def _log_residual(u: float, weights: np.ndarray, powers: np.ndarray, M: int, theta_n: float) -> float:
    # sign(f(e^u)) == sign(M u + theta n - ln sum_L w_L e^{(M-L) u})
    mask = weights > 0.0
    return M * u + theta_n - logsumexp(np.log(weights[mask]) + powers[mask] * u)


def effective_capacity(
    p,
    n: int,
    T: float,
    theta: float,
    variant: Variant = Variant.RENEWAL_COMPLETE,
    B: float = 1.0,
) -> EffCapResult:
    """Solve ``f(chi) = 0`` on ``(0, 1]`` by bisection in ``ln chi``.

    Working in ``ln chi`` keeps the root resolvable when ``e^{-theta n}``
    underflows. The bracket is closed to a relative width of 1e-13 in
    ``ln chi``, so the rate keeps full precision even as ``theta -> 0``.
    """
    if not theta > 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    weights, powers = _branches(p, variant)
    if not np.any(weights > 0.0):
        raise BracketError("all branch weights vanish; f has no positive root")
    M = len(np.asarray(p))
    theta_n = theta * n
    if theta_n == 0.0:
        total = float(weights.sum())
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-15):
            raise BracketError(f"n = 0 with branch mass {total}: no root at chi = 1")
        return EffCapResult(theta, 1.0, 0.0, 0.0, 0.0, variant)

    def g(u: float) -> float:
        return _log_residual(u, weights, powers, M, theta_n)

    hi = 0.0
    if g(hi) <= 0.0:
        raise BracketError(f"f(1) <= 0 for p={list(p)}, variant={variant.value}")
    lo = -1.0
    for _ in range(2000):
        if g(lo) < 0.0:
            break
        lo *= 2.0
        if not math.isfinite(lo):
            break
    else:
        lo = -math.inf
    if not (math.isfinite(lo) and g(lo) < 0.0):
        raise BracketError("could not bracket the root of f from below")
    u_star = bisect_root(g, lo, hi, tol=1e-300, rel_tol=ROOT_TOL)
    rate = -u_star / (theta * T)
    return EffCapResult(
        theta=theta,
        chi_star=math.exp(u_star),
        log_chi_star=u_star,
        eff_cap_bps=rate,
        eff_cap_bcu=rate / B,
        variant=variant,
    )


def weighted_transition_matrix(p, n: int, theta: float) -> np.ndarray:
    """Transition matrix with every move into state 0 scaled by ``e^{-theta n}``."""
    phi = transition_matrix(p)
    phi[0, :] *= math.exp(-theta * n)
    return phi


def spectral_oracle(p, n: int, theta: float) -> float:
    """Spectral radius of the service-weighted transition matrix."""
    if not theta > 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    rho, _ = power_iteration(weighted_transition_matrix(p, n, theta), tol=1e-13, max_iter=1_000_000)
    return rho


def effcap_vs_theta_curve(
    p,
    n: int,
    T: float,
    theta_grid,
    variant: Variant = Variant.RENEWAL_COMPLETE,
    B: float = 1.0,
) -> list[EffCapResult]:
    grid = [float(t) for t in theta_grid]
    if not grid or any(t <= 0.0 for t in grid):
        raise ValueError("theta grid must be non-empty and strictly positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("theta grid must be strictly ascending")
    curve = [effective_capacity(p, n, T, t, variant, B) for t in grid]
    for a, b in zip(curve, curve[1:]):
        if b.eff_cap_bps > a.eff_cap_bps * (1.0 + 1e-9) + 1e-9:
            raise ArithmeticError(
                f"effective capacity increased from theta={a.theta} to theta={b.theta}"
            )
    return curve
