"""Markov model of the HARQ chase-combining queue.

State ``m`` means the head-of-line packet has failed ``m`` attempts. A packet
is decoded at attempt ``m`` when the combined SNR of its ``m`` copies reaches
the decode threshold ``kappa``; each copy sees an independent scenario and
Rayleigh block fade, so the combined SNR is a sum of exponentials whose means
depend on the scenario history.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .channel import SensingProfile, SystemParams, scenario_profile
from .numerics import DEFAULT_CONTROL, ExponentialMixture, SeriesControl, exp_sum_cdf

_RATIO_TOL = 1e-9


class Weighting(enum.Enum):
    """How per-history failure ratios are averaged into ``p_m``.

    POSTERIOR conditions the history on the ``m`` failures already observed,
    giving the exact conditional failure probability. PRIOR averages the
    per-history ratios with unconditioned history probabilities.
    """

    POSTERIOR = "posterior"
    PRIOR = "prior"


@dataclass(frozen=True)
class ScenarioHistory:
    """Number of past frames spent in each of the four scenarios."""

    counts: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.counts) != 4 or any(c < 0 for c in self.counts):
            raise ValueError(f"counts must be four non-negative integers, got {self.counts}")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def bump(self, j: int) -> "ScenarioHistory":
        c = list(self.counts)
        c[j] += 1
        return ScenarioHistory(tuple(c))

    def log_weight(self, q) -> float:
        """Log multinomial probability of this history; -inf if impossible."""
        out = math.lgamma(self.total + 1)
        for c, qi in zip(self.counts, q):
            if c:
                if qi <= 0.0:
                    return -math.inf
                out += c * math.log(qi) - math.lgamma(c + 1)
        return out


def histories(m: int) -> Iterator[ScenarioHistory]:
    """All compositions of ``m`` into four parts, lexicographic."""
    for a in range(m + 1):
        for b in range(m - a + 1):
            for c in range(m - a - b + 1):
                yield ScenarioHistory((a, b, c, m - a - b - c))


@dataclass
class HarqChain:
    p: np.ndarray
    phi: np.ndarray
    pi: np.ndarray
    p_lost: float
    service_rate_bcu: float
    goodput_bcu: float

    @property
    def M(self) -> int:
        return len(self.p)


class _FailureCdf:
    """Memoised ``F(kappa; history)`` for one profile."""

    def __init__(self, profile: SensingProfile, sigma_h2: float, ctl: SeriesControl):
        self.kappa = profile.kappa
        self.scales = tuple(float(s) for s in profile.scales(sigma_h2))
        self.ctl = ctl
        self._cache: dict[tuple[int, ...], float] = {}

    def __call__(self, h: ScenarioHistory) -> float:
        key = h.counts
        hit = self._cache.get(key)
        if hit is None:
            mix = ExponentialMixture(self.scales, key)
            hit = exp_sum_cdf(mix, self.kappa, self.ctl)
            self._cache[key] = hit
        return hit


def _small_kappa_ratio(profile: SensingProfile, sigma_h2: float, m: int) -> float:
    # Leading term of F(h + e_j) / F(h) as kappa -> 0 is kappa / ((m + 1) * scale_j).
    scales = profile.scales(sigma_h2)
    return profile.kappa * float(np.dot(profile.q, 1.0 / scales)) / (m + 1)


def _clamp(value: float, what: str) -> float:
    if value < -_RATIO_TOL or value > 1.0 + _RATIO_TOL:
        raise ArithmeticError(f"{what} = {value} outside [0, 1] beyond tolerance")
    return min(1.0, max(0.0, value))


def p0(profile: SensingProfile, sigma_h2: float) -> float:
    """Failure probability of a first attempt."""
    if profile.kappa == 0.0:
        return 0.0
    survive = sum(q * math.exp(-profile.kappa / (z * sigma_h2)) for q, z in zip(profile.q, profile.zeta))
    return _clamp(1.0 - survive, "p0")


def pm(
    m: int,
    profile: SensingProfile,
    sigma_h2: float,
    ctl: SeriesControl = DEFAULT_CONTROL,
    weighting: Weighting = Weighting.POSTERIOR,
    _cdf: _FailureCdf | None = None,
) -> float:
    """Probability that attempt ``m + 1`` fails given the first ``m`` failed."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if profile.kappa == 0.0:
        return 0.0
    cdf = _cdf if _cdf is not None else _FailureCdf(profile, sigma_h2, ctl)
    q = profile.q
    fallback = _small_kappa_ratio(profile, sigma_h2, m)

    num_total = 0.0
    den_total = 0.0
    prior_sum = 0.0
    for h in histories(m):
        lw = h.log_weight(q)
        if lw == -math.inf:
            continue
        w = math.exp(lw)
        den = cdf(h)
        num = sum(qj * cdf(h.bump(j)) for j, qj in enumerate(q) if qj > 0.0)
        if num > den * (1.0 + _RATIO_TOL) + ctl.abs_floor:
            raise ArithmeticError(f"history {h.counts}: numerator {num} exceeds denominator {den}")
        num_total += w * num
        den_total += w * den
        if den > ctl.abs_floor:
            prior_sum += w * num / den
        elif fallback >= ctl.abs_floor:
            prior_sum += w * fallback

    if weighting is Weighting.PRIOR:
        return _clamp(prior_sum, f"p_{m}")
    if den_total <= ctl.abs_floor:
        return _clamp(fallback if fallback >= ctl.abs_floor else 0.0, f"p_{m}")
    return _clamp(num_total / den_total, f"p_{m}")


def transition_matrix(p) -> np.ndarray:
    """Column-stochastic matrix; column ``m`` holds the moves out of state ``m``."""
    p = np.asarray(p, dtype=float)
    M = len(p)
    phi = np.zeros((M, M))
    phi[0, :] = 1.0 - p
    phi[0, M - 1] = 1.0
    for m in range(M - 1):
        phi[m + 1, m] = p[m]
    return phi


def steady_state(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    M = len(p)
    pi = np.ones(M)
    for m in range(1, M):
        pi[m] = pi[m - 1] * p[m - 1]
    return pi / pi.sum()


def failure_probabilities(
    profile: SensingProfile,
    sigma_h2: float,
    M: int,
    ctl: SeriesControl = DEFAULT_CONTROL,
    weighting: Weighting = Weighting.POSTERIOR,
) -> np.ndarray:
    cdf = _FailureCdf(profile, sigma_h2, ctl)
    out = [p0(profile, sigma_h2)]
    out.extend(pm(m, profile, sigma_h2, ctl, weighting, _cdf=cdf) for m in range(1, M))
    return np.array(out)


def chain_from_p(p, n: int, T: float, B: float) -> HarqChain:
    p = np.asarray(p, dtype=float)
    pi = steady_state(p)
    p_lost = float(np.prod(p))
    service = float(pi[0]) * n / (T * B)
    return HarqChain(
        p=p,
        phi=transition_matrix(p),
        pi=pi,
        p_lost=p_lost,
        service_rate_bcu=service,
        goodput_bcu=service * (1.0 - p_lost),
    )


def build_chain(
    params: SystemParams,
    profile: SensingProfile | None = None,
    ctl: SeriesControl = DEFAULT_CONTROL,
    weighting: Weighting = Weighting.POSTERIOR,
) -> HarqChain:
    if profile is None:
        profile = scenario_profile(params)
    p = failure_probabilities(profile, params.sigma_h2, params.M, ctl, weighting)
    return chain_from_p(p, params.n, params.T, params.B)


def throughput_metrics(chain: HarqChain, params: SystemParams) -> dict[str, float]:
    """Service and goodput rates in bits per channel use and bits per second."""
    return {
        "service_rate_bcu": chain.service_rate_bcu,
        "goodput_bcu": chain.goodput_bcu,
        "service_rate_bps": chain.service_rate_bcu * params.B,
        "goodput_bps": chain.goodput_bcu * params.B,
    }
