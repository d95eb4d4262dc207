"""System parameters and the sensing/scenario profile derived from them."""
from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, fields

import numpy as np

from .numerics import reg_lower_gamma

# Scenario order: (busy, sensed busy), (busy, sensed idle), (idle, sensed busy), (idle, sensed idle).
SCENARIOS = ("busy/detected", "busy/missed", "idle/false-alarm", "idle/correct")


class ParameterError(ValueError):
    """Invalid system parameter; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _is_integral(value: float, rel: float = 1e-9) -> bool:
    return abs(value - round(value)) <= rel * max(1.0, abs(value))


@dataclass(frozen=True)
class SystemParams:
    """Full description of one operating point.

    Powers ``P_b``/``P_i`` are linear average powers (per second of signal,
    so the per-symbol power is ``P / B``). ``theta`` is in 1/bit.
    """

    T: float
    N: float
    B: float
    rho: float
    sigma_w2: float
    sigma_s2: float
    sigma_h2: float
    P_b: float
    P_i: float
    lam: float
    n: int
    M: int
    theta: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, numbers.Real) or isinstance(value, bool) or not math.isfinite(value):
                raise ParameterError(f.name, f"must be a finite number, got {value!r}")
        if self.T <= 0.0:
            raise ParameterError("T", "frame duration must be positive")
        if not 0.0 < self.N < self.T:
            raise ParameterError("N", f"sensing duration must satisfy 0 < N < T (N={self.N}, T={self.T})")
        if self.B <= 0.0:
            raise ParameterError("B", "bandwidth must be positive")
        nb = self.N * self.B
        if not _is_integral(nb) or round(nb) < 1:
            raise ParameterError("N", f"N*B must be a positive integer sample count, got {nb}")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError("rho", "activity probability must lie in [0, 1]")
        for name in ("sigma_w2", "sigma_s2", "sigma_h2"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(name, "variance must be positive")
        if self.P_b <= 0.0:
            raise ParameterError("P_b", "busy power must be positive")
        if self.P_i < self.P_b:
            raise ParameterError("P_i", "idle power must be >= busy power")
        if self.lam < 0.0:
            raise ParameterError("lam", "detection threshold must be >= 0")
        if self.n < 0 or not _is_integral(self.n, 0.0):
            raise ParameterError("n", f"packet size must be a non-negative integer, got {self.n}")
        if self.M < 1 or not _is_integral(self.M, 0.0):
            raise ParameterError("M", f"deadline must be an integer >= 1, got {self.M}")
        if self.theta < 0.0:
            raise ParameterError("theta", "QoS exponent must be >= 0")
        for f in fields(self):
            cast = int if f.name in ("n", "M") else float
            object.__setattr__(self, f.name, cast(getattr(self, f.name)))

    @classmethod
    def from_db(cls, *, power_busy_db: float, power_idle_db: float, **kw) -> "SystemParams":
        """Build from per-symbol SNRs ``10 log10(P / (B sigma_w2))`` in dB."""
        scale = kw["B"] * kw["sigma_w2"]
        return cls(P_b=scale * db_to_linear(power_busy_db), P_i=scale * db_to_linear(power_idle_db), **kw)

    @property
    def samples(self) -> int:
        """Sensing sample count N*B."""
        return int(round(self.N * self.B))

    @property
    def data_symbols(self) -> float:
        """Symbols per frame available for data, (T - N) B."""
        return (self.T - self.N) * self.B

    def replace(self, **changes) -> "SystemParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SystemParams(**values)


@dataclass(frozen=True)
class SensingProfile:
    p_f: float
    p_d: float
    q: tuple[float, float, float, float]
    zeta: tuple[float, float, float, float]
    kappa: float

    def scales(self, sigma_h2: float) -> np.ndarray:
        """Mean received SNR per scenario, ``zeta_i * sigma_h2``."""
        return np.asarray(self.zeta, dtype=float) * sigma_h2


def false_alarm_prob(params: SystemParams) -> float:
    nb = params.samples
    return 1.0 - reg_lower_gamma(nb * params.lam / params.sigma_w2, nb)


def detection_prob(params: SystemParams) -> float:
    nb = params.samples
    return 1.0 - reg_lower_gamma(nb * params.lam / (params.sigma_w2 + params.sigma_s2), nb)


def decode_threshold(n: int, data_symbols: float) -> float:
    """SNR an accumulated packet must reach: ``2^(n / symbols) - 1``."""
    return math.expm1(n * math.log(2.0) / data_symbols)


def scenario_snrs(params: SystemParams) -> tuple[float, float, float, float]:
    busy = params.sigma_w2 + params.sigma_s2
    idle = params.sigma_w2
    pb = params.P_b / params.B
    pi = params.P_i / params.B
    return (pb / busy, pi / busy, pb / idle, pi / idle)


def scenario_profile(params: SystemParams) -> SensingProfile:
    p_f = false_alarm_prob(params)
    p_d = detection_prob(params)
    rho = params.rho
    q = (rho * p_d, rho * (1.0 - p_d), (1.0 - rho) * p_f, (1.0 - rho) * (1.0 - p_f))
    return SensingProfile(
        p_f=p_f,
        p_d=p_d,
        q=q,
        zeta=scenario_snrs(params),
        kappa=decode_threshold(params.n, params.data_symbols),
    )
