"""Frame-level Monte Carlo of the sensing + HARQ-CC link.

Each batch is an independent replica simulated with its own Philox stream
keyed by ``(seed, batch index)``, so results do not depend on how batches are
split across worker processes. Within a process, batches advance together as
lanes of numpy arrays.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemParams, scenario_profile

_LOG_SAFE = 700.0
_MAX_LOG_SPREAD = 1.0
_CHUNK_LANES = 256
_BOOTSTRAP_STREAM = 2**63 - 1
_BOOTSTRAP_REPS = 2000


class SensingMode(enum.Enum):
    STATISTICAL = "statistical"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class SimConfig:
    frames: int = 1_000_000
    seed: int = 1
    sensing_mode: SensingMode = SensingMode.STATISTICAL
    batches: int = 100
    theta_grid: tuple[float, ...] = ()
    warmup: int = 64

    def __post_init__(self):
        if self.batches < 2:
            raise ValueError(f"batches must be >= 2, got {self.batches}")
        if self.frames < self.batches:
            raise ValueError(f"frames ({self.frames}) must be at least batches ({self.batches})")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if any(t <= 0.0 for t in self.theta_grid):
            raise ValueError("theta_grid entries must be positive")
        object.__setattr__(self, "sensing_mode", SensingMode(self.sensing_mode))
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))

    @property
    def batch_frames(self) -> int:
        return self.frames // self.batches


@dataclass
class Estimate:
    value: float
    stderr: float

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr}


@dataclass
class EffCapEstimate:
    theta: float
    eff_cap_bps: float
    eff_cap_bcu: float
    ci_low_bps: float
    ci_high_bps: float
    batch_frames: int
    n_batches: int
    reduced: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SimReport:
    frames: int
    batches: int
    seed: int
    sensing_mode: str
    est_pf: Estimate
    est_pd: Estimate
    est_p: list[Estimate]
    attempts: list[int]
    est_pi: list[Estimate]
    est_p_lost: Estimate
    est_service_bcu: Estimate
    est_goodput_bcu: Estimate
    packets_served: int
    est_effcap: list[EffCapEstimate] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "frames": self.frames,
            "batches": self.batches,
            "seed": self.seed,
            "sensing_mode": self.sensing_mode,
            "packets_served": self.packets_served,
            "est_pf": self.est_pf.as_dict(),
            "est_pd": self.est_pd.as_dict(),
            "est_p": [e.as_dict() for e in self.est_p],
            "attempts": list(self.attempts),
            "est_pi": [e.as_dict() for e in self.est_pi],
            "est_p_lost": self.est_p_lost.as_dict(),
            "est_service_bcu": self.est_service_bcu.as_dict(),
            "est_goodput_bcu": self.est_goodput_bcu.as_dict(),
            "est_effcap": [e.as_dict() for e in self.est_effcap],
        }


@dataclass
class BatchCounts:
    """Raw per-batch tallies; one row per batch."""

    active: np.ndarray
    busy_active: np.ndarray
    idle: np.ndarray
    busy_idle: np.ndarray
    attempts: np.ndarray  # (batches, M)
    failures: np.ndarray  # (batches, M)
    served: np.ndarray
    lost: np.ndarray
    service_frames: np.ndarray  # (batches, batch_frames) bool

    @classmethod
    def concat(cls, parts: list["BatchCounts"]) -> "BatchCounts":
        return cls(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in cls.__dataclass_fields__})


def _lane_rng(seed: int, lane: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, lane], dtype=np.uint64)))


def _draw_lane(params: SystemParams, mode: SensingMode, p_f: float, p_d: float, zeta: np.ndarray,
               rng: np.random.Generator, frames: int):
    active = rng.random(frames) < params.rho
    if mode is SensingMode.STATISTICAL:
        busy = rng.random(frames) < np.where(active, p_d, p_f)
    else:
        nb = params.samples
        noise = rng.standard_normal((frames, nb, 2)) * math.sqrt(params.sigma_w2 / 2.0)
        signal = rng.standard_normal((frames, nb, 2)) * math.sqrt(params.sigma_s2 / 2.0)
        y = noise + signal * active[:, None, None]
        energy = (y**2).sum(axis=2).mean(axis=1)
        busy = energy > params.lam
    fade = rng.exponential(params.sigma_h2, frames)
    scenario = np.where(active, np.where(busy, 0, 1), np.where(busy, 2, 3))
    return active, busy, zeta[scenario] * fade


def _run_lanes(params: SystemParams, cfg: SimConfig, lanes: range) -> BatchCounts:
    profile = scenario_profile(params)
    zeta = np.asarray(profile.zeta)
    kappa = profile.kappa
    M = params.M
    tb = cfg.batch_frames
    total = cfg.warmup + tb
    L = len(lanes)

    act = np.empty((L, total), dtype=bool)
    bus = np.empty((L, total), dtype=bool)
    inc = np.empty((L, total))
    for i, lane in enumerate(lanes):
        act[i], bus[i], inc[i] = _draw_lane(params, cfg.sensing_mode, profile.p_f, profile.p_d, zeta,
                                            _lane_rng(cfg.seed, lane), total)

    rows = np.arange(L)
    state = np.zeros(L, dtype=np.int64)
    acc = np.zeros(L)
    attempts = np.zeros((L, M), dtype=np.int64)
    failures = np.zeros((L, M), dtype=np.int64)
    lost = np.zeros(L, dtype=np.int64)
    service = np.zeros((L, tb), dtype=bool)
    for k in range(total):
        acc += inc[:, k]
        fail = acc < kappa
        last = state == M - 1
        serve = ~fail | last
        if k >= cfg.warmup:
            attempts[rows, state] += 1
            failures[rows, state] += fail
            lost += fail & last
            service[:, k - cfg.warmup] = serve
        state = np.where(serve, 0, state + 1)
        acc[serve] = 0.0

    a = act[:, cfg.warmup:]
    b = bus[:, cfg.warmup:]
    return BatchCounts(
        active=a.sum(axis=1),
        busy_active=(a & b).sum(axis=1),
        idle=(~a).sum(axis=1),
        busy_idle=(~a & b).sum(axis=1),
        attempts=attempts,
        failures=failures,
        served=service.sum(axis=1),
        lost=lost,
        service_frames=service,
    )


def _chunks(batches: int, workers: int) -> list[range]:
    size = min(_CHUNK_LANES, max(1, math.ceil(batches / max(workers, 1))))
    return [range(s, min(s + size, batches)) for s in range(0, batches, size)]


def run_batches(params: SystemParams, cfg: SimConfig, workers: int = 1) -> BatchCounts:
    chunks = _chunks(cfg.batches, workers)
    if workers <= 1:
        parts = [_run_lanes(params, cfg, c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_lanes, [params] * len(chunks), [cfg] * len(chunks), chunks))
    return BatchCounts.concat(parts)


def _ratio(num: np.ndarray, den: np.ndarray) -> Estimate:
    """Ratio-of-sums estimate with a batch-means (delta method) standard error."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    total = den.sum()
    if total == 0.0:
        return Estimate(0.0, 0.0)
    r = num.sum() / total
    k = len(num)
    resid = num - r * den
    se = math.sqrt(k / (k - 1) * float(np.dot(resid, resid))) / float(total)
    return Estimate(float(r), se)


def _mean(values: np.ndarray) -> Estimate:
    values = np.asarray(values, dtype=float)
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values))))


def _log_mean_exp(x: np.ndarray) -> np.ndarray:
    # Row-wise ln(mean(exp(x))), max-shifted.
    top = x.max(axis=-1, keepdims=True)
    return (top + np.log(np.exp(x - top).mean(axis=-1, keepdims=True)))[..., 0]


def effcap_from_service(service_frames: np.ndarray, n: int, T: float, theta: float, seed: int,
                        batch_frames: int | None = None, B: float = 1.0) -> EffCapEstimate:
    """Empirical effective capacity from per-frame service indicators.

    ``service_frames`` has one row per independent batch. Rows are cut into
    sub-batches of ``batch_frames`` when that is shorter than a row.
    """
    if not theta > 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    rows, width = service_frames.shape
    tb = width if batch_frames is None else min(batch_frames, width)
    reduced = False
    while theta * n * tb > _LOG_SAFE and tb > 1:
        tb //= 2
        reduced = True

    def batch_exponents(length: int) -> np.ndarray:
        per_row = width // length
        counts = service_frames[:, : per_row * length].reshape(rows * per_row, length).sum(axis=1)
        return -theta * n * counts.astype(float)

    x = batch_exponents(tb)
    # A wide spread of theta*S_b lets a few batches dominate the mean; shorten batches until it is tame.
    while tb > 1 and float(np.std(x)) > _MAX_LOG_SPREAD:
        tb //= 2
        reduced = True
        x = batch_exponents(tb)

    def rate(samples: np.ndarray) -> np.ndarray:
        return -_log_mean_exp(samples) / (tb * theta * T)

    estimate = float(rate(x[None, :])[0])
    rng = _lane_rng(seed, _BOOTSTRAP_STREAM)
    block = max(1, min(_BOOTSTRAP_REPS, 2_000_000 // len(x)))
    boot = np.concatenate([
        rate(x[rng.integers(0, len(x), size=(min(block, _BOOTSTRAP_REPS - start), len(x)))])
        for start in range(0, _BOOTSTRAP_REPS, block)
    ])
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return EffCapEstimate(
        theta=theta,
        eff_cap_bps=estimate,
        eff_cap_bcu=estimate / B,
        ci_low_bps=float(lo),
        ci_high_bps=float(hi),
        batch_frames=tb,
        n_batches=len(x),
        reduced=reduced,
    )


def summarize(params: SystemParams, cfg: SimConfig, counts: BatchCounts) -> SimReport:
    tb = cfg.batch_frames
    per_frame_bits = params.n / (params.T * params.B)
    served = counts.served.astype(float)
    good = served - counts.lost
    return SimReport(
        frames=tb * cfg.batches,
        batches=cfg.batches,
        seed=cfg.seed,
        sensing_mode=cfg.sensing_mode.value,
        est_pf=_ratio(counts.busy_idle, counts.idle),
        est_pd=_ratio(counts.busy_active, counts.active),
        est_p=[_ratio(counts.failures[:, m], counts.attempts[:, m]) for m in range(params.M)],
        attempts=[int(a) for a in counts.attempts.sum(axis=0)],
        est_pi=[_mean(counts.attempts[:, m] / tb) for m in range(params.M)],
        est_p_lost=_ratio(counts.lost, served),
        est_service_bcu=_mean(served / tb * per_frame_bits),
        est_goodput_bcu=_mean(good / tb * per_frame_bits),
        packets_served=int(served.sum()),
        est_effcap=[
            effcap_from_service(counts.service_frames, params.n, params.T, th, cfg.seed, B=params.B)
            for th in cfg.theta_grid
        ],
    )


def simulate(params: SystemParams, cfg: SimConfig, workers: int = 1) -> SimReport:
    return summarize(params, cfg, run_batches(params, cfg, workers))


def estimate_effective_capacity(params: SystemParams, cfg: SimConfig, theta: float,
                                workers: int = 1) -> tuple[float, tuple[float, float]]:
    """Empirical effective capacity (bits/s) and its 95% bootstrap interval."""
    counts = run_batches(params, cfg, workers)
    est = effcap_from_service(counts.service_frames, params.n, params.T, theta, cfg.seed, B=params.B)
    return est.eff_cap_bps, (est.ci_low_bps, est.ci_high_bps)
