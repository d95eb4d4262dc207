"""Point evaluation, parameter sweeps and the figure presets."""
from __future__ import annotations

import csv
import enum
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .channel import SystemParams, scenario_profile
from .effcap import Variant, effective_capacity
from .harq import Weighting, build_chain
from .numerics import DEFAULT_CONTROL, SeriesControl

P_COLUMNS = 16

FIG1_PACKET_BITS = tuple([1, 2, 5] + list(range(10, 601, 10)))
FIG1_DEADLINES = (1, 2, 3, 4)
FIG_THETAS = tuple(10.0 ** (k / 4) for k in range(-20, 1))
FIG3_THRESHOLDS = (1.0, 1.2, 1.4, 1.6, 1.8)
FIG3_DEADLINE = 4


class SweepAxis(enum.Enum):
    PACKET_BITS = "packet_bits"
    THETA = "theta"
    LAMBDA = "lambda"
    DEADLINE = "deadline"


_AXIS_FIELD = {
    SweepAxis.PACKET_BITS: "n",
    SweepAxis.THETA: "theta",
    SweepAxis.LAMBDA: "lam",
    SweepAxis.DEADLINE: "M",
}


@dataclass(frozen=True)
class SweepSpec:
    axis: SweepAxis
    values: tuple
    overrides: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        axis = SweepAxis(self.axis)
        object.__setattr__(self, "axis", axis)
        values = tuple(self.values)
        if not values:
            raise ValueError("sweep values must be non-empty")
        if axis in (SweepAxis.PACKET_BITS, SweepAxis.DEADLINE):
            if any(int(v) != v or v < 1 for v in values):
                raise ValueError(f"{axis.value} values must be positive integers")
            values = tuple(int(v) for v in values)
        else:
            if any(not v > 0 for v in values):
                raise ValueError(f"{axis.value} values must be positive")
            values = tuple(float(v) for v in values)
        diffs = np.diff(values)
        if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep values must be strictly monotone")
        object.__setattr__(self, "values", values)


def csv_columns(p_columns: int = P_COLUMNS) -> list[str]:
    return (
        ["axis", "value", "M", "n", "theta", "lambda", "rho", "p_f", "p_d", "q1", "q2", "q3", "q4", "kappa"]
        + [f"p_{m}" for m in range(p_columns)]
        + ["pi_0", "p_lost", "service_rate_bcu", "goodput_bcu", "effcap_bcu_renewal", "effcap_bcu_paper"]
    )


def evaluate_point(
    params: SystemParams,
    ctl: SeriesControl = DEFAULT_CONTROL,
    weighting: Weighting = Weighting.POSTERIOR,
) -> dict[str, Any]:
    """All analytic metrics for one operating point.

    With ``theta == 0`` both effective-capacity entries hold the average
    service rate, the theta -> 0 limit of the renewal form.
    """
    profile = scenario_profile(params)
    chain = build_chain(params, profile, ctl, weighting)
    effcap = {}
    for variant in Variant:
        if params.theta == 0.0:
            effcap[variant.value] = {
                "theta": 0.0,
                "eff_cap_bps": chain.service_rate_bcu * params.B,
                "eff_cap_bcu": chain.service_rate_bcu,
                "note": "theta = 0: average service rate",
            }
        else:
            res = effective_capacity(chain.p, params.n, params.T, params.theta, variant, params.B)
            effcap[variant.value] = {
                "theta": res.theta,
                "chi_star": res.chi_star,
                "log_chi_star": res.log_chi_star,
                "eff_cap_bps": res.eff_cap_bps,
                "eff_cap_bcu": res.eff_cap_bcu,
            }
    return {"profile": profile, "chain": chain, "effcap": effcap}


def _row(axis: SweepAxis, value, params: SystemParams, point: dict, p_columns: int) -> dict[str, Any]:
    profile = point["profile"]
    chain = point["chain"]
    row: dict[str, Any] = {
        "axis": axis.value,
        "value": value,
        "M": params.M,
        "n": params.n,
        "theta": params.theta,
        "lambda": params.lam,
        "rho": params.rho,
        "p_f": profile.p_f,
        "p_d": profile.p_d,
        "q1": profile.q[0],
        "q2": profile.q[1],
        "q3": profile.q[2],
        "q4": profile.q[3],
        "kappa": profile.kappa,
    }
    for m in range(p_columns):
        row[f"p_{m}"] = float(chain.p[m]) if m < chain.M else None
    row.update(
        pi_0=float(chain.pi[0]),
        p_lost=chain.p_lost,
        service_rate_bcu=chain.service_rate_bcu,
        goodput_bcu=chain.goodput_bcu,
        effcap_bcu_renewal=point["effcap"]["renewal"]["eff_cap_bcu"],
        effcap_bcu_paper=point["effcap"]["paper"]["eff_cap_bcu"],
    )
    return row


def _sweep_point(args) -> dict[str, Any]:
    axis, value, params, ctl, weighting, p_columns = args
    return _row(axis, value, params, evaluate_point(params, ctl, weighting), p_columns)


def sweep_params(base: SystemParams, spec: SweepSpec) -> list[SystemParams]:
    base = base.replace(**spec.overrides) if spec.overrides else base
    name = _AXIS_FIELD[spec.axis]
    return [base.replace(**{name: v}) for v in spec.values]


def run_sweep(
    base: SystemParams,
    spec: SweepSpec,
    ctl: SeriesControl = DEFAULT_CONTROL,
    weighting: Weighting = Weighting.POSTERIOR,
    workers: int = 1,
    p_columns: int = P_COLUMNS,
) -> list[dict[str, Any]]:
    points = sweep_params(base, spec)
    width = max(p_columns, max(p.M for p in points))
    jobs = [(spec.axis, v, p, ctl, weighting, width) for v, p in zip(spec.values, points)]
    if workers <= 1:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, jobs))


def best_packet_size(rows: Iterable[dict[str, Any]]) -> dict[int, int]:
    """Goodput-maximising ``n`` per deadline over PACKET_BITS rows (first maximiser wins)."""
    best: dict[int, tuple[float, int]] = {}
    for r in rows:
        if r["axis"] != SweepAxis.PACKET_BITS.value:
            continue
        M = int(r["M"])
        if M not in best or r["goodput_bcu"] > best[M][0]:
            best[M] = (r["goodput_bcu"], int(r["n"]))
    return {M: n for M, (_, n) in sorted(best.items())}


def write_csv(rows: list[dict[str, Any]], fh=None) -> str:
    """Write rows with the fixed column schema; returns the text when ``fh`` is None."""
    width = P_COLUMNS
    for r in rows:
        while f"p_{width}" in r:
            width += 1
    columns = csv_columns(width)
    out = fh if fh is not None else io.StringIO(newline="")
    writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({c: ("" if r.get(c) is None else _fmt(r[c])) for c in columns})
    return out.getvalue() if fh is None else ""


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# ---- figure presets -------------------------------------------------------

def fig1_specs() -> list[SweepSpec]:
    return [SweepSpec(SweepAxis.PACKET_BITS, FIG1_PACKET_BITS, {"M": M}) for M in FIG1_DEADLINES]


def run_preset(
    name: str,
    base: SystemParams,
    ctl: SeriesControl = DEFAULT_CONTROL,
    weighting: Weighting = Weighting.POSTERIOR,
    workers: int = 1,
) -> tuple[list[dict[str, Any]], dict[str, Any]]:
    """Run a figure preset; returns CSV rows and a metadata summary.

    fig1: packet-size sweep for each preset deadline.
    fig2: theta sweep per deadline at that deadline's goodput-optimal n.
    fig3: theta sweep per detection threshold, deadline 4, at the fig1 optimum.
    """
    meta: dict[str, Any] = {
        "preset": name,
        "repo_choices": {
            "activity_prob": base.rho,
            "packet_bits_grid": list(FIG1_PACKET_BITS),
            "deadlines": list(FIG1_DEADLINES),
            "theta_grid_per_bit": list(FIG_THETAS),
            "thresholds": list(FIG3_THRESHOLDS),
        },
    }
    fig1_rows: list[dict[str, Any]] = []
    for spec in fig1_specs():
        fig1_rows.extend(run_sweep(base, spec, ctl, weighting, workers))
    best = best_packet_size(fig1_rows)
    meta["best_packet_bits"] = {str(M): n for M, n in best.items()}
    if name == "fig1":
        return fig1_rows, meta

    rows: list[dict[str, Any]] = []
    if name == "fig2":
        for M, n in best.items():
            rows.extend(run_sweep(base, SweepSpec(SweepAxis.THETA, FIG_THETAS, {"M": M, "n": n}),
                                  ctl, weighting, workers))
        return rows, meta
    if name == "fig3":
        n = best[FIG3_DEADLINE]
        for lam in FIG3_THRESHOLDS:
            rows.extend(run_sweep(base, SweepSpec(SweepAxis.THETA, FIG_THETAS,
                                                  {"M": FIG3_DEADLINE, "n": n, "lam": lam}),
                                  ctl, weighting, workers))
        return rows, meta
    raise ValueError(f"unknown preset {name!r}; expected fig1, fig2 or fig3")
