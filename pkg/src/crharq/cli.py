"""Command-line entry point: analyze, sweep, simulate, validate."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .channel import ParameterError
from .config import Config, ConfigError, parse_config, read_document
from .effcap import Variant, effective_capacity
from .harq import Weighting, throughput_metrics
from .numerics import BracketError
from .simulation import simulate
from .sweeps import SweepAxis, SweepSpec, best_packet_size, evaluate_point, run_preset, run_sweep, write_csv
from .validation import run_validation

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_BAD_CONFIG = 2


def _tool() -> dict[str, str]:
    return {"name": "crharq", "version": __version__}


def _dump(doc: dict[str, Any], out: str | None) -> None:
    text = json.dumps(doc, indent=2, allow_nan=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args: argparse.Namespace) -> Config:
    doc = read_document(args.config)
    sim = dict(doc.get("simulation", {}))
    for flag, key in (("seed", "seed"), ("frames", "frames"), ("mode", "mode")):
        value = getattr(args, flag, None)
        if value is not None:
            sim[key] = value
    if sim:
        doc = {**doc, "simulation": sim}
    return parse_config(doc)


def _parse_values(text: str) -> list[float]:
    """Comma list (``1,2,5``) or inclusive linear range (``10:600:10``)."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError("range must be start:stop:step with step > 0")
        start, stop, step = parts
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(max(count, 0))]
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _load(args)
    params = config.params
    weighting = Weighting(args.weighting)
    point = evaluate_point(params, config.series, weighting)
    profile, chain = point["profile"], point["chain"]
    doc = {
        "tool": _tool(),
        "config": config.resolved(),
        "weighting": weighting.value,
        "sensing": {
            "p_f": profile.p_f,
            "p_d": profile.p_d,
            "q": list(profile.q),
            "zeta": list(profile.zeta),
            "kappa": profile.kappa,
        },
        "chain": {
            "p": [float(x) for x in chain.p],
            "pi": [float(x) for x in chain.pi],
            "p_lost": chain.p_lost,
            **throughput_metrics(chain, params),
        },
        "effcap": {**point["effcap"], "selected": args.variant},
    }
    _dump(doc, args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args)
    weighting = Weighting(args.weighting)
    if args.preset:
        rows, meta = run_preset(args.preset, config.params, config.series, weighting, args.workers)
    else:
        if not args.axis or args.values is None:
            raise ConfigError("sweep: give --preset, or both --axis and --values")
        try:
            spec = SweepSpec(SweepAxis(args.axis), tuple(args.values))
        except ValueError as exc:
            raise ConfigError(f"sweep.{args.axis}: {exc}") from None
        rows = run_sweep(config.params, spec, config.series, weighting, args.workers)
        meta = {"axis": spec.axis.value, "values": list(spec.values)}
        if spec.axis is SweepAxis.PACKET_BITS:
            meta["best_packet_bits"] = {str(M): n for M, n in best_packet_size(rows).items()}
    meta = {"tool": _tool(), "config": config.resolved(), "weighting": weighting.value, **meta}
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
        _dump(meta, args.out + ".json")
    else:
        sys.stdout.write(write_csv(rows))
        sys.stderr.write(json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load(args)
    params = config.params
    report = simulate(params, config.sim, args.workers)
    analytic = []
    if params.n > 0:
        point = evaluate_point(params.replace(theta=0.0), config.series, Weighting(args.weighting))
        for est in report.est_effcap:
            try:
                res = effective_capacity(point["chain"].p, params.n, params.T, est.theta, Variant(args.variant))
                analytic.append({"theta": est.theta, "eff_cap_bps": res.eff_cap_bps})
            except BracketError as exc:
                analytic.append({"theta": est.theta, "error": str(exc)})
    doc = {
        "tool": _tool(),
        "config": config.resolved(),
        "variant": args.variant,
        "report": report.as_dict(),
        "analytic_effcap": analytic,
    }
    _dump(doc, args.out)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load(args)
    result = run_validation(config, args.workers, Weighting(args.weighting))
    _dump({"tool": _tool(), "config": config.resolved(), **result}, args.out)
    for check in result["checks"]:
        print(f"{check['status']:>4}  {check['name']}  measured={check['measured']:.4g} "
              f"tol={check['tolerance']:.3g}", file=sys.stderr)
    return EXIT_OK if result["passed"] else EXIT_FAILED_CHECKS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crharq", description=__doc__)
    parser.add_argument("--version", action="version", version=f"crharq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML configuration file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--weighting", choices=[w.value for w in Weighting], default=Weighting.POSTERIOR.value,
                        help="scenario weighting of the retransmission failure probabilities")
    common.add_argument("--workers", type=int, default=1, help="worker processes")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--seed", type=int, help="override simulation.seed")
    sim.add_argument("--frames", type=int, help="override simulation.frames")
    sim.add_argument("--mode", choices=["statistical", "physical"], help="override simulation.mode")

    variant = argparse.ArgumentParser(add_help=False)
    variant.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.RENEWAL_COMPLETE.value,
                         help="constant term of the effective-capacity polynomial")

    p = sub.add_parser("analyze", parents=[common, variant], help="analytic metrics for one point")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV")
    p.add_argument("--preset", choices=["fig1", "fig2", "fig3"])
    p.add_argument("--axis", choices=[a.value for a in SweepAxis])
    p.add_argument("--values", type=_parse_values, help="comma list or start:stop:step")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common, sim, variant], help="Monte Carlo report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", parents=[common, sim], help="analytic vs simulation checks")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
