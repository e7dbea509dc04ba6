"""Command-line front end.

Exit codes: 0 on success, 2 if any solver row failed, 1 on usage or input
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .allocator import AllocationProblem, maximize_sum_rate, solve_bc_design
from .allocator.core import TIE_TOL
from .channel import ScenarioConfig, generate_channels, load_channels, load_scenario, save_channels
from .duality import bc_to_mac_channel
from .errors import McnomaError
from .harness import METHODS, ExperimentSpec, emit_all, power_for_snr, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2

log = logging.getLogger("mcnoma")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for solver failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_config_text():
    return resources.files("mcnoma").joinpath("data/default_scenario.yaml").read_text()


def _load_config(args):
    cfg = load_scenario(args.config) if args.config else ScenarioConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _methods(text):
    if text is None:
        return None
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    if not methods:
        raise UsageError("--methods needs at least one method")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    return methods


def _floats(text, name):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc


def _summarize(table, out=None):
    out = out or sys.stdout
    attr = "energy_dbm" if table.spec.mode == "energy" else "sum_rate"
    unit = "dBm" if attr == "energy_dbm" else "bits/s/Hz"
    print(f"{table.spec.kind}: mean {attr} [{unit}] over {table.spec.num_seeds} seed(s)", file=out)
    print("value".rjust(10) + "".join(m.rjust(12) for m in table.spec.methods), file=out)
    means = {m: table.mean(m, attr) for m in table.spec.methods}
    for i, v in enumerate(table.spec.values):
        print(f"{v:>10g}" + "".join(f"{means[m][i]:12.4f}" for m in table.spec.methods), file=out)
    for r in table.failures:
        print(f"FAILED {r.method} at {r.sweep_value:g} seed {r.seed}: {r.error}", file=sys.stderr)


def _finish(table, args):
    if args.out:
        written = emit_all(table, args.out, figures=not args.no_figures)
        log.info("wrote %d files to %s", len(written), args.out)
    _summarize(table)
    return EXIT_SOLVER if table.failures else EXIT_OK


# --- subcommands ---------------------------------------------------------------------


def cmd_generate_channels(args):
    if args.write_default_config:
        Path(args.write_default_config).write_text(default_config_text())
        print(f"wrote {args.write_default_config}")
        return EXIT_OK
    if not args.out:
        raise UsageError("generate-channels needs --out (or --write-default-config)")
    cfg = _load_config(args)
    channels = generate_channels(cfg)
    save_channels(channels, args.out)
    print(f"wrote {channels.num_subcarriers} x {channels.receive_dim}x{channels.bs_dim} channels "
          f"(seed {cfg.seed}, scenario {channels.scenario_hash}) to {args.out}")
    return EXIT_OK


def cmd_solve(args):
    cfg = _load_config(args)
    bc = load_channels(args.channels) if args.channels else generate_channels(cfg)
    if bc.side != "bc":
        raise UsageError("solve expects a BC-side channel file")
    N, U = bc.num_subcarriers, bc.num_users
    power = cfg.transmit_power_watts if args.snr is None else power_for_snr(bc, args.snr)
    weights = np.ones(U) if args.weights is None else np.array(_floats(args.weights, "--weights"))
    tie_tol = TIE_TOL if args.tie_tol is None else args.tie_tol
    try:
        if args.min_rates_mbps is not None:
            mbps = np.array(_floats(args.min_rates_mbps, "--min-rates-mbps"))
            floors = mbps * 1e6 * N / cfg.bandwidth
            sol = solve_bc_design(AllocationProblem(bc, weights, floors), tie_tol=tie_tol)
        else:
            sol = maximize_sum_rate(bc_to_mac_channel(bc), power, weights, tie_tol=tie_tol)
    except McnomaError as exc:
        print(f"solver failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    record = {
        "mode": sol.mode,
        "user_rates_bpshz": sol.rates.spectral_efficiency().tolist(),
        "user_rates_mbps": (sol.rates.to_bps(cfg.bandwidth) / 1e6).tolist(),
        "sum_rate_bpshz": float(sol.rates.spectral_efficiency().sum()),
        "transmit_power_w": float(sol.total_power),
        "duals": sol.duals.tolist(),
        "decoding_order": list(sol.order.sequence),
        "tie_groups": [list(g) for g in sol.tie_groups],
        "kkt_residual": sol.kkt_residual,
        "schedule": None if sol.schedule is None else [
            {"fraction": b.fraction, "order": list(b.order.sequence), "rates": np.asarray(b.rates).tolist()}
            for b in sol.schedule.blocks
        ],
    }
    text = json.dumps(record, indent=2)
    if args.out:
        path = Path(args.out) / "solution.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
    print(text)
    return EXIT_OK


def _spec_overrides(args):
    out = {}
    methods = _methods(args.methods)
    if methods is not None:
        out["methods"] = methods
    if args.tie_tol is not None:
        out["tie_tol"] = args.tie_tol
    return out


def cmd_sweep(args):
    if args.experiment:
        import yaml

        data = yaml.safe_load(Path(args.experiment).read_text()) or {}
        if not isinstance(data, dict):
            raise UsageError(f"{args.experiment}: experiment file must hold a mapping")
    else:
        if not args.kind or not args.values:
            raise UsageError("sweep needs --experiment, or both --kind and --values")
        data = {"kind": args.kind}
    if args.kind:
        data["kind"] = args.kind
    if args.values:
        data["values"] = _floats(args.values, "--values")
    if args.config:
        data["scenario"] = load_scenario(args.config)
    for key in ("num_seeds", "base_seed", "snr_db", "oma_variant"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    data.update(_spec_overrides(args))
    spec = ExperimentSpec.from_dict(data)
    return _finish(run_experiment(spec, workers=args.workers), args)


def _single_point(kind, args):
    cfg = _load_config(args)
    data = {"kind": kind, "values": [args.snr], "num_seeds": 1, "base_seed": cfg.seed, "scenario": cfg}
    data.update(_spec_overrides(args))
    if kind == "timeshare_demo" and "methods" not in data:
        data["methods"] = ("proposed",)
    if args.oma_variant:
        data["oma_variant"] = args.oma_variant
    return ExperimentSpec.from_dict(data)


def cmd_timeshare(args):
    table = run_experiment(_single_point("timeshare_demo", args))
    rc = _finish(table, args)
    for r in table.select("proposed"):
        if r.ok:
            for k, frac in enumerate(r.block_fractions or (1.0,)):
                order = r.block_orders[k] if r.block_orders else r.decoding_order
                print(f"block {k}: fraction {frac:.4f}, decoding order {list(order)}")
    return rc


def cmd_compare(args):
    return _finish(run_experiment(_single_point("snr_sweep", args)), args)


# --- parser ------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="mcnoma", description="Multi-carrier NOMA allocation simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True, out_required=False):
        p.add_argument("--config", help="scenario YAML/JSON (defaults: built-in reference table)")
        if seed:
            p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", required=out_required, help="output directory (file for generate-channels)")
        p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
        p.add_argument("--tie-tol", type=float, dest="tie_tol", help="relative multiplier tie tolerance")
        p.add_argument("--oma-variant", dest="oma_variant", choices=("linear", "partition"))
        p.add_argument("--no-figures", action="store_true", dest="no_figures", help="skip PNG output")

    p = sub.add_parser("generate-channels", help="draw and save one channel realization")
    common(p)
    p.add_argument("--write-default-config", dest="write_default_config", metavar="PATH",
                   help="write the default scenario file and exit")
    p.set_defaults(func=cmd_generate_channels)

    p = sub.add_parser("solve", help="optimal allocation for one realization")
    common(p)
    p.add_argument("--channels", help="channel file from generate-channels (else drawn from the config)")
    p.add_argument("--snr", type=float, help="receive SNR in dB (else the config's transmit power)")
    p.add_argument("--min-rates-mbps", dest="min_rates_mbps",
                   help="comma-separated per-user floors: minimize energy instead of maximizing sum rate")
    p.add_argument("--weights", help="comma-separated per-user weights")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run an experiment sweep")
    common(p, seed=False)
    p.add_argument("--experiment", help="experiment YAML (kind, values, methods, num_seeds, scenario, ...)")
    p.add_argument("--kind", choices=("snr_sweep", "nt_sweep", "user_sweep", "subcarrier_sweep",
                                      "distance_sweep", "timeshare_demo"))
    p.add_argument("--values", help="comma-separated sorted sweep values")
    p.add_argument("--num-seeds", type=int, dest="num_seeds")
    p.add_argument("--base-seed", type=int, dest="base_seed")
    p.add_argument("--snr-db", type=float, dest="snr_db", help="receive SNR for non-SNR sweeps")
    p.add_argument("--workers", type=int, default=1, help="parallel processes (output is order-canonical)")
    p.set_defaults(func=cmd_sweep)

    for name, func, helptext in (("timeshare", cmd_timeshare, "time-sharing schedule and per-tone dumps"),
                                 ("compare", cmd_compare, "all methods on one realization")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--snr", type=float, default=30.0, help="receive SNR in dB (default 30)")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mcnoma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (McnomaError, OSError) as exc:
        print(f"mcnoma: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
