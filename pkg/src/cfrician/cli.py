"""Command-line entry point: ``run``, ``validate`` and ``reproduce``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from .channel import FrameConfig, PowerConfig, assign_pilots
from .config import SimConfig, load_config
from .errors import CellFreeError
from .geometry import AreaSpec, ShadowModel, generate_network
from .montecarlo import validate_instance
from .sweep import emit_results, run_sweep

# Small-instance shapes (M, K, tau_p) for the oracle suite.
VALIDATION_SHAPES = [(3, 2, 1), (4, 3, 2), (5, 4, 2), (5, 2, 1), (2, 3, 2)]

_UL = ("ul_single", "ul_lsfd")
_DL = ("dl_coherent", "dl_noncoherent")
PRESETS = {
    # Average UL SE versus number of APs.
    "fig1": [(f"M{M}", {"M": M, "schemes": _UL}) for M in (20, 40, 60, 80, 100)],
    # UL SE distribution for two pilot lengths.
    "fig3": [(f"tau_p{t}", {"tau_p": t, "schemes": _UL}) for t in (5, 20)],
    # Average DL SE versus number of APs.
    "fig5": [(f"M{M}", {"M": M, "schemes": _DL}) for M in (20, 40, 60, 80, 100)],
    # DL SE distribution for two pilot lengths.
    "fig7": [(f"tau_p{t}", {"tau_p": t, "schemes": _DL}) for t in (5, 20)],
}


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else SimConfig()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.setups is not None:
        changes["num_setups"] = args.setups
    if args.trials is not None:
        changes["mc_trials"] = args.trials
    if args.out is not None:
        changes["output"] = args.out
    cfg = cfg.replace(**changes)
    start = time.perf_counter()
    table = run_sweep(cfg, workers=args.workers)
    paths = emit_results(table, cfg.output, cfg)
    print(f"{cfg.num_setups} setups, {len(table)} rows in {time.perf_counter() - start:.1f}s", file=sys.stderr)
    for e, v in table.mean_se().items():
        print(f"{e:28s} mean SE {v:.4f} bit/s/Hz")
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    failures = sum(not r.passed for _, r in table.validation)
    if failures:
        print(f"{failures} of {len(table.validation)} Monte Carlo checks failed", file=sys.stderr)
        return 1
    return 0


def _cmd_validate(args) -> int:
    failures = 0
    total = 0
    start = time.perf_counter()
    for i in range(args.instances):
        M, K, tau_p = VALIDATION_SHAPES[i % len(VALIDATION_SHAPES)]
        rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(i,)))
        net = generate_network(M, K, AreaSpec(), ShadowModel(), rng)
        assign = assign_pilots(net, tau_p, rng)
        frame = FrameConfig(tau_p=tau_p)
        powers = PowerConfig(dl_total_power=0.2 * K)
        results = validate_instance(net, assign, powers, frame, args.trials, seed=args.seed * 1000 + i, z=args.z, workers=args.workers)
        for r in results:
            total += 1
            failures += not r.passed
            if args.verbose or not r.passed:
                flag = "ok  " if r.passed else "FAIL"
                print(f"{flag} instance {i} (M={M}, K={K}, tau_p={tau_p}) {r.name:28s} closed {r.closed_form:.6g} mc {r.mc_value:.6g} z {r.z_score:.2f}")
    print(f"{total - failures}/{total} closed forms within {args.z} standard errors ({time.perf_counter() - start:.1f}s)")
    return 1 if failures else 0


def _cmd_reproduce(args) -> int:
    base = load_config(args.config) if args.config else SimConfig()
    changes = {"num_setups": args.setups, "master_seed": args.seed}
    out_root = args.out or os.path.join("results", args.preset)
    curve = []
    for label, overrides in PRESETS[args.preset]:
        cfg = base.replace(**changes, **overrides, output=os.path.join(out_root, label))
        table = run_sweep(cfg, workers=args.workers)
        emit_results(table, cfg.output, cfg)
        for key, value in table.mean_se().items():
            est, scheme = key.split("/")
            curve.append((label, est, scheme, f"{value:.12g}"))
            print(f"{label:8s} {key:24s} {value:.4f}")
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "mean_se.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("case", "estimator", "scheme", "mean_se_bit_per_hz"))
        writer.writerows(curve)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfrician", description="Cell-free massive MIMO SE over Rician fading with random LoS phase")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="closed-form sweep over random setups")
    run.add_argument("config", nargs="?", help="TOML config file (defaults used when omitted)")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--setups", type=int, help="number of random setups")
    run.add_argument("--trials", type=int, help="Monte Carlo trials per setup (0 disables)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="closed forms against the Monte Carlo oracle on small instances")
    val.add_argument("--z", type=float, default=3.0, help="pass threshold in standard errors")
    val.add_argument("--instances", type=int, default=5)
    val.add_argument("--trials", type=int, default=200_000)
    val.add_argument("--seed", type=int, default=1)
    val.add_argument("--workers", type=int, default=1, help="threads per Monte Carlo run")
    val.add_argument("-v", "--verbose", action="store_true", help="print passing checks too")
    val.set_defaults(func=_cmd_validate)

    rep = sub.add_parser("reproduce", help="preset parameter sweeps (AP count or pilot length)")
    rep.add_argument("preset", choices=sorted(PRESETS))
    rep.add_argument("--config", help="base TOML config")
    rep.add_argument("--setups", type=int, default=100)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--out", help="output directory (default results/<preset>)")
    rep.add_argument("--workers", type=int, default=1)
    rep.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CellFreeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
