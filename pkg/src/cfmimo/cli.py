"""Command-line entry point.

Subcommands:
  run      one experiment (optionally from a JSON config file)
  sweep    expand the config's sweep grid
  validate closed-form SINR terms against the Monte Carlo oracle
  fig1     preset: CDF comparison of coherent / mixed / non-coherent modes
  fig2     preset: total rate vs legacy cluster size A_k
  fig3-6   preset: clustering algorithms vs n_cpu for each mode

Exit codes: 0 success, 1 configuration error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .clustering import ClusteringParams
from .errors import CfMimoError, ConfigurationError
from .harness import (ExperimentConfig, OracleConfig, emit_results,
                      load_config, run_experiment, run_oracle_check)
from .scenario import ScenarioConfig


def _desk_scale(seed: int) -> ExperimentConfig:
    """Small deployment that keeps the preset runtimes in minutes."""
    return ExperimentConfig(
        scenario=ScenarioConfig(num_aps=40, num_users=10, num_antennas=2),
        clustering=ClusteringParams(algorithm="legacy_largest_lsf",
                                    legacy_cluster_size=10),
        num_drops=200,
        base_seed=seed,
    )


def _preset(name: str, seed: int) -> ExperimentConfig:
    base = _desk_scale(seed)
    if name == "fig1":
        return replace(base, sweep={"transmission_mode": ("coherent", "mixed",
                                                          "non_coherent")})
    if name == "fig2":
        return replace(base, sweep={
            "transmission_mode": ("coherent", "mixed", "non_coherent"),
            "clustering.legacy_cluster_size": (1, 2, 4, 8, 16),
        })
    # fig3-6: the three multi-CPU algorithms across n_cpu, per mode.
    return replace(base, sweep={
        "transmission_mode": ("coherent", "mixed", "non_coherent"),
        "clustering.algorithm": ("power_fraction", "fixed_aps", "lsf_threshold"),
        "clustering.n_cpu": (1, 2, 4),
    })


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if args.drops is not None:
        config = replace(config, num_drops=args.drops)
    return config


def _cmd_run(args, expect_sweep: bool) -> int:
    config = load_config(args.config) if args.config else _desk_scale(0)
    config = _apply_overrides(config, args)
    if expect_sweep and not config.sweep:
        raise ConfigurationError("sweep subcommand requires a sweep section")
    results = run_experiment(config, jobs=args.jobs)
    csv_path, json_path = emit_results(results, args.out)
    for point, res in results:
        label = " ".join(f"{k}={v}" for k, v in point.items()) or "base"
        print(f"{label}: mean sum rate {res.mean_sum_rate:.4f} bits/s/Hz "
              f"over {len(res.drops)} drops")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_preset(args) -> int:
    config = _apply_overrides(_preset(args.command, args.seed or 0), args)
    results = run_experiment(config, jobs=args.jobs)
    csv_path, json_path = emit_results(results, args.out, stem=args.command)
    for point, res in results:
        label = " ".join(f"{k}={v}" for k, v in point.items())
        print(f"{label}: mean sum rate {res.mean_sum_rate:.4f} bits/s/Hz")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _cmd_validate(args) -> int:
    """Compare every closed-form term against the oracle on small instances."""
    if args.config:
        configs = [load_config(args.config)]
    else:
        configs = []
        for m, k, q, tau_p in ((8, 3, 2, 2), (12, 4, 4, 4)):
            cfg = ExperimentConfig(
                scenario=ScenarioConfig(
                    num_aps=m, num_users=k, num_antennas=2,
                    cpu_positions=tuple((250.0 * np.cos(2 * np.pi * i / q),
                                         250.0 * np.sin(2 * np.pi * i / q))
                                        for i in range(q))),
                clustering=ClusteringParams(algorithm="fixed_aps", n_cpu=q,
                                            n_ap=max(2, m // 2)),
                oracle=OracleConfig(enabled=True, num_samples=args.samples),
            )
            cfg = replace(cfg, frame=replace(cfg.frame, tau_p=tau_p))
            configs.append(_apply_overrides(cfg, args))

    worst = 0.0
    ok = True
    for cfg in configs:
        terms, oracle, noise = run_oracle_check(cfg)
        for k in range(len(terms.D)):
            pairs = ([("E", terms.E[k], oracle.E[k], oracle.E_se[k]),
                      ("F", terms.F[k], oracle.F[k], oracle.F_se[k])]
                     + [(f"D[{c}]", terms.D[k][c], oracle.D[k][c],
                         oracle.D_se[k][c]) for c in range(terms.D[k].size)])
            for name, closed, est, se in pairs:
                scale = max(abs(closed), 3.0 * se)
                err = abs(closed - est)
                rel = err / scale if scale > 0 else 0.0
                worst = max(worst, rel)
                passed = err <= max(0.02 * abs(closed), 3.0 * se)
                ok &= passed
                print(f"user {k} {name}: closed {closed:.6e} oracle {est:.6e} "
                      f"se {se:.1e} [{'ok' if passed else 'FAIL'}]")
    print(f"worst normalized deviation: {worst:.4f}")
    if not ok:
        print("validation FAILED", file=sys.stderr)
        return 2
    print("validation passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfmimo",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "validate", "fig1", "fig2", "fig3-6"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--drops", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        if name == "validate":
            p.add_argument("--samples", type=int, default=100_000,
                           help="oracle sample count")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args, expect_sweep=False)
        if args.command == "sweep":
            return _cmd_run(args, expect_sweep=True)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_preset(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except CfMimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
