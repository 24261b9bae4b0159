"""Command-line surface: fit, build, simulate, diagnose, emit plot data.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  All behavior flows through the config file and flags; the only
environment variable honored is AUTOCOPULA_LOG_LEVEL.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .copula import (
    build_joint_cdf,
    build_partition,
    default_target_per_rect,
    pit_transform,
    tail_dependence_curves,
)
from .pipeline import (
    ConfigError,
    DataError,
    NumericError,
    ModelBundle,
    _Stage,
    _run_ensemble,
    _write_ensemble_outputs,
    _write_json,
    _write_tail_csv,
    fit_global_marginal,
    ingest_csv,
    load_bundle,
    load_config,
    make_provenance,
    run_pipeline,
)
from .plots import FIGURE_IDS, emit_plot_data
from .seasonal import fit_monthly_delta, fit_nu_ar
from .simulate import read_ensemble_binary, SimulationEnsemble, tail_dependence_bands

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common(sub):
    sub.add_argument("--config", required=True, help="TOML or JSON config file")
    sub.add_argument("--out", required=True, help="output/bundle directory")
    sub.add_argument("--paths", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--horizon-days", type=int, default=None)
    sub.add_argument("--conditioning", choices=("cumulative", "partial"),
                     default=None)
    sub.add_argument("--delta-mode", choices=("frozen", "sampled"), default=None)
    sub.add_argument("--target-per-rect", type=int, default=None)
    sub.add_argument("--write-ensemble", choices=("none", "csv", "binary"),
                     default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autocopula",
        description="Semi-parametric time-series fitting and simulation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("pipeline", "fit-marginal", "fit-seasonal", "build-copula",
                 "simulate", "diagnose-tails"):
        _add_common(sub.add_parser(name))
    plots = sub.add_parser("emit-plots")
    _add_common(plots)
    plots.add_argument("--figures", default="all",
                       help="comma-separated figure ids or 'all'")
    return parser


def _overrides(args) -> dict:
    return {
        "paths": args.paths,
        "seed": args.seed,
        "horizon_days": args.horizon_days,
        "conditioning": args.conditioning,
        "delta_mode": args.delta_mode,
        "target_per_rect": args.target_per_rect,
        "write_ensemble": args.write_ensemble,
    }


def _load_inputs(cfg):
    series = ingest_csv(cfg.input, cfg.date_column, cfg.value_column)
    with open(cfg.input, "rb") as fh:
        input_bytes = fh.read()
    return series, input_bytes


def cmd_pipeline(cfg, out_dir):
    _, report = run_pipeline(cfg, out_dir)
    for name, path in sorted(report["outputs"].items()):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_fit_marginal(cfg, out_dir):
    series, input_bytes = _load_inputs(cfg)
    with _Stage("fit-marginal"):
        params = fit_global_marginal(series, cfg)
    os.makedirs(out_dir, exist_ok=True)
    prov = make_provenance(input_bytes, cfg)
    payload = params.to_dict()
    payload["provenance"] = prov
    path = os.path.join(out_dir, "marginal.json")
    _write_json(path, payload)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_fit_seasonal(cfg, out_dir):
    from .nig import NigParams
    import json

    series, input_bytes = _load_inputs(cfg)
    marginal_path = os.path.join(out_dir, "marginal.json")
    if not os.path.exists(marginal_path):
        raise DataError(f"run fit-marginal first: missing {marginal_path}")
    with open(marginal_path, encoding="utf-8") as fh:
        params = NigParams.from_dict(json.load(fh))
    with _Stage("fit-monthly-delta"):
        monthly = fit_monthly_delta(series.dates, series.values,
                                    (params.mu, params.alpha, params.beta),
                                    min_obs=cfg.min_obs_per_month)
    with _Stage("fit-nu-ar"):
        nu_ar = fit_nu_ar(monthly, sigma_floor_frac=cfg.sigma_floor_frac)
    prov = make_provenance(input_bytes, cfg)
    for name, payload in (("monthly_delta.json", monthly.to_dict()),
                          ("nu_ar.json", nu_ar.to_dict())):
        payload["provenance"] = prov
        path = os.path.join(out_dir, name)
        _write_json(path, payload)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_build_copula(cfg, out_dir):
    from .nig import NigParams
    from .seasonal import MonthlyDeltaSeries
    from .simulate import FrozenDeltaMarginals
    import json

    series, input_bytes = _load_inputs(cfg)
    for name in ("marginal.json", "monthly_delta.json"):
        if not os.path.exists(os.path.join(out_dir, name)):
            raise DataError(f"missing {name}; run fit-marginal/fit-seasonal first")
    with open(os.path.join(out_dir, "marginal.json"), encoding="utf-8") as fh:
        params = NigParams.from_dict(json.load(fh))
    with open(os.path.join(out_dir, "monthly_delta.json"), encoding="utf-8") as fh:
        monthly = MonthlyDeltaSeries.from_dict(json.load(fh))
    with _Stage("build-copula"):
        pit = pit_transform(series.dates, series.values,
                            FrozenDeltaMarginals(params, monthly))
        pairs = pit.pairs()
        target = cfg.target_per_rect or default_target_per_rect(len(pairs))
        copula = build_joint_cdf(build_partition(pairs, target))
    payload = copula.to_dict()
    payload["provenance"] = make_provenance(input_bytes, cfg)
    path = os.path.join(out_dir, "copula.json")
    _write_json(path, payload)
    print(f"wrote {path}")
    return EXIT_OK


def _load_full_bundle(cfg, out_dir, input_bytes) -> ModelBundle:
    bundle = load_bundle(out_dir)
    expected = make_provenance(input_bytes, cfg)
    if bundle.provenance.get("input_sha256") != expected["input_sha256"]:
        raise DataError("bundle was fitted on different input data")
    return bundle


def cmd_simulate(cfg, out_dir):
    series, input_bytes = _load_inputs(cfg)
    if not os.path.exists(os.path.join(out_dir, "provenance.json")):
        # allow simulate directly after the incremental subcommands
        with _Stage("assemble-bundle"):
            bundle = _assemble_incremental(cfg, out_dir, input_bytes)
    else:
        bundle = _load_full_bundle(cfg, out_dir, input_bytes)
    if cfg.paths < 1:
        raise ConfigError("simulate needs simulate.paths >= 1")
    with _Stage("simulate"):
        ensemble = _run_ensemble(bundle, cfg, series)
        outputs = _write_ensemble_outputs(ensemble, cfg, bundle.provenance,
                                          out_dir)
    for path in outputs.values():
        print(f"wrote {path}")
    return EXIT_OK


def _assemble_incremental(cfg, out_dir, input_bytes) -> ModelBundle:
    from .nig import NigParams
    from .seasonal import MonthlyDeltaSeries, NuArModel
    from .copula import EmpiricalAutocopula
    import json

    def read(name):
        path = os.path.join(out_dir, name)
        if not os.path.exists(path):
            raise DataError(f"missing {name}; run the fitting subcommands first")
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    prov = make_provenance(input_bytes, cfg)
    bundle = ModelBundle(
        params=NigParams.from_dict(read("marginal.json")),
        monthly_delta=MonthlyDeltaSeries.from_dict(read("monthly_delta.json")),
        nu_ar=NuArModel.from_dict(read("nu_ar.json")),
        copula=EmpiricalAutocopula.from_dict(read("copula.json")),
        provenance=prov)
    _write_json(os.path.join(out_dir, "provenance.json"), prov)
    return bundle


def cmd_diagnose_tails(cfg, out_dir):
    series, input_bytes = _load_inputs(cfg)
    bundle = _load_full_bundle(cfg, out_dir, input_bytes)
    marginals = bundle.marginals()
    grid = np.arange(cfg.tail_grid_step, 0.99, cfg.tail_grid_step)
    with _Stage("diagnose-tails"):
        pit = pit_transform(series.dates, series.values, marginals)
        data_lower, data_upper = tail_dependence_curves(pit.pairs(), grid)
        bands = None
        bin_path = os.path.join(out_dir, "ensemble.bin")
        if os.path.exists(bin_path):
            dates, paths, _ = read_ensemble_binary(bin_path)
            ens = SimulationEnsemble(dates=dates, paths=paths, levels=(),
                                     monthly_percentiles=())
            if ens.path_count >= 20:
                bands = tail_dependence_bands(ens, marginals, grid)
        path = os.path.join(out_dir, "tail_bands.csv")
        _write_tail_csv(path, bundle.provenance, grid, data_lower, data_upper,
                        bands)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_emit_plots(cfg, out_dir, figures):
    series, input_bytes = _load_inputs(cfg)
    bundle = _load_full_bundle(cfg, out_dir, input_bytes)
    ensemble = None
    bin_path = os.path.join(out_dir, "ensemble.bin")
    if os.path.exists(bin_path):
        dates, paths, _ = read_ensemble_binary(bin_path)
        levels = cfg.percentile_levels
        from .simulate import _monthly_percentiles
        ensemble = SimulationEnsemble(
            dates=dates, paths=paths, levels=levels,
            monthly_percentiles=_monthly_percentiles(dates, paths, levels))
    wanted = FIGURE_IDS if figures == "all" else tuple(figures.split(","))
    if figures == "all" and ensemble is None:
        wanted = tuple(f for f in wanted
                       if f not in ("ensemble-percentiles", "tail-bands"))
    for which in wanted:
        for path in emit_plot_data(which, out_dir, bundle=bundle,
                                   series=series, ensemble=ensemble):
            print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("AUTOCOPULA_LOG_LEVEL",
                                             "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        out_dir = args.out
        if args.command == "pipeline":
            return cmd_pipeline(cfg, out_dir)
        if args.command == "fit-marginal":
            return cmd_fit_marginal(cfg, out_dir)
        if args.command == "fit-seasonal":
            return cmd_fit_seasonal(cfg, out_dir)
        if args.command == "build-copula":
            return cmd_build_copula(cfg, out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "diagnose-tails":
            return cmd_diagnose_tails(cfg, out_dir)
        if args.command == "emit-plots":
            return cmd_emit_plots(cfg, out_dir, args.figures)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
