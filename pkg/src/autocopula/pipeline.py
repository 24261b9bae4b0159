"""Fit -> build -> simulate -> diagnose orchestration and model persistence.

A run ingests a daily ``date,value`` CSV, fits the global NIG parameters
(moment matching then MLE), calibrates monthly deltas and the seasonal nu
model, PIT-transforms the series, builds the empirical autocopula, and
optionally simulates an ensemble with tail diagnostics.  The fitted pieces
are persisted as a bundle directory of JSON artifacts whose bytes are fully
determined by (input data, resolved config, seed).
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .copula import (
    EmpiricalAutocopula,
    build_joint_cdf,
    build_partition,
    default_target_per_rect,
    pit_transform,
    tail_dependence_curves,
)
from .nig import NigParams, fit_mle, fit_moment_matching, log_likelihood
from .seasonal import MonthlyDeltaSeries, NuArModel, fit_monthly_delta, fit_nu_ar
from .simulate import (
    FrozenDeltaMarginals,
    SimulationConfig,
    SimulationEnsemble,
    simulate_ensemble,
    tail_dependence_bands,
    write_ensemble_binary,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "ObservationSeries",
    "PipelineConfig",
    "ModelBundle",
    "ingest_csv",
    "load_config",
    "run_pipeline",
    "save_bundle",
    "load_bundle",
]

log = logging.getLogger("autocopula")
log.setLevel(os.environ.get("AUTOCOPULA_LOG_LEVEL", "WARNING").upper())

BUNDLE_FILES = ("marginal.json", "monthly_delta.json", "nu_ar.json",
                "copula.json", "provenance.json")


class ConfigError(ValueError):
    """Bad or missing configuration; CLI exit code 2."""


class DataError(ValueError):
    """Unusable input data; CLI exit code 3."""


class NumericError(RuntimeError):
    """A fitting or simulation stage failed; CLI exit code 4."""


@dataclass(frozen=True)
class ObservationSeries:
    """Daily observations with strictly increasing dates; gaps are allowed."""

    dates: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if len(self.dates) != v.size:
            raise DataError("dates and values must have equal length")
        if v.size == 0:
            raise DataError("empty series")
        if not np.all(np.isfinite(v)):
            raise DataError("series contains non-finite values")
        for a, b in zip(self.dates[:-1], self.dates[1:]):
            if b <= a:
                raise DataError(f"dates must be strictly increasing at {b}")

    def __len__(self):
        return len(self.dates)


def ingest_csv(path, date_column: str = "date",
               value_column: str = "value") -> ObservationSeries:
    """Read and validate a daily series; bad rows are reported by line number."""
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    dates, values, bad = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_column not in reader.fieldnames \
                or value_column not in reader.fieldnames:
            raise DataError(
                f"expected columns '{date_column}' and '{value_column}', "
                f"got {reader.fieldnames}")
        for line_no, row in enumerate(reader, start=2):
            try:
                d = dt.date.fromisoformat((row[date_column] or "").strip())
                x = float(row[value_column])
                if not np.isfinite(x):
                    raise ValueError
            except (ValueError, TypeError):
                bad.append(line_no)
                continue
            if dates and d == dates[-1]:
                raise DataError(f"duplicate date {d} at line {line_no}")
            if dates and d < dates[-1]:
                raise DataError(f"non-monotone date {d} at line {line_no}")
            dates.append(d)
            values.append(x)
    if bad:
        raise DataError("unparseable rows at lines: "
                        + ", ".join(str(b) for b in bad))
    if not dates:
        raise DataError(f"no data rows in {path}")
    return ObservationSeries(dates=tuple(dates), values=np.array(values))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Resolved configuration; see config.example.toml for the file layout."""

    input: str
    date_column: str = "date"
    value_column: str = "value"
    mle_max_iter: int = 10_000
    min_obs_per_month: int = 5
    sigma_floor_frac: float = 0.05
    target_per_rect: int = 0  # 0: max(32, ceil(n/256))
    conditioning: str = "cumulative"
    paths: int = 100
    horizon_days: int = 0  # 0: same length as the input series
    seed: int = 1234
    x0: float | None = None
    delta_mode: str = "frozen"
    percentile_levels: tuple = (1.0, 5.0, 50.0, 95.0, 99.0)
    tail_grid_step: float = 0.02
    write_ensemble: str = "none"  # none | csv | binary

    def canonical_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["percentile_levels"] = list(self.percentile_levels)
        d["input"] = os.path.basename(self.input)
        return d


_SECTION_KEYS = {
    "data": ("input", "date_column", "value_column"),
    "marginal": ("mle_max_iter",),
    "seasonal": ("min_obs_per_month", "sigma_floor_frac"),
    "copula": ("target_per_rect", "conditioning"),
    "simulate": ("paths", "horizon_days", "seed", "x0", "delta_mode",
                 "percentile_levels", "tail_grid_step", "write_ensemble"),
}


def _read_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML config: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Load a TOML/JSON config file and apply CLI overrides on top."""
    raw = _read_config_file(path)
    flat = {}
    for section, content in raw.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key, value in content.items():
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            flat[key] = value
    if "input" not in flat:
        raise ConfigError("config must set data.input")
    base = os.path.dirname(os.path.abspath(path))
    if not os.path.isabs(flat["input"]):
        flat["input"] = os.path.join(base, flat["input"])
    if "percentile_levels" in flat:
        flat["percentile_levels"] = tuple(float(v) for v in flat["percentile_levels"])
    try:
        cfg = PipelineConfig(**flat)
        if overrides:
            cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.conditioning not in ("cumulative", "partial"):
        raise ConfigError("copula.conditioning must be 'cumulative' or 'partial'")
    if cfg.delta_mode not in ("frozen", "sampled"):
        raise ConfigError("simulate.delta_mode must be 'frozen' or 'sampled'")
    if cfg.paths < 0:
        raise ConfigError("simulate.paths must be >= 0")
    return cfg


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelBundle:
    params: NigParams
    monthly_delta: MonthlyDeltaSeries
    nu_ar: NuArModel
    copula: EmpiricalAutocopula
    provenance: dict

    def marginals(self) -> FrozenDeltaMarginals:
        return FrozenDeltaMarginals(self.params, self.monthly_delta)


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def make_provenance(input_bytes: bytes, cfg: PipelineConfig) -> dict:
    return {
        "input_sha256": _digest(input_bytes),
        "config_sha256": _digest(json.dumps(cfg.canonical_dict(),
                                            sort_keys=True).encode()),
        "seed": cfg.seed,
        "version": __version__,
    }


def _write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def provenance_line(provenance: dict) -> str:
    return ("# provenance input={input_sha256} config={config_sha256} "
            "seed={seed} version={version}".format(**provenance))


def save_bundle(bundle: ModelBundle, out_dir) -> list:
    os.makedirs(out_dir, exist_ok=True)
    prov = bundle.provenance
    written = []

    def emit(name, payload):
        path = os.path.join(out_dir, name)
        payload["provenance"] = prov
        _write_json(path, payload)
        written.append(path)

    emit("marginal.json", bundle.params.to_dict())
    emit("monthly_delta.json", bundle.monthly_delta.to_dict())
    emit("nu_ar.json", bundle.nu_ar.to_dict())
    emit("copula.json", bundle.copula.to_dict())
    _write_json(os.path.join(out_dir, "provenance.json"), dict(prov))
    written.append(os.path.join(out_dir, "provenance.json"))
    return written


def load_bundle(bundle_dir) -> ModelBundle:
    def read(name):
        path = os.path.join(bundle_dir, name)
        if not os.path.exists(path):
            raise DataError(f"bundle is missing {name}")
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    prov = read("provenance.json")
    return ModelBundle(
        params=NigParams.from_dict(read("marginal.json")),
        monthly_delta=MonthlyDeltaSeries.from_dict(read("monthly_delta.json")),
        nu_ar=NuArModel.from_dict(read("nu_ar.json")),
        copula=EmpiricalAutocopula.from_dict(read("copula.json")),
        provenance=prov)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

class _Stage:
    """Wraps a pipeline stage so failures carry the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (DataError, ConfigError)):
            raise NumericError(f"stage '{self.name}' failed: {exc}") from exc
        return False


def fit_global_marginal(series: ObservationSeries, cfg: PipelineConfig) -> NigParams:
    init = fit_moment_matching(series.values)
    return fit_mle(series.values, init, max_iter=cfg.mle_max_iter)


def run_pipeline(cfg: PipelineConfig, out_dir) -> tuple:
    """Execute the full pipeline; returns (bundle, report).

    The report maps output names to file paths plus a few scalar summaries.
    With ``paths == 0`` the run is fit-only and no ensemble files appear.
    """
    os.makedirs(out_dir, exist_ok=True)
    report = {"outputs": {}}

    with _Stage("ingest"):
        series = ingest_csv(cfg.input, cfg.date_column, cfg.value_column)
        with open(cfg.input, "rb") as fh:
            input_bytes = fh.read()
    report["n_observations"] = len(series)

    with _Stage("fit-marginal"):
        params = fit_global_marginal(series, cfg)
        report["log_likelihood"] = log_likelihood(params, series.values)

    with _Stage("fit-monthly-delta"):
        monthly = fit_monthly_delta(series.dates, series.values,
                                    (params.mu, params.alpha, params.beta),
                                    min_obs=cfg.min_obs_per_month)
    report["n_months"] = len(monthly.entries)

    with _Stage("fit-nu-ar"):
        nu_ar = fit_nu_ar(monthly, sigma_floor_frac=cfg.sigma_floor_frac)

    marginals = FrozenDeltaMarginals(params, monthly)
    with _Stage("pit-transform"):
        pit = pit_transform(series.dates, series.values, marginals)

    with _Stage("build-copula"):
        pairs = pit.pairs()
        target = cfg.target_per_rect or default_target_per_rect(len(pairs))
        copula = build_joint_cdf(build_partition(pairs, target))
    report["n_rectangles"] = len(copula.partition.rectangles)

    provenance = make_provenance(input_bytes, cfg)
    bundle = ModelBundle(params=params, monthly_delta=monthly, nu_ar=nu_ar,
                         copula=copula, provenance=provenance)
    for path in save_bundle(bundle, out_dir):
        report["outputs"][os.path.basename(path)] = path

    if cfg.paths > 0:
        with _Stage("simulate"):
            ensemble = _run_ensemble(bundle, cfg, series)
            report["outputs"].update(
                _write_ensemble_outputs(ensemble, cfg, provenance, out_dir))
        with _Stage("diagnose-tails"):
            grid = np.arange(cfg.tail_grid_step, 0.99, cfg.tail_grid_step)
            bands = tail_dependence_bands(ensemble, marginals, grid) \
                if cfg.paths >= 20 else None
            data_lower, data_upper = tail_dependence_curves(pairs, grid)
            path = os.path.join(out_dir, "tail_bands.csv")
            _write_tail_csv(path, provenance, grid, data_lower, data_upper, bands)
            report["outputs"]["tail_bands.csv"] = path

    # the persisted report lists basenames so reruns in different
    # directories stay byte-identical
    persisted = {**report, "outputs": sorted(report["outputs"]),
                 "provenance": provenance}
    _write_json(os.path.join(out_dir, "report.json"), persisted)
    report["outputs"]["report.json"] = os.path.join(out_dir, "report.json")
    return bundle, report


def _run_ensemble(bundle: ModelBundle, cfg: PipelineConfig,
                  series: ObservationSeries) -> SimulationEnsemble:
    horizon = cfg.horizon_days or len(series)
    sim_cfg = SimulationConfig(
        horizon=horizon, path_count=cfg.paths, seed=cfg.seed,
        start=series.dates[0], conditioning=cfg.conditioning, x0=cfg.x0,
        delta_mode=cfg.delta_mode, percentile_levels=cfg.percentile_levels)
    return simulate_ensemble(sim_cfg, bundle.copula, bundle.marginals(),
                             delta_model=bundle.nu_ar,
                             monthly_delta=bundle.monthly_delta)


def _write_ensemble_outputs(ensemble: SimulationEnsemble, cfg: PipelineConfig,
                            provenance: dict, out_dir) -> dict:
    outputs = {}
    path = os.path.join(out_dir, "monthly_percentiles.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(provenance_line(provenance) + "\n")
        fh.write("month,level,value\n")
        for month, level, value in ensemble.monthly_percentiles:
            fh.write(f"{month},{float(level)!r},{float(value)!r}\n")
    outputs["monthly_percentiles.csv"] = path

    if cfg.write_ensemble == "csv":
        path = os.path.join(out_dir, "ensemble.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(provenance_line(provenance) + "\n")
            fh.write("path,date,value\n")
            for i in range(ensemble.path_count):
                for d, x in zip(ensemble.dates, ensemble.paths[i]):
                    fh.write(f"{i},{d.isoformat()},{float(x)!r}\n")
        outputs["ensemble.csv"] = path
    elif cfg.write_ensemble == "binary":
        path = os.path.join(out_dir, "ensemble.bin")
        write_ensemble_binary(ensemble, path, provenance_line(provenance))
        outputs["ensemble.bin"] = path
    return outputs


def _write_tail_csv(path, provenance, grid, data_lower, data_upper, bands):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(provenance_line(provenance) + "\n")
        if bands is None:
            fh.write("u,data_lower,data_upper\n")
            for u, lo, up in zip(grid, data_lower, data_upper):
                fh.write(f"{float(u)!r},{float(lo)!r},{float(up)!r}\n")
            return
        fh.write("u,data_lower,data_upper,sim_lower_lo,sim_lower_hi,"
                 "sim_upper_lo,sim_upper_hi\n")
        for k, u in enumerate(grid):
            fh.write(f"{float(u)!r},{float(data_lower[k])!r},{float(data_upper[k])!r},"
                     f"{float(bands.lower_lo[k])!r},{float(bands.lower_hi[k])!r},"
                     f"{float(bands.upper_lo[k])!r},{float(bands.upper_hi[k])!r}\n")
