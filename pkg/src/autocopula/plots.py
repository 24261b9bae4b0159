"""Figure-ready CSV emission.

Only data files are produced, never rendered plots.  Every file starts with
a provenance comment line.  Figure ids:

  series                input series (date, value)
  tails                 rank-based tail-dependence curves of the data
  monthly-delta         fitted per-month deltas
  delta-fan             quantile fan of simulated delta paths
  copula-scatter        transformed PIT pairs (Phi1(v[t-1]), Phi2(v[t]))
  copula-surface        C(u1, u2) on a regular grid
  copula-density        rectangle-average copula density (constant per rect)
  ensemble-percentiles  pooled monthly percentiles of a simulated ensemble
  tail-bands            data curves with cross-path percentile bands
"""

from __future__ import annotations

import math
import os

import numpy as np

from .copula import pit_transform, tail_dependence_curves
from .pipeline import DataError, provenance_line
from .seasonal import simulate_delta_paths
from .simulate import tail_dependence_bands

__all__ = ["FIGURE_IDS", "emit_plot_data"]

FIGURE_IDS = ("series", "tails", "monthly-delta", "delta-fan",
              "copula-scatter", "copula-surface", "copula-density",
              "ensemble-percentiles", "tail-bands")


def _open_csv(out_dir, name, provenance, header):
    path = os.path.join(out_dir, name)
    fh = open(path, "w", encoding="utf-8")
    fh.write(provenance_line(provenance) + "\n")
    fh.write(header + "\n")
    return fh, path


def _require(which, **parts):
    missing = [name for name, value in parts.items() if value is None]
    if missing:
        raise DataError(f"figure '{which}' needs {', '.join(missing)}")
    return parts.values()


def emit_plot_data(which: str, out_dir, *, bundle=None, series=None,
                   ensemble=None, fan_months: int = 120,
                   fan_paths: int = 20_000) -> list:
    """Write the CSV(s) for one figure id; returns the written paths."""
    if which not in FIGURE_IDS:
        raise DataError(f"unknown figure id '{which}'; known: {FIGURE_IDS}")
    os.makedirs(out_dir, exist_ok=True)
    prov = bundle.provenance if bundle is not None else {
        "input_sha256": "-", "config_sha256": "-", "seed": "-", "version": "-"}
    grid = np.arange(0.02, 0.99, 0.02)

    if which == "series":
        (series,) = _require(which, series=series)
        fh, path = _open_csv(out_dir, "series.csv", prov, "date,value")
        with fh:
            for d, x in zip(series.dates, series.values):
                fh.write(f"{d.isoformat()},{float(x)!r}\n")
        return [path]

    if which == "monthly-delta":
        (bundle,) = _require(which, bundle=bundle)
        fh, path = _open_csv(out_dir, "monthly_delta.csv", prov,
                             "year,month,delta")
        with fh:
            for y, m, d in bundle.monthly_delta.entries:
                fh.write(f"{y},{m},{float(d)!r}\n")
        return [path]

    if which == "delta-fan":
        (bundle,) = _require(which, bundle=bundle)
        monthly = bundle.monthly_delta
        nu0 = math.sqrt(monthly.entries[-1][2])
        fan, _ = simulate_delta_paths(
            bundle.nu_ar, nu0=nu0, horizon_months=fan_months,
            path_count=fan_paths, seed=int(bundle.provenance["seed"]),
            start=monthly.last_month())
        fh, path = _open_csv(out_dir, "delta_fan.csv", prov,
                             "year,month,level,value")
        with fh:
            for y, m, level, value in fan.rows():
                fh.write(f"{y},{m},{float(level)!r},{float(value)!r}\n")
        return [path]

    if which == "tails":
        bundle, series = _require(which, bundle=bundle, series=series)
        pit = pit_transform(series.dates, series.values, bundle.marginals())
        lower, upper = tail_dependence_curves(pit.pairs(), grid)
        fh, path = _open_csv(out_dir, "tail_curves.csv", prov, "u,lower,upper")
        with fh:
            for u, lo, up in zip(grid, lower, upper):
                fh.write(f"{float(u)!r},{float(lo)!r},{float(up)!r}\n")
        return [path]

    if which == "copula-scatter":
        bundle, series = _require(which, bundle=bundle, series=series)
        pit = pit_transform(series.dates, series.values, bundle.marginals())
        pairs = pit.pairs()
        u1 = bundle.copula.phi1(pairs[:, 0])
        u2 = bundle.copula.phi2(pairs[:, 1])
        fh, path = _open_csv(out_dir, "copula_scatter.csv", prov, "u1,u2")
        with fh:
            for a, b in zip(u1, u2):
                fh.write(f"{float(a)!r},{float(b)!r}\n")
        return [path]

    if which == "copula-surface":
        (bundle,) = _require(which, bundle=bundle)
        from .copula import copula_eval

        g = np.linspace(0.0, 1.0, 101)
        fh, path = _open_csv(out_dir, "copula_surface.csv", prov, "u1,u2,c")
        with fh:
            for a in g:
                row = copula_eval(bundle.copula, np.full_like(g, a), g)
                for b, c in zip(g, row):
                    fh.write(f"{float(a)!r},{float(b)!r},{float(c)!r}\n")
        return [path]

    if which == "copula-density":
        (bundle,) = _require(which, bundle=bundle)
        cop = bundle.copula
        g = np.linspace(0.005, 0.995, 100)
        xs = cop.phi1_inv(g)
        ys = cop.phi2_inv(g)
        dens = np.zeros((g.size, g.size))
        total = cop.partition.total_count
        for lo1, hi1, lo2, hi2, count in cop.partition.rectangles:
            du1 = cop.phi1(hi1) - cop.phi1(lo1)
            du2 = cop.phi2(hi2) - cop.phi2(lo2)
            mask1 = (xs >= lo1) & (xs < hi1)
            mask2 = (ys >= lo2) & (ys < hi2)
            dens[np.ix_(mask1, mask2)] = (count / total) / (du1 * du2)
        fh, path = _open_csv(out_dir, "copula_density.csv", prov,
                             "u1,u2,density")
        with fh:
            for i, a in enumerate(g):
                for j, b in enumerate(g):
                    fh.write(f"{float(a)!r},{float(b)!r},{float(dens[i, j])!r}\n")
        return [path]

    if which == "ensemble-percentiles":
        (ensemble,) = _require(which, ensemble=ensemble)
        fh, path = _open_csv(out_dir, "ensemble_percentiles.csv", prov,
                             "month,level,value")
        with fh:
            for month, level, value in ensemble.monthly_percentiles:
                fh.write(f"{month},{float(level)!r},{float(value)!r}\n")
        fh2, path2 = _open_csv(out_dir, "ensemble_sample_path.csv", prov,
                               "date,value")
        with fh2:
            for d, x in zip(ensemble.dates, ensemble.paths[0]):
                fh2.write(f"{d.isoformat()},{float(x)!r}\n")
        return [path, path2]

    # tail-bands
    bundle, series, ensemble = _require(which, bundle=bundle, series=series,
                                        ensemble=ensemble)
    pit = pit_transform(series.dates, series.values, bundle.marginals())
    data_lower, data_upper = tail_dependence_curves(pit.pairs(), grid)
    bands = tail_dependence_bands(ensemble, bundle.marginals(), grid)
    fh, path = _open_csv(
        out_dir, "tail_bands_figure.csv", prov,
        "u,data_lower,data_upper,sim_lower_lo,sim_lower_hi,sim_upper_lo,sim_upper_hi")
    with fh:
        for k, u in enumerate(grid):
            fh.write(f"{float(u)!r},{float(data_lower[k])!r},{float(data_upper[k])!r},"
                     f"{float(bands.lower_lo[k])!r},{float(bands.lower_hi[k])!r},"
                     f"{float(bands.upper_lo[k])!r},{float(bands.upper_hi[k])!r}\n")
    return [path]
