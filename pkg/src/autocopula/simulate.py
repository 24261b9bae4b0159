"""Markov path simulation through the fitted autocopula.

One step of the chain: u1 = Phi1(v[t]); draw u2 from the conditional CDF at
u1 (either C(u1, u)/u1 as the algorithm is written, or the exact partial
derivative dC/du1); v[t+1] = Phi2^-1(u2); finally x[t] = F_t^-1(v[t]) through
the time-varying NIG marginals.  Paths get independent Philox substreams
keyed on (seed, path index), so ensembles are reproducible and can be merged
deterministically by path index.
"""

from __future__ import annotations

import datetime as dt
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .copula import EmpiricalAutocopula, PIT_CLIP, tail_dependence_curves
from .nig import NigParams, nig_cdf, nig_inv_cdf
from .seasonal import MonthlyDeltaSeries, NuArModel, simulate_delta_paths
from .streams import path_stream

__all__ = [
    "Ar1Spec",
    "SimulationConfig",
    "SimulationEnsemble",
    "FrozenDeltaMarginals",
    "SampledDeltaMarginals",
    "TailBands",
    "simulate_path",
    "simulate_ensemble",
    "ar1_gaussian_copula_oracle",
    "tail_dependence_bands",
    "write_ensemble_binary",
    "read_ensemble_binary",
]

CONDITIONING_MODES = ("cumulative", "partial")

# offset keeps delta-path substreams disjoint from innovation substreams
_DELTA_SEED_OFFSET = 1_000_000_007


@dataclass(frozen=True)
class Ar1Spec:
    """AR(1) recursion y[t] = alpha_ar * y[t-1] + beta_ar + sigma_ar * eps."""

    alpha_ar: float
    beta_ar: float
    sigma_ar: float

    def __post_init__(self):
        if not abs(self.alpha_ar) < 1:
            raise ValueError("|alpha_ar| must be < 1")
        if not self.sigma_ar > 0:
            raise ValueError("sigma_ar must be > 0")

    def stationary_mean(self) -> float:
        return self.beta_ar / (1.0 - self.alpha_ar)

    def stationary_var(self) -> float:
        return self.sigma_ar**2 / (1.0 - self.alpha_ar**2)


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for one ensemble run; marginals and copula are passed alongside."""

    horizon: int
    path_count: int
    seed: int
    start: dt.date
    conditioning: str = "cumulative"
    x0: float | None = None  # None: marginal median at t=0
    delta_mode: str = "frozen"
    percentile_levels: tuple = (1.0, 5.0, 50.0, 95.0, 99.0)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.path_count < 1:
            raise ValueError("path_count must be >= 1")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")
        if self.delta_mode not in ("frozen", "sampled"):
            raise ValueError("delta_mode must be 'frozen' or 'sampled'")
        object.__setattr__(self, "percentile_levels",
                           tuple(sorted(float(v) for v in self.percentile_levels)))

    def dates(self) -> tuple:
        return tuple(self.start + dt.timedelta(days=i) for i in range(self.horizon))


class FrozenDeltaMarginals:
    """Per-date NIG marginals with delta frozen at the fitted monthly values.

    Months inside the fitted window use their own delta; months beyond it
    fall back to the calendar-month mean.
    """

    def __init__(self, base: NigParams, monthly: MonthlyDeltaSeries):
        self.base = base
        self.monthly = monthly
        self._means = monthly.monthly_means()
        self._cache = {}

    def __call__(self, date) -> NigParams:
        key = (date.year, date.month)
        if key not in self._cache:
            try:
                delta = self.monthly.delta_for(*key)
            except KeyError:
                delta = self._means[date.month]
            self._cache[key] = NigParams(mu=self.base.mu, alpha=self.base.alpha,
                                         beta=self.base.beta, delta=delta)
        return self._cache[key]


class SampledDeltaMarginals:
    """Per-date marginals driven by one simulated delta path."""

    def __init__(self, base: NigParams, months, deltas):
        self.base = base
        self._by_month = {(y, m): NigParams(mu=base.mu, alpha=base.alpha,
                                            beta=base.beta, delta=float(d))
                          for (y, m), d in zip(months, deltas)}

    def __call__(self, date) -> NigParams:
        try:
            return self._by_month[(date.year, date.month)]
        except KeyError:
            raise KeyError(f"no delta simulated for {date.year}-{date.month:02d}")


def _marginal_cdf(m, x):
    return m.cdf(x) if hasattr(m, "cdf") else nig_cdf(m, x)


def _marginal_inv(m, q):
    return m.inv_cdf(q) if hasattr(m, "inv_cdf") else nig_inv_cdf(m, q)


def _simulate_v_chain(copula: EmpiricalAutocopula, v0: float, n_steps: int,
                      rng, conditioning: str) -> np.ndarray:
    """Iterate the copula kernel in PIT space, returning v[0..n_steps].

    Tables are indexed directly: step 2a-2b compose Phi1_inv(Phi1(v)), which
    is v itself, so the conditional column is read off at v without the
    round trip through u1-space.
    """
    cumulative = conditioning == "cumulative"
    x_edges, y_edges = copula.x_edges, copula.y_edges
    mass, cx = copula.mass, copula.cx
    phi1v, phi2v = copula.phi1_values, copula.phi2_values
    last_cell = len(x_edges) - 2
    v = np.empty(n_steps + 1)
    v[0] = min(max(v0, PIT_CLIP), 1.0 - PIT_CLIP)
    draws = np.clip(rng.uniform(size=n_steps), 1e-12, 1.0 - 1e-12)
    for t in range(n_steps):
        vt = v[t]
        i = min(max(int(np.searchsorted(x_edges, vt, side="right")) - 1, 0),
                last_cell)
        if cumulative:
            u1 = np.interp(vt, x_edges, phi1v)
            vals = (mass[i, :] + (vt - x_edges[i]) * cx[i, :]) / u1
        else:
            col = cx[i, :]
            vals = col / col[-1]
        u2 = np.interp(draws[t], vals, phi2v)
        v[t + 1] = min(max(np.interp(u2, phi2v, y_edges), PIT_CLIP),
                       1.0 - PIT_CLIP)
    return v


def _invert_by_month(dates, v_matrix: np.ndarray, marginals) -> np.ndarray:
    """x = F_t^-1(v) with one vectorized inversion per calendar month."""
    out = np.empty_like(v_matrix)
    cols_by_params = {}
    for j, d in enumerate(dates):
        cols_by_params.setdefault(marginals(d), []).append(j)
    for params, cols in cols_by_params.items():
        cols = np.asarray(cols)
        block = v_matrix[:, cols]
        out[:, cols] = np.reshape(_marginal_inv(params, block.ravel()), block.shape)
    return out


def simulate_path(copula: EmpiricalAutocopula, marginals, dates, x0: float,
                  rng, conditioning: str = "cumulative") -> np.ndarray:
    """One simulated series over ``dates`` starting from x0.

    Quantile-inversion failures propagate; a path is never silently patched.
    """
    p0 = marginals(dates[0])
    v0 = float(_marginal_cdf(p0, x0))
    v = _simulate_v_chain(copula, v0, len(dates) - 1, rng, conditioning)
    x = _invert_by_month(dates, v[None, :], marginals)[0]
    x[0] = x0
    return x


@dataclass(frozen=True)
class SimulationEnsemble:
    """Simulated paths plus pooled per-month percentile statistics."""

    dates: tuple
    paths: np.ndarray = field(repr=False)  # (path_count, horizon)
    levels: tuple
    monthly_percentiles: tuple  # of (month_key, level, value)

    @property
    def path_count(self) -> int:
        return self.paths.shape[0]


def _monthly_percentiles(dates, paths: np.ndarray, levels) -> tuple:
    cols = {}
    for j, d in enumerate(dates):
        cols.setdefault(f"{d.year:04d}-{d.month:02d}", []).append(j)
    rows = []
    for key in sorted(cols):
        pooled = paths[:, cols[key]].ravel()
        for level, value in zip(levels, np.percentile(pooled, levels)):
            rows.append((key, level, float(value)))
    return tuple(rows)


def simulate_ensemble(cfg: SimulationConfig, copula: EmpiricalAutocopula,
                      marginals, delta_model: NuArModel | None = None,
                      monthly_delta: MonthlyDeltaSeries | None = None
                      ) -> SimulationEnsemble:
    """Independent paths with per-path substreams, merged by path index.

    With ``delta_mode='sampled'`` every path draws its own delta path from
    the seasonal model (full uncertainty propagation); the default keeps the
    fitted deltas frozen.
    """
    dates = cfg.dates()
    per_path_marginals = [marginals] * cfg.path_count
    if cfg.delta_mode == "sampled":
        if delta_model is None or monthly_delta is None:
            raise ValueError("delta_mode='sampled' needs delta_model and monthly_delta")
        first = dates[0]
        anchor_idx = first.year * 12 + first.month - 1 - 1  # month before start
        anchor = (anchor_idx // 12, anchor_idx % 12 + 1)
        try:
            nu0 = math.sqrt(monthly_delta.delta_for(*anchor))
        except KeyError:
            nu0 = float(np.mean(monthly_delta.nu()))
        last = dates[-1]
        n_months = (last.year * 12 + last.month) - (first.year * 12 + first.month) + 1
        _, delta_paths = simulate_delta_paths(
            delta_model, nu0=nu0, horizon_months=n_months,
            path_count=cfg.path_count, seed=cfg.seed + _DELTA_SEED_OFFSET,
            start=anchor)
        months = [((anchor_idx + 1 + j) // 12, (anchor_idx + 1 + j) % 12 + 1)
                  for j in range(n_months)]
        base = marginals.base if hasattr(marginals, "base") else marginals(first)
        per_path_marginals = [SampledDeltaMarginals(base, months, delta_paths[i])
                              for i in range(cfg.path_count)]

    v_matrix = np.empty((cfg.path_count, cfg.horizon))
    for i in range(cfg.path_count):
        m_i = per_path_marginals[i]
        x0 = cfg.x0 if cfg.x0 is not None else float(_marginal_inv(m_i(dates[0]), 0.5))
        rng = path_stream(cfg.seed, i)
        v0 = float(_marginal_cdf(m_i(dates[0]), x0))
        v_matrix[i] = _simulate_v_chain(copula, v0, cfg.horizon - 1, rng,
                                        cfg.conditioning)

    if cfg.delta_mode == "sampled":
        paths = np.empty_like(v_matrix)
        for i in range(cfg.path_count):
            paths[i] = _invert_by_month(dates, v_matrix[i:i + 1],
                                        per_path_marginals[i])[0]
    else:
        paths = _invert_by_month(dates, v_matrix, marginals)
    if cfg.x0 is not None:
        paths[:, 0] = cfg.x0

    rows = _monthly_percentiles(dates, paths, cfg.percentile_levels)
    return SimulationEnsemble(dates=dates, paths=paths,
                              levels=cfg.percentile_levels,
                              monthly_percentiles=rows)


def ar1_gaussian_copula_oracle(spec: Ar1Spec, n: int, seed: int):
    """Direct AR(1) iteration versus the copula-framework construction.

    The framework series uses the stationary normal marginal and the
    Gaussian autocopula with off-diagonal alpha; conditioning uses the
    closed-form partial derivative z2 | z1 ~ N(alpha*z1, 1 - alpha^2).
    Returns (direct, framework), independently seeded.
    """
    a, b, s = spec.alpha_ar, spec.beta_ar, spec.sigma_ar
    mean = spec.stationary_mean()
    sd = math.sqrt(spec.stationary_var())

    rng_direct = path_stream(seed, 0)
    eps = rng_direct.standard_normal(n)
    direct = np.empty(n)
    direct[0] = mean + sd * eps[0]
    for t in range(1, n):
        direct[t] = a * direct[t - 1] + b + s * eps[t]

    rng_frame = path_stream(seed, 1)
    draws = np.clip(rng_frame.uniform(size=n), 1e-12, 1.0 - 1e-12)
    w = ndtri(draws)
    root = math.sqrt(1.0 - a * a)
    v = np.empty(n)
    v[0] = draws[0]
    for t in range(1, n):
        v[t] = ndtr(a * ndtri(v[t - 1]) + root * w[t])
    v = np.clip(v, 1e-15, 1.0 - 1e-15)
    framework = mean + sd * ndtri(v)
    return direct, framework


@dataclass(frozen=True)
class TailBands:
    """Cross-path percentile bands of rank-based tail-dependence curves."""

    grid: np.ndarray = field(repr=False)
    lower_lo: np.ndarray = field(repr=False)
    lower_hi: np.ndarray = field(repr=False)
    upper_lo: np.ndarray = field(repr=False)
    upper_hi: np.ndarray = field(repr=False)
    band: tuple = (5.0, 95.0)


def tail_dependence_bands(ensemble: SimulationEnsemble, marginals, grid,
                          band=(5.0, 95.0), min_paths: int = 20) -> TailBands:
    """PIT each path through the fitted marginals, compute its rank-based
    tail curves, then take per-u percentiles across paths."""
    if ensemble.path_count < min_paths:
        raise ValueError(f"need at least {min_paths} paths, got {ensemble.path_count}")
    grid = np.asarray(grid, dtype=float)

    cols_by_params = {}
    for j, d in enumerate(ensemble.dates):
        cols_by_params.setdefault(marginals(d), []).append(j)
    v = np.empty_like(ensemble.paths)
    for params, cols in cols_by_params.items():
        cols = np.asarray(cols)
        block = ensemble.paths[:, cols]
        v[:, cols] = np.reshape(_marginal_cdf(params, block.ravel()), block.shape)

    lower = np.empty((ensemble.path_count, grid.size))
    upper = np.empty((ensemble.path_count, grid.size))
    for i in range(ensemble.path_count):
        pairs = np.column_stack([v[i, :-1], v[i, 1:]])
        lower[i], upper[i] = tail_dependence_curves(pairs, grid)

    lo_q, hi_q = band
    return TailBands(
        grid=grid,
        lower_lo=np.percentile(lower, lo_q, axis=0),
        lower_hi=np.percentile(lower, hi_q, axis=0),
        upper_lo=np.percentile(upper, lo_q, axis=0),
        upper_hi=np.percentile(upper, hi_q, axis=0),
        band=(float(lo_q), float(hi_q)))


# ---------------------------------------------------------------------------
# ensemble persistence: framed binary layout
#   magic 'ACEN' | u32 version | u64 path_count | u64 horizon |
#   u32 provenance length | provenance line (utf-8) |
#   horizon * i64 epoch-days | path_count*horizon * f64 row-major values
# ---------------------------------------------------------------------------

_MAGIC = b"ACEN"
_BIN_VERSION = 1


def write_ensemble_binary(ensemble: SimulationEnsemble, path,
                          provenance_line: str = ""):
    days = np.array([(d - dt.date(1970, 1, 1)).days for d in ensemble.dates],
                    dtype="<i8")
    values = np.ascontiguousarray(ensemble.paths, dtype="<f8")
    prov = provenance_line.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQ", _BIN_VERSION, ensemble.path_count,
                             len(ensemble.dates)))
        fh.write(struct.pack("<I", len(prov)))
        fh.write(prov)
        fh.write(days.tobytes())
        fh.write(values.tobytes())


def read_ensemble_binary(path) -> tuple:
    """Returns (dates, paths, provenance line) from the framed layout."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not an ensemble binary file")
        version, n_paths, horizon = struct.unpack("<IQQ", fh.read(20))
        if version != _BIN_VERSION:
            raise ValueError(f"unsupported ensemble binary version {version}")
        (prov_len,) = struct.unpack("<I", fh.read(4))
        prov = fh.read(prov_len).decode("utf-8")
        days = np.frombuffer(fh.read(8 * horizon), dtype="<i8")
        values = np.frombuffer(fh.read(8 * n_paths * horizon), dtype="<f8")
    dates = tuple(dt.date(1970, 1, 1) + dt.timedelta(days=int(d)) for d in days)
    return dates, values.reshape(n_paths, horizon).copy(), prov
