"""Monthly scale calibration and seasonal mean-reverting dynamics.

The NIG scale delta is held constant within each calendar month and fitted by
maximizing the joint likelihood with (mu, alpha, beta) shared across months;
given shared parameters the likelihood separates, so each month is an
independent 1-D search.  The monthly series nu = sqrt(delta) then follows

    nu[t+1] = a * nu[t] + b(t) + sigma(t) * z[t+1]

with b and sigma periodic (constant plus cos/sin harmonics at periods 12, 6,
4 and 3 months), fitted by two-stage least squares.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .nig import NigParams, nig_logpdf
from .streams import path_stream

__all__ = [
    "MonthlyDeltaSeries",
    "NuArModel",
    "DeltaFan",
    "HARMONIC_PERIODS",
    "seasonal_value",
    "harmonic_basis",
    "fit_monthly_delta",
    "fit_nu_ar",
    "simulate_delta_paths",
]

HARMONIC_PERIODS = (12.0, 6.0, 4.0, 3.0)

# nu can cross zero under the Gaussian recursion; delta = nu^2 must stay
# positive, so simulated nu is floored here.
NU_FLOOR = 1e-4

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def month_index(year: int, month: int) -> int:
    return year * 12 + (month - 1)


def harmonic_basis(t) -> np.ndarray:
    """Design row(s) [1, cos, sin, ...] for the seasonal harmonics at month t."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    cols = [np.ones_like(t_arr)]
    for period in HARMONIC_PERIODS:
        ang = 2.0 * np.pi * t_arr / period
        cols.append(np.cos(ang))
        cols.append(np.sin(ang))
    return np.stack(cols, axis=-1)


def seasonal_value(coeffs, t):
    """Evaluate c0 + sum_k [c_cos*cos(2*pi*t/P_k) + c_sin*sin(2*pi*t/P_k)]."""
    coeffs = np.asarray(coeffs, dtype=float)
    out = harmonic_basis(t) @ coeffs
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class MonthlyDeltaSeries:
    """Ordered per-month delta estimates, consecutive months, all positive."""

    entries: tuple  # of (year, month, delta)

    def __post_init__(self):
        entries = tuple((int(y), int(m), float(d)) for y, m, d in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValueError("MonthlyDeltaSeries requires at least one entry")
        for y, m, d in entries:
            if not 1 <= m <= 12:
                raise ValueError(f"bad month {y}-{m:02d}")
            if not d > 0:
                raise ValueError(f"delta must be > 0, got {d} for {y}-{m:02d}")
        idx = [month_index(y, m) for y, m, _ in entries]
        if any(b - a != 1 for a, b in zip(idx[:-1], idx[1:])):
            raise ValueError("months must be consecutive without gaps")

    def month_indices(self) -> np.ndarray:
        return np.array([month_index(y, m) for y, m, _ in self.entries])

    def deltas(self) -> np.ndarray:
        return np.array([d for _, _, d in self.entries])

    def nu(self) -> np.ndarray:
        return np.sqrt(self.deltas())

    def last_month(self) -> tuple:
        y, m, _ = self.entries[-1]
        return (y, m)

    def delta_for(self, year: int, month: int) -> float:
        for y, m, d in self.entries:
            if (y, m) == (year, month):
                return d
        raise KeyError(f"no delta fitted for {year}-{month:02d}")

    def monthly_means(self) -> dict:
        """Calendar-month mean delta, for use beyond the fitted window."""
        acc = {}
        for _, m, d in self.entries:
            acc.setdefault(m, []).append(d)
        return {m: float(np.mean(v)) for m, v in acc.items()}

    def to_dict(self) -> dict:
        return {"entries": [[y, m, d] for y, m, d in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "MonthlyDeltaSeries":
        return cls(entries=tuple((y, m, x) for y, m, x in d["entries"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "MonthlyDeltaSeries":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class NuArModel:
    """AR(1) with periodic level and volatility for nu = sqrt(delta)."""

    a: float
    b_coeffs: tuple
    sigma_coeffs: tuple
    sigma_floor: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b_coeffs", tuple(float(c) for c in self.b_coeffs))
        object.__setattr__(self, "sigma_coeffs", tuple(float(c) for c in self.sigma_coeffs))
        object.__setattr__(self, "sigma_floor", float(self.sigma_floor))
        if not abs(self.a) < 1:
            raise ValueError(f"|a| must be < 1 for stationarity, got {self.a}")
        # 0 admits the exactly-deterministic test double; fitted models
        # always carry a strictly positive floor.
        if not self.sigma_floor >= 0:
            raise ValueError("sigma_floor must be nonnegative")
        n = 1 + 2 * len(HARMONIC_PERIODS)
        if len(self.b_coeffs) != n or len(self.sigma_coeffs) != n:
            raise ValueError(f"expected {n} coefficients per periodic function")

    def b_at(self, t):
        return seasonal_value(self.b_coeffs, t)

    def sigma_at(self, t):
        fit = np.maximum(seasonal_value(self.sigma_coeffs, t), self.sigma_floor**2)
        out = np.sqrt(fit)
        return out if np.ndim(t) else float(out)

    def to_dict(self) -> dict:
        return {"a": self.a, "b_coeffs": list(self.b_coeffs),
                "sigma_coeffs": list(self.sigma_coeffs),
                "sigma_floor": self.sigma_floor}

    @classmethod
    def from_dict(cls, d: dict) -> "NuArModel":
        return cls(a=d["a"], b_coeffs=d["b_coeffs"],
                   sigma_coeffs=d["sigma_coeffs"], sigma_floor=d["sigma_floor"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "NuArModel":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class DeltaFan:
    """Per-month quantiles of simulated delta paths."""

    months: tuple  # of (year, month)
    levels: tuple  # percent levels, ascending
    values: np.ndarray = field(repr=False)  # (n_months, n_levels)
    path_count: int

    def rows(self):
        for (y, m), row in zip(self.months, self.values):
            for level, value in zip(self.levels, row):
                yield y, m, level, float(value)


def _golden_min(fun, lo: float, hi: float, tol: float = 1e-8) -> float:
    """Golden-section minimum of a unimodal function on [lo, hi]."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def _fit_delta_one_month(values: np.ndarray, mu: float, alpha: float,
                         beta: float) -> float:
    def neg_ll(log_delta):
        p = NigParams(mu=mu, alpha=alpha, beta=beta, delta=math.exp(log_delta))
        return -float(np.sum(nig_logpdf(p, values)))

    grid = np.linspace(math.log(1e-6), math.log(1e6), 61)
    scan = np.array([neg_ll(g) for g in grid])
    k = int(np.argmin(scan))
    if k == 0 or k == len(grid) - 1:
        raise RuntimeError("monthly delta likelihood maximized at search boundary")
    return math.exp(_golden_min(neg_ll, grid[k - 1], grid[k + 1]))


def fit_monthly_delta(dates, values, shared, min_obs: int = 5) -> MonthlyDeltaSeries:
    """Per-month MLE of delta with (mu, alpha, beta) shared.

    The joint likelihood separates by month, so each month is solved as an
    independent golden-section search on log delta.
    """
    mu, alpha, beta = shared
    NigParams(mu=mu, alpha=alpha, beta=beta, delta=1.0)  # validate shared params
    values = np.asarray(values, dtype=float)
    if len(dates) != values.size:
        raise ValueError("dates and values must have equal length")

    groups = {}
    for d, x in zip(dates, values):
        groups.setdefault((d.year, d.month), []).append(x)

    keys = sorted(groups, key=lambda ym: month_index(*ym))
    idx = [month_index(*ym) for ym in keys]
    missing = [f"{t // 12}-{t % 12 + 1:02d}"
               for t in range(idx[0], idx[-1] + 1) if t not in set(idx)]
    if missing:
        raise ValueError("months with no observations inside the data window: "
                         + ", ".join(missing))
    starved = [f"{y}-{m:02d}" for y, m in keys if len(groups[(y, m)]) < min_obs]
    if starved:
        raise ValueError(f"months with fewer than {min_obs} observations: "
                         + ", ".join(starved))

    entries = []
    for y, m in keys:
        delta = _fit_delta_one_month(np.asarray(groups[(y, m)]), mu, alpha, beta)
        entries.append((y, m, delta))
    return MonthlyDeltaSeries(entries=tuple(entries))


def fit_nu_ar(deltas: MonthlyDeltaSeries, sigma_floor_frac: float = 0.05) -> NuArModel:
    """Two-stage least squares for the seasonal AR model of nu = sqrt(delta).

    Stage one regresses nu[t+1] on (nu[t], harmonics of t); stage two
    regresses squared residuals on the same harmonics, floored so sigma
    stays positive.
    """
    nu = deltas.nu()
    if nu.size < 36:
        raise ValueError(f"need at least 36 monthly values, got {nu.size}")
    t = deltas.month_indices() % 12  # harmonics are 12-periodic

    basis = harmonic_basis(t[:-1].astype(float))
    design = np.column_stack([nu[:-1], basis])
    y = nu[1:]
    if design.shape[0] < design.shape[1]:
        raise ValueError("degenerate design matrix: fewer transitions than regressors")
    theta, *_ = np.linalg.lstsq(design, y, rcond=None)
    if not np.all(np.isfinite(theta)):
        raise ValueError("degenerate design matrix: least squares failed")
    a = float(theta[0])
    if not abs(a) < 1:
        raise ValueError(f"fitted AR coefficient {a} is non-stationary; "
                         "try a shorter harmonic basis")

    resid = y - design @ theta
    sigma_coeffs, *_ = np.linalg.lstsq(basis, resid**2, rcond=None)
    floor = sigma_floor_frac * float(np.std(resid))
    floor = max(floor, 1e-12)
    return NuArModel(a=a, b_coeffs=tuple(theta[1:]),
                     sigma_coeffs=tuple(sigma_coeffs), sigma_floor=floor)


def simulate_delta_paths(model: NuArModel, nu0: float, horizon_months: int,
                         path_count: int, seed: int, start: tuple,
                         levels=(1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0)):
    """Iterate the nu recursion and return (DeltaFan, delta paths).

    ``start`` is the (year, month) that nu0 belongs to; simulated months are
    the ``horizon_months`` that follow.  Each path uses its own Philox
    substream keyed on (seed, path index), so results are reproducible and
    order-independent.
    """
    if horizon_months < 1 or path_count < 1:
        raise ValueError("horizon_months and path_count must be >= 1")
    levels = tuple(sorted(float(v) for v in levels))
    t0 = month_index(*start)
    months = tuple(((t0 + 1 + j) // 12, (t0 + 1 + j) % 12 + 1)
                   for j in range(horizon_months))

    src_t = (np.arange(horizon_months) + t0) % 12
    b_vals = model.b_at(src_t.astype(float))
    sigma_vals = model.sigma_at(src_t.astype(float))

    z = np.empty((path_count, horizon_months))
    for i in range(path_count):
        z[i] = path_stream(seed, i).standard_normal(horizon_months)

    nu = np.full(path_count, float(nu0))
    paths = np.empty((path_count, horizon_months))
    for j in range(horizon_months):
        nu = model.a * nu + b_vals[j] + sigma_vals[j] * z[:, j]
        nu = np.maximum(nu, NU_FLOOR)
        paths[:, j] = nu**2

    values = np.percentile(paths, levels, axis=0).T
    fan = DeltaFan(months=months, levels=levels, values=values,
                   path_count=path_count)
    return fan, paths
