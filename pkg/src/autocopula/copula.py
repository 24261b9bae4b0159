"""Empirical autocopula built from PIT pairs.

The unit square is partitioned into rectangles holding roughly equal numbers
of (v[t-1], v[t]) pairs by alternating-axis median splits.  The joint CDF Phi
is the cumulative integral of the per-rectangle densities, hence piecewise
bilinear and strictly increasing; its marginals Phi1, Phi2 are strictly
increasing piecewise-linear maps, and

    C(u1, u2) = Phi(Phi1^-1(u1), Phi2^-1(u2))

is a genuine copula (uniform margins, 2-increasing) that reproduces every
rectangle's empirical mass exactly.  Conditional CDFs in both conventions
(C(u1, u)/u1 and dC/du1) are piecewise linear with knots at the images of the
Phi2 breakpoints, so they invert by binary search plus linear interpolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nig import nig_cdf

__all__ = [
    "PIT_CLIP",
    "PitSeries",
    "RectPartition",
    "EmpiricalAutocopula",
    "PiecewiseLinearFn",
    "pit_transform",
    "build_partition",
    "build_joint_cdf",
    "copula_eval",
    "conditional_cdf",
    "conditional_partial_cdf",
    "inverse_conditional",
    "tail_dependence_curves",
    "sample_copula_pairs",
    "empirical_copula",
]

PIT_CLIP = 1e-9

COPULA_FILE_VERSION = 1


@dataclass(frozen=True)
class PitSeries:
    """Probability-integral-transformed observations, aligned to dates."""

    dates: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("PIT values must lie in [0, 1]")
        if len(self.dates) != v.size:
            raise ValueError("dates and values must have equal length")

    def pairs(self) -> np.ndarray:
        """Unit-lag pairs (v[t-1], v[t]) as an (n-1, 2) array."""
        return np.column_stack([self.values[:-1], self.values[1:]])


def pit_transform(dates, values, marginal_provider, clip: float = PIT_CLIP) -> PitSeries:
    """Map observations through their per-date marginal CDFs.

    ``marginal_provider`` is a callable date -> NigParams; a LookupError from
    it is reported as a missing marginal.
    """
    values = np.asarray(values, dtype=float)
    params = []
    for d in dates:
        try:
            params.append(marginal_provider(d))
        except LookupError as exc:
            raise ValueError(f"no marginal defined for date {d}") from exc
    out = np.empty(values.size)
    by_params = {}
    for i, p in enumerate(params):
        by_params.setdefault(p, []).append(i)
    for p, idx in by_params.items():
        idx = np.asarray(idx)
        out[idx] = nig_cdf(p, values[idx])
    np.clip(out, clip, 1.0 - clip, out=out)
    return PitSeries(dates=tuple(dates), values=out)


@dataclass(frozen=True)
class RectPartition:
    """Equal-count tiling of the unit square; rectangles carry sample counts."""

    rectangles: tuple  # of (u1_lo, u1_hi, u2_lo, u2_hi, count)
    total_count: int

    def __post_init__(self):
        rects = tuple((float(a), float(b), float(c), float(d), int(n))
                      for a, b, c, d, n in self.rectangles)
        object.__setattr__(self, "rectangles", rects)
        if sum(r[4] for r in rects) != self.total_count:
            raise ValueError("rectangle counts do not add up to total_count")
        if any(r[4] < 1 for r in rects):
            raise ValueError("every rectangle must contain at least one sample")
        if any(not (r[0] < r[1] and r[2] < r[3]) for r in rects):
            raise ValueError("degenerate rectangle")

    def counts(self) -> np.ndarray:
        return np.array([r[4] for r in self.rectangles])

    def area_total(self) -> float:
        return float(sum((r[1] - r[0]) * (r[3] - r[2]) for r in self.rectangles))


def _dedupe_axis(coords: np.ndarray) -> np.ndarray:
    """Break exact coordinate ties with deterministic offsets <= 1e-12."""
    out = coords.copy()
    order = np.argsort(out, kind="stable")
    sorted_vals = out[order]
    run_start = 0
    for i in range(1, len(sorted_vals) + 1):
        if i == len(sorted_vals) or sorted_vals[i] != sorted_vals[run_start]:
            run = i - run_start
            if run > 1:
                step = 1e-12 / run
                out[order[run_start:i]] += step * np.arange(run)
            run_start = i
    return out


def build_partition(pairs, target_per_rect: int) -> RectPartition:
    """Alternating-axis median splits until every leaf holds <= target points."""
    pts = np.asarray(pairs, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array")
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("pairs must lie in the unit square")
    if target_per_rect < 8:
        raise ValueError("target_per_rect must be >= 8")
    n = pts.shape[0]
    if n < 4 * target_per_rect:
        raise ValueError(f"need at least {4 * target_per_rect} pairs, got {n}")

    work = np.column_stack([_dedupe_axis(pts[:, 0]), _dedupe_axis(pts[:, 1])])

    rects = []
    stack = [(0.0, 1.0, 0.0, 1.0, np.arange(n), 0)]
    while stack:
        lo1, hi1, lo2, hi2, idx, depth = stack.pop()
        if idx.size <= target_per_rect:
            rects.append((lo1, hi1, lo2, hi2, idx.size))
            continue
        axis = depth % 2
        coords = work[idx, axis]
        order = np.argsort(coords, kind="stable")
        k = idx.size // 2
        split = 0.5 * (coords[order[k - 1]] + coords[order[k]])
        left, right = idx[order[:k]], idx[order[k:]]
        if axis == 0:
            stack.append((lo1, split, lo2, hi2, left, depth + 1))
            stack.append((split, hi1, lo2, hi2, right, depth + 1))
        else:
            stack.append((lo1, hi1, lo2, split, left, depth + 1))
            stack.append((lo1, hi1, split, hi2, right, depth + 1))

    rects.sort(key=lambda r: (r[0], r[2]))
    return RectPartition(rectangles=tuple(rects), total_count=n)


def default_target_per_rect(n_pairs: int) -> int:
    return max(32, -(-n_pairs // 256))


class EmpiricalAutocopula:
    """Piecewise-bilinear joint CDF with its marginals and copula view.

    Construct via :func:`build_joint_cdf`.  Instances are immutable and safe
    for concurrent evaluation.
    """

    def __init__(self, partition: RectPartition):
        self.partition = partition
        rects = partition.rectangles
        total = partition.total_count
        self.x_edges = np.unique(np.array([r[0] for r in rects] + [r[1] for r in rects]))
        self.y_edges = np.unique(np.array([r[2] for r in rects] + [r[3] for r in rects]))
        nx, ny = len(self.x_edges) - 1, len(self.y_edges) - 1
        d = np.zeros((nx, ny))
        for lo1, hi1, lo2, hi2, count in rects:
            i0 = np.searchsorted(self.x_edges, lo1)
            i1 = np.searchsorted(self.x_edges, hi1)
            j0 = np.searchsorted(self.y_edges, lo2)
            j1 = np.searchsorted(self.y_edges, hi2)
            d[i0:i1, j0:j1] = count / (total * (hi1 - lo1) * (hi2 - lo2))
        if not np.all(d > 0.0):
            raise ValueError("partition does not tile the unit square")
        dx = np.diff(self.x_edges)
        dy = np.diff(self.y_edges)
        # renormalize away float rounding so Phi(1,1) is 1 to machine precision
        d /= float(np.sum(d * dx[:, None] * dy[None, :]))
        self.density = d
        cell_mass = d * dx[:, None] * dy[None, :]
        m = np.zeros((nx + 1, ny + 1))
        m[1:, 1:] = np.cumsum(np.cumsum(cell_mass, axis=0), axis=1)
        self.mass = m
        # dPhi/dx on cell-column i at y-edge j, and dPhi/dy symmetrically
        self.cx = np.zeros((nx, ny + 1))
        self.cx[:, 1:] = np.cumsum(d * dy[None, :], axis=1)
        self.cy = np.zeros((nx + 1, ny))
        self.cy[1:, :] = np.cumsum(d * dx[:, None], axis=0)
        # marginal knot tables: Phi1(x) = Phi(x, 1), Phi2(y) = Phi(1, y)
        self.phi1_values = m[:, -1]
        self.phi2_values = m[-1, :]

    # -- joint CDF ---------------------------------------------------------

    def _cells(self, x, y):
        i = np.clip(np.searchsorted(self.x_edges, x, side="right") - 1,
                    0, len(self.x_edges) - 2)
        j = np.clip(np.searchsorted(self.y_edges, y, side="right") - 1,
                    0, len(self.y_edges) - 2)
        return i, j

    def phi(self, x, y):
        """Joint CDF Phi(x, y), exact on each bilinear cell."""
        x_a = np.asarray(x, dtype=float)
        y_a = np.asarray(y, dtype=float)
        i, j = self._cells(x_a, y_a)
        sx = x_a - self.x_edges[i]
        sy = y_a - self.y_edges[j]
        out = (self.mass[i, j] + sx * self.cx[i, j] + sy * self.cy[i, j]
               + self.density[i, j] * sx * sy)
        return out if out.ndim else float(out)

    def phi1(self, x):
        out = np.interp(x, self.x_edges, self.phi1_values)
        return out if np.ndim(x) else float(out)

    def phi2(self, y):
        out = np.interp(y, self.y_edges, self.phi2_values)
        return out if np.ndim(y) else float(out)

    def phi1_inv(self, u):
        out = np.interp(u, self.phi1_values, self.x_edges)
        return out if np.ndim(u) else float(out)

    def phi2_inv(self, u):
        out = np.interp(u, self.phi2_values, self.y_edges)
        return out if np.ndim(u) else float(out)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": COPULA_FILE_VERSION,
            "rectangles": [list(r) for r in self.partition.rectangles],
            "total_count": self.partition.total_count,
            "phi1_knots": [self.x_edges.tolist(), self.phi1_values.tolist()],
            "phi2_knots": [self.y_edges.tolist(), self.phi2_values.tolist()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmpiricalAutocopula":
        if data.get("version") != COPULA_FILE_VERSION:
            raise ValueError(f"unsupported copula file version {data.get('version')}")
        part = RectPartition(
            rectangles=tuple(tuple(r) for r in data["rectangles"]),
            total_count=int(data["total_count"]))
        cop = cls(part)
        stored = np.asarray(data["phi1_knots"][1])
        if stored.size != cop.phi1_values.size or \
                not np.allclose(stored, cop.phi1_values, atol=1e-12):
            raise ValueError("stored marginal knots are inconsistent with rectangles")
        return cop

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "EmpiricalAutocopula":
        return cls.from_dict(json.loads(s))


def build_joint_cdf(partition: RectPartition) -> EmpiricalAutocopula:
    """Cumulative integral of the scaled rectangle indicators."""
    return EmpiricalAutocopula(partition)


def copula_eval(c: EmpiricalAutocopula, u1, u2):
    """C(u1, u2) = Phi(Phi1^-1(u1), Phi2^-1(u2))."""
    slack = 1e-9  # tolerate round-off from compositions like phi1(phi1_inv(u))
    u1_a = np.asarray(u1, dtype=float)
    u2_a = np.asarray(u2, dtype=float)
    if np.any(u1_a < -slack) or np.any(u1_a > 1 + slack) \
            or np.any(u2_a < -slack) or np.any(u2_a > 1 + slack):
        raise ValueError("copula arguments must lie in [0, 1]")
    u1_a = np.clip(u1_a, 0.0, 1.0)
    u2_a = np.clip(u2_a, 0.0, 1.0)
    out = c.phi(c.phi1_inv(u1_a), c.phi2_inv(u2_a))
    if np.ndim(out):
        return np.clip(out, 0.0, 1.0)
    return min(max(out, 0.0), 1.0)


@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Strictly increasing piecewise-linear function on [0, 1]."""

    knots: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __call__(self, u):
        out = np.interp(u, self.knots, self.values)
        return out if np.ndim(u) else float(out)


def conditional_cdf(c: EmpiricalAutocopula, u1: float) -> PiecewiseLinearFn:
    """The simulation kernel as written: u -> C(u1, u) / u1."""
    if not 0.0 < u1 <= 1.0:
        raise ValueError(f"u1 must lie in (0, 1], got {u1}")
    x = c.phi1_inv(u1)
    i = min(int(np.searchsorted(c.x_edges, x, side="right")) - 1,
            len(c.x_edges) - 2)
    i = max(i, 0)
    col = c.mass[i, :] + (x - c.x_edges[i]) * c.cx[i, :]
    return PiecewiseLinearFn(knots=c.phi2_values, values=col / u1)


def conditional_partial_cdf(c: EmpiricalAutocopula, u1: float) -> PiecewiseLinearFn:
    """Exact partial-derivative conditioning u -> dC/du1(u1, u)."""
    if not 0.0 < u1 < 1.0:
        raise ValueError(f"u1 must lie in (0, 1), got {u1}")
    x = c.phi1_inv(u1)
    i = min(int(np.searchsorted(c.x_edges, x, side="right")) - 1,
            len(c.x_edges) - 2)
    i = max(i, 0)
    col = c.cx[i, :]
    return PiecewiseLinearFn(knots=c.phi2_values, values=col / col[-1])


def inverse_conditional(f: PiecewiseLinearFn, u):
    """Invert an increasing piecewise-linear function by interpolation."""
    out = np.interp(u, f.values, f.knots)
    return out if np.ndim(u) else float(out)


def empirical_copula(pairs: np.ndarray, u1, u2):
    """Rank-based step empirical copula of raw pairs, evaluated on a grid."""
    from scipy.stats import rankdata

    pairs = np.asarray(pairs, dtype=float)
    n = pairs.shape[0]
    rx = rankdata(pairs[:, 0], method="average") / n
    ry = rankdata(pairs[:, 1], method="average") / n
    u1_a = np.atleast_1d(np.asarray(u1, dtype=float))
    u2_a = np.atleast_1d(np.asarray(u2, dtype=float))
    out = np.mean((rx[None, :] <= u1_a[:, None]) & (ry[None, :] <= u2_a[:, None]),
                  axis=1)
    return out if np.ndim(u1) else float(out[0])


def tail_dependence_curves(source, grid):
    """Lower C(u,u)/u and upper (1 - C(1,u) - C(u,1) + C(u,u))/(1-u) curves.

    ``source`` is either a fitted EmpiricalAutocopula or an (n, 2) array of
    raw pairs, in which case the rank-based empirical copula is used.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ValueError("grid values must lie in (0, 1)")
    if isinstance(source, EmpiricalAutocopula):
        cuu = copula_eval(source, grid, grid)
        c1u = copula_eval(source, np.ones_like(grid), grid)
        cu1 = copula_eval(source, grid, np.ones_like(grid))
    else:
        pairs = np.asarray(source, dtype=float)
        cuu = empirical_copula(pairs, grid, grid)
        c1u = empirical_copula(pairs, np.ones_like(grid), grid)
        cu1 = empirical_copula(pairs, grid, np.ones_like(grid))
    lower = np.clip(cuu / grid, 0.0, 1.0)
    upper = np.clip((1.0 - c1u - cu1 + cuu) / (1.0 - grid), 0.0, 1.0)
    return lower, upper


def sample_copula_pairs(c: EmpiricalAutocopula, n: int, rng) -> np.ndarray:
    """Draw iid pairs from the copula measure via dC/du1 conditioning."""
    u1 = rng.uniform(size=n)
    u2 = np.empty(n)
    for k in range(n):
        u2[k] = inverse_conditional(conditional_partial_cdf(c, u1[k]),
                                    rng.uniform())
    return np.column_stack([u1, u2])
