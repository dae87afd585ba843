"""Finite-size-scaling collapse and entanglement growth-law fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

log = logging.getLogger(__name__)

CLEAN_QUALITY_MAX = 2.0
PREFERENCE_RATIO = 1.5


class CollapseError(ValueError):
    pass


class GrowthFitError(RuntimeError):
    def __init__(self, message: str, linearized: Optional[dict] = None):
        super().__init__(message)
        self.linearized = linearized


# --------------------------------------------------------------------------
# data collapse


@dataclass(frozen=True)
class ScalingDataset:
    """Per-size curves ``size -> (tau, y, dy)`` with ``tau`` ascending."""

    curves: dict

    @classmethod
    def from_arrays(cls, L, tau, y, dy) -> "ScalingDataset":
        L, tau, y, dy = (np.asarray(v, dtype=float) for v in (L, tau, y, dy))
        curves = {}
        for size in np.unique(L):
            m = L == size
            order = np.argsort(tau[m], kind="stable")
            curves[int(size)] = (tau[m][order], y[m][order], dy[m][order])
        data = cls(curves)
        data.validate()
        return data

    @property
    def sizes(self) -> list[int]:
        return sorted(self.curves)

    def validate(self):
        if len(self.curves) < 3:
            raise CollapseError(f"need at least 3 system sizes, got {len(self.curves)}")
        for size, (tau, y, dy) in self.curves.items():
            if len(tau) < 5:
                raise CollapseError(f"size {size} has {len(tau)} points; need at least 5")
            if np.any(np.diff(tau) <= 0):
                raise CollapseError(f"size {size} has repeated or unsorted tau values")
            if np.any(~(dy > 0)):
                raise CollapseError(f"size {size} has non-positive errors")
        first = next(iter(self.curves.values()))
        if all(
            len(c[0]) == len(first[0]) and np.array_equal(c[0], first[0]) and np.array_equal(c[1], first[1])
            for c in self.curves.values()
        ):
            raise CollapseError("all sizes carry identical data; scaling is degenerate")


def _master_curve(xs: np.ndarray, ys: np.ndarray, dys: np.ndarray, x: float):
    """Weighted linear fit through neighbour points evaluated at ``x``: ``(Y, dY^2)``."""
    w = 1.0 / dys**2
    K = w.sum()
    Kx = (w * xs).sum()
    Ky = (w * ys).sum()
    Kxx = (w * xs * xs).sum()
    Kxy = (w * xs * ys).sum()
    delta = K * Kxx - Kx * Kx
    if delta <= 1e-300 * max(K * Kxx, 1.0):
        return Ky / K, 1.0 / K
    Y = (Kxx * Ky - Kx * Kxy + x * (K * Kxy - Kx * Ky)) / delta
    dY2 = (Kxx - 2 * x * Kx + x * x * K) / delta
    return Y, max(dY2, 0.0)


def collapse_quality(data: ScalingDataset, tau_c: float, nu: float) -> float:
    """Mean squared, error-normalised distance of points from the master curve.

    Each point at scaled position ``x = (tau - tau_c) L^(1/nu)`` is compared
    with a weighted linear fit through the two bracketing points of every
    other size whose scaled range contains ``x``. Points no other size
    covers do not contribute. Values near 1 mean collapse within errors.
    """
    if not nu > 0:
        raise CollapseError(f"nu must be positive, got {nu}")
    scaled = {
        size: ((tau - tau_c) * size ** (1.0 / nu), y, dy) for size, (tau, y, dy) in data.curves.items()
    }
    total = 0.0
    n = 0
    for size, (x, y, dy) in scaled.items():
        for xi, yi, dyi in zip(x, y, dy):
            nx, ny, ndy = [], [], []
            for other, (ox, oy, ody) in scaled.items():
                if other == size or xi < ox[0] or xi > ox[-1]:
                    continue
                k = int(np.searchsorted(ox, xi, side="right")) - 1
                k = min(max(k, 0), len(ox) - 2)
                nx.extend(ox[k : k + 2])
                ny.extend(oy[k : k + 2])
                ndy.extend(ody[k : k + 2])
            if not nx:
                continue
            Y, dY2 = _master_curve(np.array(nx), np.array(ny), np.array(ndy), xi)
            total += (yi - Y) ** 2 / (dyi**2 + dY2)
            n += 1
    if n == 0:
        raise CollapseError("sizes do not overlap after scaling")
    return total / n


@dataclass
class CollapseResult:
    tau_c: float
    nu: float
    quality: float
    on_boundary: bool
    trace: list = field(default_factory=list, repr=False)
    grid_quality: Optional[np.ndarray] = field(default=None, repr=False)
    search_box: tuple = ()

    @property
    def clean(self) -> bool:
        """Off-boundary minimum whose residuals are consistent with the error bars."""
        return (not self.on_boundary) and self.quality <= CLEAN_QUALITY_MAX

    def summary(self) -> dict:
        finite = self.grid_quality[np.isfinite(self.grid_quality)] if self.grid_quality is not None else []
        return {
            "tau_c": self.tau_c,
            "nu": self.nu,
            "quality": self.quality,
            "on_boundary": self.on_boundary,
            "clean": self.clean,
            "search_box": {"tau": list(self.search_box[0]), "nu": list(self.search_box[1])}
            if self.search_box
            else None,
            "trace": {
                "evaluations": len(self.trace),
                "grid_min": float(np.min(finite)) if len(finite) else None,
                "grid_median": float(np.median(finite)) if len(finite) else None,
                "refinement_steps": sum(1 for step in self.trace if step[0] == "simplex"),
            },
        }


def _safe_quality(data, tau_c, nu):
    try:
        return collapse_quality(data, tau_c, nu)
    except CollapseError:
        return math.inf


def fit_collapse(
    data: ScalingDataset,
    tau_range: tuple,
    nu_range: tuple,
    grid_size: int = 21,
    boundary_fraction: float = 0.01,
) -> CollapseResult:
    """Minimise :func:`collapse_quality` over a box of ``(tau_c, nu)``.

    A ``grid_size x grid_size`` scan picks the start for a Nelder-Mead
    refinement confined to the box. ``on_boundary`` is set when the best grid
    cell lies on the box edge or the refined point is within
    ``boundary_fraction`` of the box width from it.
    """
    (t0, t1), (n0, n1) = tau_range, nu_range
    if not (t1 > t0 and n1 > n0 and n0 > 0):
        raise CollapseError("search box must be nonempty with positive nu")
    if grid_size < 21:
        raise ValueError("grid_size must be at least 21")
    data.validate()
    taus = np.linspace(t0, t1, grid_size)
    nus = np.linspace(n0, n1, grid_size)
    trace = []
    grid = np.empty((grid_size, grid_size))
    for i, tc in enumerate(taus):
        for j, nu in enumerate(nus):
            grid[i, j] = _safe_quality(data, tc, nu)
            trace.append(("grid", float(tc), float(nu), float(grid[i, j])))
    if not np.isfinite(grid).any():
        raise CollapseError("sizes do not overlap after scaling")
    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    best = (float(taus[i]), float(nus[j]), float(grid[i, j]))

    def objective(p):
        tc, nu = p
        if not (t0 <= tc <= t1 and n0 <= nu <= n1):
            return 1e12
        return _safe_quality(data, tc, nu)

    def record(xk):
        trace.append(("simplex", float(xk[0]), float(xk[1]), float(objective(xk))))

    step = np.array([(t1 - t0) / (grid_size - 1), (n1 - n0) / (grid_size - 1)])
    start = np.array(best[:2])
    simplex = np.array([start, start + [step[0], 0], start + [0, step[1]]])
    simplex = np.clip(simplex, [t0, n0], [t1, n1])
    res = scipy.optimize.minimize(
        objective,
        start,
        method="Nelder-Mead",
        callback=record,
        options={"initial_simplex": simplex, "xatol": 1e-5, "fatol": 1e-8, "maxiter": 2000},
    )
    tc, nu, q = float(res.x[0]), float(res.x[1]), float(res.fun)
    if not q <= best[2]:
        tc, nu, q = best
    edge_cell = i in (0, grid_size - 1) or j in (0, grid_size - 1)
    near_edge = (
        min(tc - t0, t1 - tc) < boundary_fraction * (t1 - t0)
        or min(nu - n0, n1 - nu) < boundary_fraction * (n1 - n0)
    )
    return CollapseResult(tc, nu, q, bool(edge_cell or near_edge), trace, grid, ((t0, t1), (n0, n1)))


# --------------------------------------------------------------------------
# growth laws


@dataclass(frozen=True)
class TimeSeries:
    t: np.ndarray
    values: np.ndarray
    errors: Optional[np.ndarray] = None
    samples: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("t and values must be 1-d arrays of equal length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)


def default_window(series: TimeSeries, t_min: float = 10.0, fraction: float = 0.95) -> tuple[float, float]:
    """``[t_min, t*]`` with ``t*`` the first time the series reaches
    ``fraction`` of its plateau (mean over the last decade of ``t``)."""
    t, s = series.t, series.values
    late = t >= t[-1] / 10.0
    plateau = s[late].mean()
    after = t >= t_min
    hit = np.flatnonzero(after & (s >= fraction * plateau))
    t_star = t[hit[0]] if len(hit) else t[-1]
    return float(t_min), float(t_star)


def _window(series: TimeSeries, window) -> tuple[np.ndarray, np.ndarray, tuple]:
    if window is None:
        window = default_window(series)
    lo, hi = window
    m = (series.t >= lo) & (series.t <= hi)
    t, s = series.t[m], series.values[m]
    if len(t) < 10:
        raise GrowthFitError(f"window [{lo:g}, {hi:g}] holds {len(t)} points; need at least 10")
    if t[0] < 2:
        raise GrowthFitError("fit window must start at t >= 2")
    return t, s, (float(lo), float(hi))


@dataclass(frozen=True)
class GrowthFit:
    model: str
    c: float
    gamma: float
    d: Optional[float]
    residual: float
    window: tuple
    gamma_err: float = math.nan
    n_points: int = 0

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "c": self.c,
            "gamma": self.gamma,
            "gamma_err": self.gamma_err,
            "d": self.d,
            "residual": self.residual,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _check_growth(s: np.ndarray):
    if np.ptp(s) <= 1e-12 * max(1.0, np.abs(s).max()):
        raise GrowthFitError("series is constant; growth exponent is undefined")
    if np.any(s <= 0):
        raise GrowthFitError("series must be positive inside the fit window")


def _least_squares(model, p0, x, s, name, linearized):
    try:
        res = scipy.optimize.least_squares(lambda p: model(p, x) - s, p0, method="lm", max_nfev=5000)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise GrowthFitError(f"{name} fit failed: {exc}", linearized) from exc
    if not res.success or not np.all(np.isfinite(res.x)):
        raise GrowthFitError(f"{name} fit did not converge: {res.message}", linearized)
    n, p = len(s), len(res.x)
    resid = res.fun
    err = math.nan
    if n > p:
        try:
            cov = np.linalg.inv(res.jac.T @ res.jac) * (resid @ resid) / (n - p)
            err = float(np.sqrt(max(cov[1, 1], 0.0)))
        except np.linalg.LinAlgError:
            pass
    return res.x, float(np.mean(resid**2)), err


class LogPowerModel:
    """``S = c (ln t)^gamma [+ d (ln t)^(gamma - 1)]``."""

    def __init__(self, subleading: bool = True):
        self.subleading = subleading
        self.name = "log-power+subleading" if subleading else "log-power"

    @staticmethod
    def _eval(p, x):
        c, g = p[0], p[1]
        out = c * x**g
        if len(p) > 2:
            out = out + p[2] * x ** (g - 1)
        return out

    def fit(self, t, s, window) -> GrowthFit:
        _check_growth(s)
        x = np.log(t)
        gamma0, logc0 = _linear_fit(np.log(x), np.log(s))
        linearized = {"c": math.exp(logc0), "gamma": gamma0}
        if not gamma0 > 0:
            raise GrowthFitError(f"no growth: linearized gamma = {gamma0:.3g}", linearized)
        p0 = [math.exp(logc0), gamma0] + ([0.0] if self.subleading else [])
        p, resid, gerr = _least_squares(self._eval, p0, x, s, self.name, linearized)
        if not p[1] > 0:
            raise GrowthFitError(f"fitted gamma {p[1]:.3g} is not positive", linearized)
        d = float(p[2]) if self.subleading else None
        return GrowthFit(self.name, float(p[0]), float(p[1]), d, resid, window, gerr, len(t))


class AlgebraicModel:
    """``S = c t^gamma``."""

    name = "algebraic"

    @staticmethod
    def _eval(p, t):
        return p[0] * t ** p[1]

    def fit(self, t, s, window) -> GrowthFit:
        _check_growth(s)
        gamma0, logc0 = _linear_fit(np.log(t), np.log(s))
        linearized = {"c": math.exp(logc0), "gamma": gamma0}
        p, resid, gerr = _least_squares(self._eval, [math.exp(logc0), gamma0], t, s, self.name, linearized)
        return GrowthFit(self.name, float(p[0]), float(p[1]), None, resid, window, gerr, len(t))


def fit_log_power(series: TimeSeries, window=None, subleading: bool = True) -> GrowthFit:
    """Nonlinear least-squares fit of ``c (ln t)^gamma + d (ln t)^(gamma-1)``.

    The start point comes from regressing ``ln S`` on ``ln ln t``. With
    ``subleading=False`` the ``d`` term is dropped.
    """
    t, s, win = _window(series, window)
    return LogPowerModel(subleading).fit(t, s, win)


@dataclass(frozen=True)
class ModelComparison:
    first: GrowthFit
    second: GrowthFit
    ratio: float
    preferred: str
    window: tuple

    def to_dict(self) -> dict:
        return {
            "first": self.first.to_dict(),
            "second": self.second.to_dict(),
            "residual_ratio": self.ratio,
            "preferred": self.preferred,
            "window": list(self.window),
        }


def compare_models(series: TimeSeries, window, first, second) -> ModelComparison:
    """Fit two models on one window; ``ratio = residual(second) / residual(first)``."""
    t, s, win = _window(series, window)
    f1 = first.fit(t, s, win)
    f2 = second.fit(t, s, win)
    if f1.residual == 0 and f2.residual == 0:
        ratio = 1.0
    elif f1.residual == 0:
        ratio = math.inf
    else:
        ratio = f2.residual / f1.residual
    if ratio > PREFERENCE_RATIO:
        preferred = first.name
    elif ratio < 1.0 / PREFERENCE_RATIO:
        preferred = second.name
    else:
        preferred = "inconclusive"
    return ModelComparison(f1, f2, ratio, preferred, win)


def compare_growth_models(series: TimeSeries, window=None) -> ModelComparison:
    """Log-power (with subleading term) versus algebraic growth."""
    return compare_models(series, window, LogPowerModel(subleading=True), AlgebraicModel())
