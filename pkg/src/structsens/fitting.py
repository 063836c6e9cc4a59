"""Least-squares fitting of response families with a Nelder-Mead simplex.

A candidate family is matched either to a fixed response evaluated on a
uniform grid over the fitting region, or to sampled data inside the
region. Optional per-point weights emphasise part of the region, e.g. the
prey densities around the coexistence equilibrium.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .responses import Family, FunctionalResponse, PiecewiseResponse, _eval

__all__ = [
    "FitRegion",
    "FitResult",
    "SampledCurve",
    "objective",
    "nelder_mead",
    "fit_response",
    "PENALTY",
]

PENALTY = 1e30
N_GRID = 1000
RESTARTS = 8
TOL = 1e-12
MAX_ITER = 5000


@dataclass(frozen=True)
class FitRegion:
    x_lo: float
    x_hi: float
    n_grid: int = N_GRID
    weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not 0 <= self.x_lo < self.x_hi:
            raise ValueError(f"invalid fitting region [{self.x_lo}, {self.x_hi}]")
        if self.n_grid < 10:
            raise ValueError("n_grid must be at least 10")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != self.n_grid:
                raise ValueError("weights must have one entry per grid point")
            if any(v < 0 or not math.isfinite(v) for v in w):
                raise ValueError("weights must be finite and non-negative")
            object.__setattr__(self, "weights", w)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n_grid)

    def weight_array(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.n_grid)
        return np.asarray(self.weights)

    @classmethod
    def focused(cls, x_lo, x_hi, focus: tuple[float, float], outside: float,
                n_grid: int = N_GRID) -> "FitRegion":
        """Unit weight inside ``focus`` and ``outside`` elsewhere."""
        xs = np.linspace(x_lo, x_hi, n_grid)
        w = np.where((xs >= focus[0]) & (xs <= focus[1]), 1.0, outside)
        return cls(x_lo, x_hi, n_grid, tuple(w))


@dataclass(frozen=True)
class SampledCurve:
    """Observed predation rates ``f`` at prey densities ``x``."""

    x: tuple[float, ...]
    f: tuple[float, ...]
    w: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        f = tuple(float(v) for v in self.f)
        if len(x) != len(f) or not x:
            raise ValueError("x and f must be non-empty and of equal length")
        if x[0] < 0 or any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("sample x must be non-negative and strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)
        if self.w is not None:
            w = tuple(float(v) for v in self.w)
            if len(w) != len(x) or any(v < 0 for v in w):
                raise ValueError("w must be non-negative with one entry per sample")
            object.__setattr__(self, "w", w)

    @classmethod
    def from_csv(cls, path) -> "SampledCurve":
        rows = []
        with open(path, newline="") as fh:
            lines = (ln for ln in fh if not ln.lstrip().startswith("#"))
            reader = csv.DictReader(lines)
            if reader.fieldnames is None or not {"x", "f"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: CSV header must contain x,f")
            has_w = "w" in reader.fieldnames
            for row in reader:
                rows.append((float(row["x"]), float(row["f"]),
                             float(row["w"]) if has_w else None))
        rows.sort(key=lambda r: r[0])
        w = tuple(r[2] for r in rows) if has_w else None
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows), w)

    def restrict(self, region: FitRegion):
        x = np.asarray(self.x)
        mask = (x >= region.x_lo) & (x <= region.x_hi)
        w = np.ones(mask.sum()) if self.w is None else np.asarray(self.w)[mask]
        return x[mask], np.asarray(self.f)[mask], w


Target = Union[FunctionalResponse, PiecewiseResponse, SampledCurve]


@dataclass(frozen=True)
class FitResult:
    family: Family
    params: tuple[float, float]
    objective: float
    iterations: int
    converged: bool
    initial_objective: float = math.nan

    @property
    def response(self) -> FunctionalResponse:
        return FunctionalResponse(self.family, *self.params)

    def csv_row(self) -> list:
        return [self.family.key, repr(self.params[0]), repr(self.params[1]),
                repr(self.objective), str(self.converged).lower()]


def _target_values(target: Target, region: FitRegion):
    if isinstance(target, SampledCurve):
        x, f, w = target.restrict(region)
        if len(x) < 2:
            raise ValueError("fewer than two samples inside the fitting region")
        if region.weights is not None:
            raise ValueError("grid weights do not apply to sampled data; use the w column")
        return x, f, w
    xs = region.grid
    return xs, np.asarray(target(xs), dtype=float), region.weight_array()


def make_objective(family, target: Target, region: FitRegion) -> Callable:
    """Weighted sum of squared residuals as a function of ``(a, b)``."""
    family = Family.parse(family)
    xs, ys, w = _target_values(target, region)

    def obj(p):
        a, b = float(p[0]), float(p[1])
        if not (a > 0 and b > 0) or not (math.isfinite(a) and math.isfinite(b)):
            return PENALTY
        res = _eval(family, a, b, xs) - ys
        return float(np.dot(w, res * res))

    return obj


def objective(family, params, target: Target, region: FitRegion) -> float:
    return make_objective(family, target, region)(params)


def nelder_mead(
    obj: Callable,
    init: Sequence[float],
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    step: float = 0.05,
) -> tuple[np.ndarray, float, int, bool]:
    """Minimise ``obj`` with the classic simplex method.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
    Stops once the spread of objective values over the simplex is below
    ``tol * max(1, |f_best|)``.

    Returns
    -------
    x, f, iterations, converged
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(init, dtype=float)
    n = len(x0)
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] = v[i] * (1 + step) if v[i] != 0 else 0.00025
        simplex.append(v)
    simplex = np.array(simplex)
    fvals = np.array([obj(v) for v in simplex])

    it = 0
    converged = False
    while True:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if fvals[-1] - fvals[0] <= tol * max(1.0, abs(fvals[0])):
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = obj(xr)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = obj(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = obj(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = obj(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        best = simplex[0]
        simplex[1:] = best + 0.5 * (simplex[1:] - best)
        fvals[1:] = [obj(v) for v in simplex[1:]]
    return simplex[0].copy(), float(fvals[0]), it, converged


def _heuristic_init(family: Family, target: Target, region: FitRegion) -> tuple[float, float]:
    xs, ys, _ = _target_values(target, region)
    b0 = 1.0 / region.x_hi
    fmax = float(np.max(ys)) if np.max(ys) > 0 else 1.0
    # match the saturation level: a / b for Holling, a otherwise
    if family is Family.HOLLING:
        return fmax * b0, b0
    return fmax, b0


def fit_response(
    family,
    target: Target,
    region: FitRegion,
    restarts: int = RESTARTS,
    seed: int = 0,
    init: Optional[Sequence[float]] = None,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Best of ``restarts`` simplex runs from jittered starting points.

    Start 0 is the unjittered initial guess; the others scale each
    coordinate by a log-uniform factor in [0.5, 2] drawn from ``seed``.
    """
    family = Family.parse(family)
    if isinstance(target, (FunctionalResponse,)) and target.family == family:
        raise ValueError("candidate family must differ from the target family")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    obj = make_objective(family, target, region)
    base = np.asarray(init if init is not None else _heuristic_init(family, target, region),
                      dtype=float)
    rng = np.random.default_rng(seed)
    starts = [base]
    for _ in range(restarts - 1):
        starts.append(base * np.exp(rng.uniform(math.log(0.5), math.log(2.0), size=2)))
    best = None
    any_conv = False
    total_it = 0
    for s in starts:
        x, f, it, conv = nelder_mead(obj, s, tol, max_iter)
        total_it += it
        any_conv |= conv
        # strict < keeps the earliest start on ties
        if best is None or f < best[1]:
            best = (x, f, it, conv)
    x, f, it, conv = best
    return FitResult(family, (float(x[0]), float(x[1])), f, total_it, any_conv and conv,
                     obj(base))


def fit_to_self(response: FunctionalResponse, region: FitRegion, **kw) -> FitResult:
    """Fit a family to a member of itself (a recovery check)."""
    obj = make_objective(response.family, response, region)
    init = kw.pop("init", (response.a * 1.3, response.b * 0.8))
    x, f, it, conv = nelder_mead(obj, init, **kw)
    return FitResult(response.family, (float(x[0]), float(x[1])), f, it, conv, obj(init))


def write_fit_csv(results: Sequence[FitResult], path, header: str = "") -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header if header.endswith("\n") else header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "a", "b", "objective", "converged"])
        for r in results:
            w.writerow(r.csv_row())
