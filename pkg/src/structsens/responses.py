"""Functional response families and piecewise-identical responses.

Three saturating families are supported, all with ``f(0) = 0``:

* Holling type II:  ``a x / (1 + b x)``
* Ivlev:            ``a (1 - exp(-b x))``
* trigonometric:    ``a tanh(b x)``

A :class:`PiecewiseResponse` stitches two of these families together at
their non-trivial intersection points, e.g. ``HII`` uses Holling below the
first crossing and Ivlev above it.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Family",
    "FunctionalResponse",
    "PiecewiseResponse",
    "IntersectionSet",
    "eval_response",
    "response_derivative",
    "find_intersections",
    "make_piecewise",
    "eval_piecewise",
    "piecewise_from_code",
    "SCAN_POINTS",
    "BISECT_TOL",
]

SCAN_POINTS = 4096
BISECT_TOL = 1e-9


class Family(enum.IntEnum):
    """Response family. Integer values are used by the compiled kernels."""

    HOLLING = 0
    IVLEV = 1
    TRIG = 2

    @property
    def initial(self) -> str:
        return "HIT"[self.value]

    @property
    def key(self) -> str:
        return ("holling", "ivlev", "trig")[self.value]

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls(int(value))
        s = str(value).strip().lower()
        for fam in cls:
            if s in (fam.key, fam.initial.lower(), fam.name.lower()):
                return fam
        if s in ("trigonometric", "tanh"):
            return cls.TRIG
        raise ValueError(f"unknown response family {value!r}")


@dataclass(frozen=True)
class FunctionalResponse:
    """A two-parameter saturating predation rate ``f(x)``.

    Parameters
    ----------
    family : Family
        Functional form.
    a : float
        Rate scale (prey per predator per unit time).
    b : float
        Shape parameter (inverse prey density).
    """

    family: Family
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not (self.a > 0 and self.b > 0) or not (
            math.isfinite(self.a) and math.isfinite(self.b)
        ):
            raise ValueError(f"response parameters must be positive, got a={self.a}, b={self.b}")

    @property
    def code(self) -> str:
        return self.family.initial

    @property
    def sup(self) -> float:
        """Least upper bound of ``f`` on ``x > 0``."""
        if self.family is Family.HOLLING:
            return self.a / self.b
        return self.a

    def __call__(self, x):
        return eval_response(self, x)

    def derivative(self, x):
        return response_derivative(self, x)

    def pack(self):
        """Segment arrays ``(fam, a, b, breaks)`` consumed by the compiled kernels."""
        fam = np.full(3, int(self.family), dtype=np.int64)
        a = np.full(3, self.a)
        b = np.full(3, self.b)
        return fam, a, b, np.array([np.inf, np.inf])

    def to_dict(self) -> dict:
        return {"family": self.family.key, "a": self.a, "b": self.b}


def _check_domain(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("prey density must be non-negative")
    return arr


def _eval(fam: Family, a: float, b: float, x):
    if fam is Family.HOLLING:
        return a * x / (1.0 + b * x)
    if fam is Family.IVLEV:
        return -a * np.expm1(-b * x)
    return a * np.tanh(b * x)


def _deriv(fam: Family, a: float, b: float, x):
    if fam is Family.HOLLING:
        return a / (1.0 + b * x) ** 2
    if fam is Family.IVLEV:
        return a * b * np.exp(-b * x)
    # sech^2 written with exp(-2bx) so large bx underflows to 0 instead of overflowing
    e = np.exp(-2.0 * b * x)
    return 4.0 * a * b * e / (1.0 + e) ** 2


def _scalarize(arr, out):
    return float(out) if np.ndim(arr) == 0 else out


def eval_response(r: FunctionalResponse, x):
    """Evaluate ``f(x)``; accepts scalars or arrays, rejects negative ``x``."""
    arr = _check_domain(x)
    return _scalarize(arr, _eval(r.family, r.a, r.b, arr))


def response_derivative(r: FunctionalResponse, x):
    """Closed-form ``f'(x)``."""
    arr = _check_domain(x)
    return _scalarize(arr, _deriv(r.family, r.a, r.b, arr))


@dataclass(frozen=True)
class IntersectionSet:
    pair: tuple[Family, Family]
    points: tuple[float, ...]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _bisect(g, lo: float, hi: float, glo: float, tol: float) -> float:
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_intersections(
    r1: FunctionalResponse,
    r2: FunctionalResponse,
    domain: tuple[float, float] = (0.0, 4.0),
    tol: float = BISECT_TOL,
    n_scan: int = SCAN_POINTS,
    allow_same_family: bool = False,
) -> IntersectionSet:
    """All non-trivial crossings of ``r1`` and ``r2`` on ``domain``.

    The difference ``r1 - r2`` is scanned on a uniform grid and every sign
    change is refined by bisection to ``tol``. The common root at ``x = 0``
    is excluded. Identical responses have no isolated crossings and are
    rejected.
    """
    lo, hi = map(float, domain)
    if not hi > lo:
        raise ValueError(f"inverted intersection domain [{lo}, {hi}]")
    if lo < 0:
        raise ValueError("intersection domain must be non-negative")
    if r1.family == r2.family and not allow_same_family:
        raise ValueError("intersections require two different families")
    if r1 == r2:
        raise ValueError("identical responses intersect everywhere")

    def g(x):
        return _eval(r1.family, r1.a, r1.b, x) - _eval(r2.family, r2.a, r2.b, x)

    xs = np.linspace(lo, hi, n_scan)
    gs = g(xs)
    # the shared root at the origin is not a switching point
    floor = 0.5 * (hi - lo) / (n_scan - 1) if lo == 0.0 else 0.0
    points = []
    for i in range(n_scan - 1):
        g0, g1 = gs[i], gs[i + 1]
        if xs[i + 1] <= floor:
            continue
        if g0 == 0.0 and xs[i] > floor:
            points.append(float(xs[i]))
        elif g0 * g1 < 0:
            points.append(_bisect(g, float(xs[i]), float(xs[i + 1]), float(g0), tol))
    if gs[-1] == 0.0:
        points.append(float(xs[-1]))
    return IntersectionSet((r1.family, r2.family), tuple(points))


@dataclass(frozen=True)
class PiecewiseResponse:
    """Response built from two families switching at ``breakpoints``.

    ``segments[0]`` is used on ``[0, x1)``, ``segments[1]`` on ``[x1, x2)``
    and ``segments[2]`` on ``[x2, inf)``.
    """

    segments: tuple[FunctionalResponse, FunctionalResponse, FunctionalResponse]
    breakpoints: tuple[float, float]

    @property
    def code(self) -> str:
        return "".join(s.code for s in self.segments)

    @property
    def sup(self) -> float:
        return self.segments[2].sup

    def __call__(self, x):
        return eval_piecewise(self, x)

    def derivative(self, x):
        arr = _check_domain(x)
        out = np.empty_like(arr, dtype=float)
        for seg, mask in zip(self.segments, self._masks(arr)):
            out[mask] = _deriv(seg.family, seg.a, seg.b, arr[mask])
        return _scalarize(arr, out)

    def _masks(self, arr):
        x1, x2 = self.breakpoints
        return (arr < x1, (arr >= x1) & (arr < x2), arr >= x2)

    def pack(self):
        fam = np.array([int(s.family) for s in self.segments], dtype=np.int64)
        a = np.array([s.a for s in self.segments])
        b = np.array([s.b for s in self.segments])
        return fam, a, b, np.array(self.breakpoints, dtype=float)

    def to_dict(self) -> dict:
        first = self.segments[0]
        other = next(s for s in self.segments if s.family != first.family)
        return {
            "code": self.code,
            first.family.key: {"a": first.a, "b": first.b},
            other.family.key: {"a": other.a, "b": other.b},
        }


def make_piecewise(
    low: FunctionalResponse,
    mid: FunctionalResponse,
    high: FunctionalResponse,
    intersections: IntersectionSet | Sequence[float],
) -> PiecewiseResponse:
    segs = (low, mid, high)
    fams = {s.family for s in segs}
    if len(fams) != 2:
        raise ValueError(
            f"piecewise response needs exactly two families, got {''.join(s.code for s in segs)}"
        )
    by_family = {}
    for s in segs:
        if by_family.setdefault(s.family, s) != s:
            raise ValueError(f"conflicting parameters for family {s.family.key}")
    pts = sorted(p for p in intersections if p > 0)
    if isinstance(intersections, IntersectionSet) and set(intersections.pair) != fams:
        raise ValueError("intersections were computed for a different family pair")
    if len(pts) < 2:
        raise ValueError(f"need two non-trivial intersections, found {len(pts)}")
    if len(pts) > 2:
        warnings.warn(
            f"{len(pts)} intersections found; switching at the two smallest", stacklevel=2
        )
    return PiecewiseResponse(segs, (pts[0], pts[1]))


def piecewise_from_code(
    code: str, responses: dict, domain=(0.0, 4.0)
) -> PiecewiseResponse:
    """Build e.g. ``"TTH"`` from a ``{Family: FunctionalResponse}`` mapping."""
    code = code.strip().upper()
    if len(code) != 3:
        raise ValueError(f"piecewise code must have three letters, got {code!r}")
    lookup = {Family.parse(k): v for k, v in responses.items()}
    try:
        segs = [lookup[Family.parse(c)] for c in code]
    except KeyError as exc:
        raise ValueError(f"no parameters for family in code {code!r}") from exc
    fams = sorted({s.family for s in segs})
    if len(fams) != 2:
        raise ValueError(f"piecewise code {code!r} must use exactly two families")
    inter = find_intersections(lookup[fams[0]], lookup[fams[1]], domain)
    return make_piecewise(*segs, inter)


def eval_piecewise(p: PiecewiseResponse, x):
    arr = _check_domain(x)
    out = np.empty_like(arr, dtype=float)
    for seg, mask in zip(p.segments, p._masks(arr)):
        out[mask] = _eval(seg.family, seg.a, seg.b, arr[mask])
    return _scalarize(arr, out)
