"""Rosenzweig-MacArthur and Leslie-Gower-May predator-prey vector fields.

Both models share logistic prey growth ``r x (1 - x/K)`` minus predation
``f(x) y``. They differ in the predator equation:

* RM:  ``dy/dt = f(x) y - m y``
* LGM: ``dy/dt = s y (1 - q y / x)``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq, least_squares

from .responses import Family, FunctionalResponse, PiecewiseResponse

__all__ = [
    "ModelKind",
    "ModelSpec",
    "State",
    "EquilibriumSet",
    "vector_field",
    "coexistence_equilibrium",
    "equilibria",
    "jacobian",
    "is_stable",
    "calibrate_lgm",
    "LGMCalibration",
    "lgm_hopf_K",
    "hopf_ordered",
    "hopf_ordering_scan",
    "X_FLOOR",
]

Response = Union[FunctionalResponse, PiecewiseResponse]

X_FLOOR = 1e-12


class ModelKind(enum.Enum):
    RM = "rm"
    LGM = "lgm"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        s = str(value).strip().lower()
        aliases = {"rosenzweigmacarthur": "rm", "rosenzweig-macarthur": "rm",
                   "lesliegowermay": "lgm", "leslie-gower-may": "lgm", "may": "lgm"}
        try:
            return cls(aliases.get(s, s))
        except ValueError:
            raise ValueError(f"unknown model {value!r}; expected 'rm' or 'lgm'") from None


class SingularityError(ValueError):
    """Predator equation of LGM evaluated at zero prey."""


@dataclass(frozen=True)
class ModelSpec:
    """Model kind, ecological parameters and functional response.

    ``m`` is used by RM only; ``s`` and ``q`` by LGM only.
    """

    kind: ModelKind
    r: float
    K: float
    response: Response
    m: Optional[float] = None
    s: Optional[float] = None
    q: Optional[float] = None
    x_floor: float = X_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if not (self.r > 0 and self.K > 0):
            raise ValueError("r and K must be positive")
        if self.kind is ModelKind.RM:
            if self.m is None:
                raise ValueError("RM model requires mortality m")
            if not self.m > 0:
                raise ValueError("m must be positive")
            if self.m >= self.response.sup:
                raise ValueError(
                    f"m={self.m} is not below the response saturation {self.response.sup:g}; "
                    "no coexistence equilibrium"
                )
        else:
            for name in ("s", "q"):
                v = getattr(self, name)
                if v is None:
                    raise ValueError(f"LGM model requires {name}")
                if not v > 0:
                    raise ValueError(f"{name} must be positive")

    def with_K(self, K: float) -> "ModelSpec":
        return replace(self, K=float(K))

    def with_response(self, response: Response) -> "ModelSpec":
        return replace(self, response=response)

    @property
    def params(self) -> np.ndarray:
        """``[r, K, m or 0, s or 0, q or 0, x_floor]`` for the compiled kernels."""
        return np.array([
            self.r, self.K, self.m or 0.0, self.s or 0.0, self.q or 0.0, self.x_floor
        ])


@dataclass(frozen=True)
class State:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("state must be finite")
        if self.x < 0 or self.y < 0:
            raise ValueError("densities must be non-negative")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class EquilibriumSet:
    extinction: State
    prey_only: State
    coexistence: Optional[State]
    coexistence_stable: Optional[bool]


def vector_field(spec: ModelSpec, st) -> tuple[float, float]:
    x, y = st
    f = spec.response(x)
    logistic = spec.r * x * (1.0 - x / spec.K)
    dx = logistic - f * y
    if spec.kind is ModelKind.RM:
        return dx, f * y - spec.m * y
    if x <= 0.0:
        if y > 0.0:
            raise SingularityError("LGM predator equation is undefined at x=0 with y>0")
        return dx, 0.0
    return dx, spec.s * y * (1.0 - spec.q * y / x)


def _bracketed_root(g, lo: float, hi: float) -> Optional[float]:
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if glo * ghi > 0:
        return None
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _rm_prey_star(spec: ModelSpec) -> Optional[float]:
    resp, m = spec.response, spec.m
    if isinstance(resp, FunctionalResponse):
        a, b = resp.a, resp.b
        if resp.family is Family.HOLLING:
            return m / (a - b * m) if a > b * m else None
        if m >= a:
            return None
        if resp.family is Family.IVLEV:
            return -math.log1p(-m / a) / b
        return math.atanh(m / a) / b
    # piecewise responses: f is increasing, so f(x) = m has one root
    hi = 1.0
    while resp(hi) <= m:
        hi *= 2.0
        if hi > 1e12:
            return None
    return _bracketed_root(lambda x: resp(x) - m, 0.0, hi)


def coexistence_equilibrium(spec: ModelSpec) -> Optional[State]:
    """Interior equilibrium, or ``None`` when it is absent or not positive."""
    if spec.kind is ModelKind.RM:
        xs = _rm_prey_star(spec)
        if xs is None or not 0 < xs < spec.K:
            return None
        ys = spec.r * xs * (1.0 - xs / spec.K) / spec.response(xs)
    else:
        g = lambda x: spec.r * (1.0 - x / spec.K) - spec.response(x) / spec.q  # noqa: E731
        # g(0+) = r > 0 and g(K) < 0, and g is strictly decreasing
        xs = _bracketed_root(g, 0.0, spec.K)
        if xs is None or xs <= 0:
            return None
        ys = xs / spec.q
    if not ys > 0:
        return None
    return State(float(xs), float(ys))


def jacobian(spec: ModelSpec, st) -> np.ndarray:
    x, y = st
    f = spec.response(x)
    df = spec.response.derivative(x)
    j11 = spec.r * (1.0 - 2.0 * x / spec.K) - df * y
    j12 = -f
    if spec.kind is ModelKind.RM:
        return np.array([[j11, j12], [df * y, f - spec.m]])
    if x <= 0.0:
        raise SingularityError("LGM Jacobian is undefined at x=0")
    ratio = y / x
    return np.array([
        [j11, j12],
        [spec.s * spec.q * ratio**2, spec.s * (1.0 - 2.0 * spec.q * ratio)],
    ])


def is_stable(spec: ModelSpec, st) -> bool:
    return bool(np.max(np.linalg.eigvals(jacobian(spec, st)).real) < 0)


def equilibria(spec: ModelSpec) -> EquilibriumSet:
    co = coexistence_equilibrium(spec)
    return EquilibriumSet(
        extinction=State(0.0, 0.0),
        prey_only=State(spec.K, 0.0),
        coexistence=co,
        coexistence_stable=None if co is None else is_stable(spec, co),
    )


# --------------------------------------------------------------------------
# LGM calibration
#
# With y* = x*/q, the coexistence and zero-trace conditions reduce to
#     r + s = (2 f(u) - u f'(u)) / q,      K = u / (1 - f(u) / (q r)),
# so the Hopf K of every response depends on (q r, q s) only. The remaining
# freedom is a time rescaling (r, s, q) -> (l r, l s, q / l) and must be
# pinned by one anchor value.


@dataclass(frozen=True)
class LGMCalibration:
    r: float
    s: float
    q: float
    hopf_K: tuple[float, ...]
    targets: tuple[float, ...]
    residuals: tuple[float, ...]
    converged: bool

    @property
    def max_rel_residual(self) -> float:
        return max(abs(v) for v in self.residuals)


def lgm_hopf_K(response: Response, qr: float, qs: float) -> float:
    """Hopf carrying capacity of LGM for given ``q r`` and ``q s``."""
    c = qr + qs

    def h(u):
        return 2.0 * response(u) - u * response.derivative(u) - c

    hi = 1.0
    while h(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    u = brentq(h, 1e-14, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    den = 1.0 - response(u) / qr
    return u / den if den > 0 else math.inf


def hopf_ordered(ks) -> bool:
    """Strictly increasing Hopf values, with absent ones (inf) only at the top."""
    ks = list(ks)
    fin = [k for k in ks if math.isfinite(k)]
    if any(not math.isfinite(k) for k in ks[: len(fin)]):
        return False
    return all(a < b for a, b in zip(fin, fin[1:]))


def hopf_ordering_scan(responses, qr: float, qs: float, span: float = 10.0, n: int = 9,
                       ) -> tuple[int, int, list[tuple[float, float, float]]]:
    """Check :func:`hopf_ordered` on a log grid of ``(r, s, q)`` scale factors.

    Each factor runs over ``geomspace(1/sqrt(span), sqrt(span), n)``, so every
    parameter covers a ``span``-fold range around the reference ``(q r, q s)``.

    Returns
    -------
    (n_checked, n_finite, violations)
        ``n_finite`` counts points where every response has a Hopf point;
        ``violations`` lists the offending factor triples.
    """
    fac = np.geomspace(span ** -0.5, span ** 0.5, n)
    n_fin, bad = 0, []
    for a in fac:
        for b in fac:
            for c in fac:
                ks = [lgm_hopf_K(f, qr * a * c, qs * b * c) for f in responses]
                n_fin += all(math.isfinite(k) for k in ks)
                if not hopf_ordered(ks):
                    bad.append((float(a), float(b), float(c)))
    return n ** 3, n_fin, bad


def calibrate_lgm(
    responses,
    targets,
    anchor: tuple[str, float] = ("q", 212.0),
    guess: tuple[float, float] = (400.0, 200.0),
) -> LGMCalibration:
    """Solve LGM ``(r, s, q)`` so each response has its target Hopf ``K``.

    Parameters
    ----------
    responses : sequence of FunctionalResponse
    targets : sequence of float
        Hopf carrying capacities, one per response.
    anchor : (name, value)
        Fixes the time scale: one of ``("r", v)``, ``("s", v)``, ``("q", v)``.
    """
    responses = list(responses)
    targets = np.asarray(targets, dtype=float)
    if len(responses) != len(targets) or len(responses) < 2:
        raise ValueError("need at least two responses with one target each")

    def resid(logp):
        qr, qs = np.exp(logp)
        return np.array([
            math.log(lgm_hopf_K(resp, qr, qs) / kt) for resp, kt in zip(responses, targets)
        ])

    sol = least_squares(resid, np.log(guess), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    qr, qs = np.exp(sol.x)
    name, value = anchor
    if name == "q":
        q = value
    elif name == "r":
        q = qr / value
    elif name == "s":
        q = qs / value
    else:
        raise ValueError(f"anchor must be r, s or q, got {name!r}")
    hopf = tuple(lgm_hopf_K(resp, qr, qs) for resp in responses)
    rel = tuple(h / t - 1.0 for h, t in zip(hopf, targets))
    return LGMCalibration(
        r=qr / q,
        s=qs / q,
        q=q,
        hopf_K=hopf,
        targets=tuple(targets),
        residuals=rel,
        converged=bool(sol.success) and max(abs(v) for v in rel) < 0.01,
    )
