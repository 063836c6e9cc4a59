"""Hopf location, simulation sweeps over K and bistability detection.

The Hopf point is located from the Jacobian at the coexistence equilibrium
and is the reference value. Sweeps integrate each (K, initial condition)
cell, keep the post-transient extrema and classify the cell as a point
attractor or a cycle. A K where one initial condition settles on the
equilibrium while another keeps cycling is bistable; the lower edge of the
bistable window is reported as the saddle-node of limit cycles.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import ModelKind, ModelSpec, State, coexistence_equilibrium, jacobian
from .sim import Extrema, IntegrationError, RunSummary, SimConfig, run_extrema

log = logging.getLogger(__name__)

__all__ = [
    "ICProtocol",
    "Cell",
    "BifurcationDiagram",
    "hopf_locate",
    "growth_rate",
    "classify",
    "scan_diagram",
    "detect_bistability",
    "refine_lc_saddle",
    "stochastic_diagram",
    "SensitivityReport",
    "sensitivity_report",
    "EPS_CYCLE",
]

EPS_CYCLE = 1e-3
MEAN_FLOOR = 1e-6
# extrapolated span relative to the last window span below which decay is taken as collapse
DECAY_REL = 0.1
# per-window relative span drop above which a non-collapsed run counts as unsettled
SETTLE_REL = 0.01


class EquilibriumLost(ValueError):
    pass


def growth_rate(spec: ModelSpec) -> float:
    """Largest real part of the Jacobian eigenvalues at coexistence."""
    eq = coexistence_equilibrium(spec)
    if eq is None:
        raise EquilibriumLost(f"no coexistence equilibrium at K={spec.K:g}")
    return float(np.max(np.linalg.eigvals(jacobian(spec, eq)).real))


def hopf_locate(
    spec: ModelSpec,
    K_range: tuple[float, float],
    tol: float = 1e-7,
    n_scan: int = 200,
) -> Optional[float]:
    """Carrying capacity where the coexistence equilibrium loses stability.

    The range is scanned on a geometric grid for the first change of the
    leading eigenvalue's real part from negative to non-negative; that cell
    is then bisected to ``tol`` (relative).
    """
    lo, hi = map(float, K_range)
    if not 0 < lo < hi:
        raise ValueError(f"invalid K range [{lo}, {hi}]")

    def g(K):
        try:
            return growth_rate(spec.with_K(K))
        except EquilibriumLost:
            raise EquilibriumLost(f"coexistence equilibrium disappears at K={K:g}") from None

    Ks = np.geomspace(lo, hi, n_scan)
    prev_K, prev_g = Ks[0], g(Ks[0])
    if prev_g >= 0:
        return None
    for K in Ks[1:]:
        gk = g(K)
        if gk >= 0:
            a, b = prev_K, K
            while b - a > tol * b:
                mid = 0.5 * (a + b)
                if g(mid) < 0:
                    a = mid
                else:
                    b = mid
            return 0.5 * (a + b)
        prev_K, prev_g = K, gk
    return None


# --------------------------------------------------------------------------
# initial conditions


def near_equilibrium(spec: ModelSpec, delta: float = 0.01) -> State:
    eq = coexistence_equilibrium(spec)
    if eq is None:
        return far_field(spec)
    return State(eq.x * (1.0 + delta), eq.y)


def far_field(spec: ModelSpec, frac: float = 0.9) -> State:
    """Prey near carrying capacity with a sparse predator population."""
    if spec.kind is ModelKind.LGM:
        return State(frac * spec.K, 0.1 * spec.K / spec.q)
    return State(frac * spec.K, 0.01 * spec.K)


@dataclass(frozen=True)
class ICProtocol:
    """Labelled initial-condition rules evaluated per K."""

    entries: tuple[tuple[str, Callable[[ModelSpec], State]], ...] = (
        ("near", near_equilibrium),
        ("far", far_field),
    )

    def __post_init__(self):
        if len(self.entries) < 2:
            raise ValueError("an IC protocol needs at least two initial conditions")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.entries)

    def __len__(self):
        return len(self.entries)

    def states(self, spec: ModelSpec) -> list[tuple[str, State]]:
        return [(lbl, rule(spec)) for lbl, rule in self.entries]


# --------------------------------------------------------------------------
# classification


def _aitken_limit(s: np.ndarray) -> float:
    s1, s2, s3 = s[-3:]
    d = (s3 - s2) - (s2 - s1)
    if d <= 0:
        return s3
    return max(0.0, s3 - (s3 - s2) ** 2 / d)


def classify(summary: RunSummary, eps: float = EPS_CYCLE) -> str:
    """``"point"``, ``"cycle"`` or ``"transient"`` for one run.

    A variable counts as settled when its post-transient span is below
    ``eps`` times its mean (floored at 1e-6). A run whose spans keep
    shrinking across the sub-windows is also a point attractor when the
    extrapolated span is below the same threshold or below ``DECAY_REL``
    times the last window span; this covers the slow spiralling approach
    near a Hopf point. A run converging onto a cycle extrapolates to about
    its current span.

    Runs that are neither collapsed nor steady, i.e. whose last window span
    is still more than ``SETTLE_REL`` below the previous one, are
    ``"transient"``: the horizon was too short to tell.
    """
    e = summary.extrema
    thresholds = (
        eps * max(summary.mean_x, MEAN_FLOOR),
        eps * max(summary.mean_y, MEAN_FLOOR),
    )
    if e.span("x") < thresholds[0] and e.span("y") < thresholds[1]:
        return "point"
    w = summary.window_spans
    if w is None or len(w) < 3:
        return "cycle"
    collapsed = True
    shrinking = False
    for col, thr in enumerate(thresholds):
        s = w[:, col]
        if s[-1] < (1.0 - SETTLE_REL) * s[-2]:
            shrinking = True
        if not np.all(np.diff(s[-3:]) < 0):
            collapsed = False
            continue
        lim = _aitken_limit(s)
        if lim >= thr and lim >= DECAY_REL * s[-1]:
            collapsed = False
    if collapsed:
        return "point"
    return "transient" if shrinking else "cycle"


# --------------------------------------------------------------------------
# diagrams


@dataclass
class Cell:
    K: float
    ic_label: str
    ic: State
    extrema: Optional[Extrema]
    cls: str
    mean: tuple[float, float] = (math.nan, math.nan)
    error: Optional[str] = None
    replicates: int = 1
    n_extinct: int = 0


@dataclass
class BifurcationDiagram:
    K_grid: np.ndarray
    cells: list[Cell]
    labels: tuple[str, ...]
    code: str = ""
    hopf_K: Optional[float] = None
    lc_saddle_K: Optional[float] = None
    bistable_window: Optional[tuple[float, float]] = None
    sigma: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.K_grid = np.asarray(self.K_grid, dtype=float)
        if len(self.K_grid) == 0:
            raise ValueError("empty K grid")
        if np.any(np.diff(self.K_grid) <= 0):
            raise ValueError("K grid must be strictly increasing")

    def cell(self, k: int, label: str) -> Cell:
        return self.cells[k * len(self.labels) + self.labels.index(label)]

    def branch(self, label: str) -> list[Cell]:
        return [self.cell(k, label) for k in range(len(self.K_grid))]

    def classes(self, label: str) -> list[str]:
        return [c.cls for c in self.branch(label)]


def _threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("STRUCTSENS_THREADS", "1") or 1)
    return max(1, int(threads))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _hopf_for_grid(spec: ModelSpec, K_grid) -> Optional[float]:
    ok = [K for K in K_grid if coexistence_equilibrium(spec.with_K(K)) is not None]
    if len(ok) < 2:
        return None
    try:
        return hopf_locate(spec, (ok[0], ok[-1]))
    except EquilibriumLost as exc:
        log.warning("Hopf search for %s aborted: %s", spec.response.code, exc)
        return None


def scan_diagram(
    spec: ModelSpec,
    K_grid: Sequence[float],
    protocol: ICProtocol = ICProtocol(),
    cfg: SimConfig = SimConfig(),
    eps: float = EPS_CYCLE,
    threads: Optional[int] = None,
    locate_hopf: bool = True,
) -> BifurcationDiagram:
    """Deterministic sweep: one integration per (K, initial condition)."""
    K_grid = np.asarray(K_grid, dtype=float)
    jobs = []
    for k, K in enumerate(K_grid):
        sk = spec.with_K(K)
        for lbl, ic in protocol.states(sk):
            jobs.append((K, sk, lbl, ic))

    def work(job):
        K, sk, lbl, ic = job
        try:
            summ = run_extrema(sk, SimConfig(cfg.dt, cfg.t_end, cfg.transient_fraction, ic))
        except IntegrationError as exc:
            return Cell(K, lbl, ic, None, "error", error=str(exc))
        return Cell(K, lbl, ic, summ.extrema, classify(summ, eps), (summ.mean_x, summ.mean_y))

    cells = _map(work, jobs, _threads(threads))
    diag = BifurcationDiagram(K_grid, cells, protocol.labels, code=spec.response.code)
    if locate_hopf:
        diag.hopf_K = _hopf_for_grid(spec, K_grid)
    diag.bistable_window, diag.lc_saddle_K = detect_bistability(diag)
    return diag


def _bistable_flags(diag: BifurcationDiagram) -> list[bool]:
    flags = []
    for k in range(len(diag.K_grid)):
        cls = {diag.cell(k, lbl).cls for lbl in diag.labels}
        flags.append("point" in cls and "cycle" in cls)
    return flags


def detect_bistability(diag: BifurcationDiagram, eps: float = EPS_CYCLE):
    """Longest contiguous run of bistable cells and its lower edge.

    Returns ``(window, lc_saddle_K)``; both are ``None`` without a bistable
    cell. ``eps`` is accepted for symmetry with :func:`classify`; cells carry
    their classification already.
    """
    if len(diag.labels) < 2:
        raise ValueError("bistability needs at least two initial conditions per K")
    flags = _bistable_flags(diag)
    best = None
    k = 0
    n = len(flags)
    while k < n:
        if flags[k]:
            j = k
            while j + 1 < n and flags[j + 1]:
                j += 1
            if best is None or (j - k) > (best[1] - best[0]):
                best = (k, j)
            k = j + 1
        else:
            k += 1
    if best is None:
        return None, None
    lo, hi = float(diag.K_grid[best[0]]), float(diag.K_grid[best[1]])
    return (lo, hi), lo


def refine_lc_saddle(
    spec: ModelSpec,
    diag: BifurcationDiagram,
    protocol: ICProtocol = ICProtocol(),
    cfg: SimConfig = SimConfig(),
    eps: float = EPS_CYCLE,
    levels: int = 1,
) -> Optional[float]:
    """Halve the grid cell below the bistable window's lower edge ``levels`` times."""
    if diag.bistable_window is None:
        return None
    lo_edge = diag.bistable_window[0]
    k = int(np.searchsorted(diag.K_grid, lo_edge))
    if k == 0:
        return lo_edge
    a, b = float(diag.K_grid[k - 1]), lo_edge
    for _ in range(levels):
        mid = 0.5 * (a + b)
        sub = scan_diagram(spec, [mid], protocol, cfg, eps, threads=1, locate_hopf=False)
        if _bistable_flags(sub)[0]:
            b = mid
        else:
            a = mid
    diag.lc_saddle_K = b
    return b


def stochastic_diagram(
    spec: ModelSpec,
    K_grid: Sequence[float],
    cfg: SimConfig,
    replicates: int = 10,
    protocol: ICProtocol = ICProtocol(),
    eps: float = EPS_CYCLE,
    threads: Optional[int] = None,
) -> BifurcationDiagram:
    """Noise-driven sweep with extrema pooled over replicates per (K, IC).

    Replicates ending on a boundary (a density reset to zero) are counted in
    ``Cell.n_extinct`` and left out of the pooled envelope unless every
    replicate went extinct. A cell is ``"extinct"`` when most replicates
    did, otherwise ``"point"``/``"cycle"`` by the noisy envelope.
    """
    if not cfg.sigma > 0:
        raise ValueError("stochastic diagram needs sigma > 0")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    K_grid = np.asarray(K_grid, dtype=float)
    n_ic = len(protocol)
    jobs = []
    for k, K in enumerate(K_grid):
        sk = spec.with_K(K)
        for i, (lbl, ic) in enumerate(protocol.states(sk)):
            for rep in range(replicates):
                # stream key: replicate index within the (K, IC) cell
                jobs.append((k, K, sk, i, lbl, ic, rep))

    def work(job):
        k, K, sk, i, lbl, ic, rep = job
        run_cfg = SimConfig(cfg.dt, cfg.t_end, cfg.transient_fraction, ic, cfg.seed, cfg.sigma)
        try:
            return run_extrema(sk, run_cfg, stochastic=True, replicate=rep * n_ic + i, k_index=k)
        except IntegrationError as exc:
            return exc

    results = _map(work, jobs, _threads(threads))
    cells = []
    for c0 in range(0, len(jobs), replicates):
        k, K, sk, i, lbl, ic, _ = jobs[c0]
        runs = results[c0:c0 + replicates]
        errors = [r for r in runs if isinstance(r, IntegrationError)]
        ok = [r for r in runs if not isinstance(r, IntegrationError)]
        if not ok:
            cells.append(Cell(K, lbl, ic, None, "error", error=str(errors[0]),
                              replicates=replicates))
            continue
        alive = [r for r in ok if not r.extinct]
        n_ext = len(ok) - len(alive)
        pool = alive or ok
        env = pool[0].extrema
        for r in pool[1:]:
            env = env.union(r.extrema)
        mean = (float(np.mean([r.mean_x for r in pool])), float(np.mean([r.mean_y for r in pool])))
        if n_ext * 2 > len(ok):
            cls = "extinct"
        else:
            # noisy envelopes never collapse; classify by the span
            summ = RunSummary(env, mean[0], mean[1], pool[0].final, 0, None)
            cls = classify(summ, eps)
        cells.append(Cell(K, lbl, ic, env, cls, mean, replicates=replicates, n_extinct=n_ext))
    diag = BifurcationDiagram(K_grid, cells, protocol.labels, code=spec.response.code,
                              sigma=cfg.sigma)
    diag.hopf_K = _hopf_for_grid(spec, K_grid)
    return diag


# --------------------------------------------------------------------------
# comparison across responses


@dataclass(frozen=True)
class SensitivityReport:
    codes: tuple[str, ...]
    hopf: tuple[Optional[float], ...]
    lc_saddle: tuple[Optional[float], ...]
    bistable: tuple[Optional[tuple[float, float]], ...]

    @property
    def hopf_spread(self) -> Optional[float]:
        """``max / min`` of the Hopf K values across responses."""
        vals = [h for h in self.hopf if h is not None]
        if len(vals) < 2:
            return None
        return max(vals) / min(vals)

    def rows(self) -> list[list]:
        return [
            ["Hopf", *self.hopf],
            ["Limit Cycle Saddle", *self.lc_saddle],
        ]


def sensitivity_report(diagrams: Sequence[BifurcationDiagram]) -> SensitivityReport:
    diagrams = list(diagrams)
    if len(diagrams) < 2:
        raise ValueError("a sensitivity comparison needs at least two diagrams")
    grid = diagrams[0].K_grid
    for d in diagrams[1:]:
        if d.K_grid.shape != grid.shape or not np.array_equal(d.K_grid, grid):
            raise ValueError("diagrams must share an identical K grid")
    return SensitivityReport(
        codes=tuple(d.code for d in diagrams),
        hopf=tuple(d.hopf_K for d in diagrams),
        lc_saddle=tuple(d.lc_saddle_K for d in diagrams),
        bistable=tuple(d.bistable_window for d in diagrams),
    )
