"""Fixed-step Euler and Euler-Maruyama integration of the predator-prey models.

The stochastic variant perturbs the predation rate with an Ornstein-Uhlenbeck
process ``d xi = -xi dt + sigma dW``. Each step first advances ``xi`` by one
Euler-Maruyama step and then takes one Euler step of the ODEs with
``f(x) + xi`` in place of ``f(x)`` wherever the predation term appears (the
LGM predator equation has none). Negative densities are reset to zero.

Deterministic and stochastic paths share one compiled kernel, so a
stochastic run with ``sigma = 0`` is bitwise identical to the deterministic
run.

Random streams
--------------
Replicate ``j`` of carrying-capacity index ``k`` draws its normals from
``numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(j, k))))``.
Streams are therefore independent of execution order and thread count.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .models import ModelKind, ModelSpec, State

__all__ = [
    "SimConfig",
    "Trajectory",
    "Extrema",
    "RunSummary",
    "IntegrationError",
    "integrate_deterministic",
    "integrate_stochastic",
    "post_transient_extrema",
    "run_extrema",
    "noise_stream",
    "default_sim_config",
    "counter",
]


class IntegrationError(RuntimeError):
    """Non-finite state produced during integration."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step} (t={t:g})")
        self.step = step
        self.t = t


class _Counter:
    """Counts kernel invocations; used to audit sweep costs."""

    def __init__(self):
        self._lock = threading.Lock()
        self.deterministic = 0
        self.stochastic = 0

    def add(self, noisy: bool) -> None:
        with self._lock:
            if noisy:
                self.stochastic += 1
            else:
                self.deterministic += 1

    def reset(self):
        with self._lock:
            self.deterministic = 0
            self.stochastic = 0


counter = _Counter()


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 2000.0
    transient_fraction: float = 0.5
    ic: Optional[State] = None
    seed: int = 0
    sigma: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > self.dt:
            raise ValueError("t_end must exceed dt")
        if not 0 <= self.transient_fraction < 1:
            raise ValueError("transient_fraction must lie in [0, 1)")
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def cut_index(self) -> int:
        return int(self.transient_fraction * self.n_steps)


def default_sim_config(model, **overrides) -> SimConfig:
    """Default step and horizon for ``model`` (``"rm"`` or ``"lgm"``)."""
    ModelKind.parse(model)
    base = dict(dt=1e-3, t_end=2000.0, transient_fraction=0.5)
    base.update(overrides)
    return SimConfig(**base)


@dataclass(frozen=True)
class Extrema:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("extrema out of order")

    def span(self, var: str) -> float:
        return getattr(self, f"{var}_max") - getattr(self, f"{var}_min")

    def contains(self, other: "Extrema", rtol: float = 0.0) -> bool:
        """Whether ``other`` lies inside this envelope, per variable."""
        for v in ("x", "y"):
            lo, hi = getattr(self, f"{v}_min"), getattr(self, f"{v}_max")
            pad = rtol * max(abs(lo), abs(hi))
            if getattr(other, f"{v}_min") < lo - pad or getattr(other, f"{v}_max") > hi + pad:
                return False
        return True

    def union(self, other: "Extrema") -> "Extrema":
        return Extrema(
            min(self.x_min, other.x_min), max(self.x_max, other.x_max),
            min(self.y_min, other.y_min), max(self.y_max, other.y_max),
        )


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    xi: Optional[np.ndarray] = None
    clamp_events: int = 0
    extinction_time: Optional[float] = None
    dt: float = 0.0
    stride: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        if len(self.x) != n or len(self.y) != n or (self.xi is not None and len(self.xi) != n):
            raise ValueError("trajectory arrays must have equal length")

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> State:
        return State(float(self.x[-1]), float(self.y[-1]))

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None


@dataclass(frozen=True)
class RunSummary:
    """Post-transient extrema and bookkeeping of one run without storage."""

    extrema: Extrema
    mean_x: float
    mean_y: float
    final: State
    clamp_events: int
    extinction_time: Optional[float]
    # spans of (x, y) over consecutive equal sub-windows of the post-transient part
    window_spans: Optional[np.ndarray] = None

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None


# --------------------------------------------------------------------------
# compiled kernel

N_WINDOWS = 4


@numba.njit(cache=True, nogil=True)
def _predation(fam, a, b, brk, x):
    if x < brk[0]:
        k = 0
    elif x < brk[1]:
        k = 1
    else:
        k = 2
    bx = b[k] * x
    f = fam[k]
    if f == 0:
        return a[k] * x / (1.0 + bx)
    elif f == 1:
        return -a[k] * math.expm1(-bx)
    return a[k] * math.tanh(bx)


@numba.njit(cache=True, nogil=True)
def _kernel(kind, p, fam, a, b, brk, x0, y0, dt, n_steps, noisy, sigma, z,
            i_cut, stride, store):
    r = p[0]
    K = p[1]
    m = p[2]
    s = p[3]
    q = p[4]
    floor = p[5]
    sq = math.sqrt(dt)

    n_store = n_steps // stride + 1 if store else 0
    xs = np.empty(n_store)
    ys = np.empty(n_store)
    xis = np.empty(n_store)

    x = x0
    y = y0
    xi = 0.0
    clamps = 0
    extinct_step = -1
    err_step = -1
    xmin = np.inf
    xmax = -np.inf
    ymin = np.inf
    ymax = -np.inf
    sx = 0.0
    sy = 0.0
    cnt = 0
    # per-window extrema of the post-transient part: (x_min, x_max, y_min, y_max)
    win = np.empty((N_WINDOWS, 4))
    for w in range(N_WINDOWS):
        win[w, 0] = np.inf
        win[w, 1] = -np.inf
        win[w, 2] = np.inf
        win[w, 3] = -np.inf
    n_post = n_steps - i_cut + 1

    if store:
        xs[0] = x
        ys[0] = y
        xis[0] = xi
    if i_cut == 0:
        xmin = x
        xmax = x
        ymin = y
        ymax = y
        sx += x
        sy += y
        cnt += 1
        win[0, 0] = x
        win[0, 1] = x
        win[0, 2] = y
        win[0, 3] = y

    for i in range(n_steps):
        if noisy:
            xi = xi - xi * dt + sigma * sq * z[i]
        # no prey, no predation: keeps x = 0 absorbing under noise
        if x > 0.0:
            fx = _predation(fam, a, b, brk, x) + xi
        else:
            fx = 0.0
        dx = r * x * (1.0 - x / K) - fx * y
        if kind == 0:
            dy = fx * y - m * y
        elif x <= floor:
            dy = -s * y
        else:
            dy = s * y * (1.0 - q * y / x)
        x = x + dt * dx
        y = y + dt * dy
        if not (math.isfinite(x) and math.isfinite(y)):
            err_step = i + 1
            break
        if x < 0.0:
            x = 0.0
            clamps += 1
        if y < 0.0:
            y = 0.0
            clamps += 1
        if extinct_step < 0 and (x == 0.0 or y == 0.0):
            extinct_step = i + 1
        j = i + 1
        if store and j % stride == 0:
            k = j // stride
            xs[k] = x
            ys[k] = y
            xis[k] = xi
        if j >= i_cut:
            if x < xmin:
                xmin = x
            if x > xmax:
                xmax = x
            if y < ymin:
                ymin = y
            if y > ymax:
                ymax = y
            sx += x
            sy += y
            cnt += 1
            w = (j - i_cut) * N_WINDOWS // n_post
            if x < win[w, 0]:
                win[w, 0] = x
            if x > win[w, 1]:
                win[w, 1] = x
            if y < win[w, 2]:
                win[w, 2] = y
            if y > win[w, 3]:
                win[w, 3] = y

    ext = np.array([xmin, xmax, ymin, ymax, sx / max(cnt, 1), sy / max(cnt, 1), x, y])
    return xs, ys, xis, ext, win, clamps, extinct_step, err_step


# --------------------------------------------------------------------------


def noise_stream(seed: int, n: int, replicate: int = 0, k_index: int = 0) -> np.ndarray:
    """Standard normals for replicate ``replicate`` at grid index ``k_index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(k_index)))
    return np.random.Generator(np.random.PCG64(ss)).standard_normal(n)


def _resolve_ic(spec: ModelSpec, cfg: SimConfig) -> State:
    if cfg.ic is not None:
        return cfg.ic
    from .models import coexistence_equilibrium

    eq = coexistence_equilibrium(spec)
    if eq is None:
        raise ValueError("no initial condition given and no coexistence equilibrium")
    return State(eq.x * 1.01, eq.y)


def _run(spec: ModelSpec, cfg: SimConfig, noisy: bool, z, stride: int, store: bool):
    ic = _resolve_ic(spec, cfg)
    fam, a, b, brk = spec.response.pack()
    kind = 0 if spec.kind is ModelKind.RM else 1
    if z is None:
        z = np.empty(0)
    out = _kernel(kind, spec.params, fam, a, b, brk, float(ic.x), float(ic.y),
                  float(cfg.dt), cfg.n_steps, noisy, float(cfg.sigma), z,
                  cfg.cut_index, int(stride), store)
    counter.add(noisy)
    xs, ys, xis, ext, win, clamps, extinct_step, err_step = out
    if err_step >= 0:
        raise IntegrationError(int(err_step), err_step * cfg.dt)
    ext_t = None if extinct_step < 0 else extinct_step * cfg.dt
    return xs, ys, xis, ext, win, int(clamps), ext_t


def _trajectory(spec, cfg, noisy, z, stride):
    xs, ys, xis, _, _, clamps, ext_t = _run(spec, cfg, noisy, z, stride, True)
    times = np.arange(len(xs)) * (cfg.dt * stride)
    return Trajectory(times, xs, ys, xis if noisy else None, clamps, ext_t, cfg.dt, stride,
                      meta={"K": spec.K, "response": spec.response.code, "sigma": cfg.sigma})


def integrate_deterministic(spec: ModelSpec, cfg: SimConfig, stride: int = 1) -> Trajectory:
    """Forward Euler with step ``cfg.dt``; ``cfg.sigma`` is ignored.

    ``stride`` keeps every ``stride``-th state (the initial state is always
    kept).
    """
    return _trajectory(spec, cfg, False, None, stride)


def integrate_stochastic(
    spec: ModelSpec,
    cfg: SimConfig,
    stride: int = 1,
    replicate: int = 0,
    k_index: int = 0,
    z: Optional[np.ndarray] = None,
) -> Trajectory:
    """Euler-Maruyama for the OU noise plus Euler for the densities.

    The noise path is returned in ``Trajectory.xi``.
    """
    if z is None:
        z = noise_stream(cfg.seed, cfg.n_steps, replicate, k_index)
    elif len(z) < cfg.n_steps:
        raise ValueError("noise array shorter than the number of steps")
    return _trajectory(spec, cfg, True, np.ascontiguousarray(z, dtype=float), stride)


def run_extrema(
    spec: ModelSpec,
    cfg: SimConfig,
    stochastic: bool = False,
    replicate: int = 0,
    k_index: int = 0,
) -> RunSummary:
    """Integrate without storing the path and return post-transient extrema."""
    z = noise_stream(cfg.seed, cfg.n_steps, replicate, k_index) if stochastic else None
    _, _, _, ext, win, clamps, ext_t = _run(spec, cfg, stochastic, z, 1, False)
    return RunSummary(
        Extrema(*ext[:4]), float(ext[4]), float(ext[5]), State(float(ext[6]), float(ext[7])),
        clamps, ext_t, np.column_stack([win[:, 1] - win[:, 0], win[:, 3] - win[:, 2]]),
    )


def post_transient_extrema(tr: Trajectory, transient_fraction: float) -> Extrema:
    if len(tr) == 0:
        raise ValueError("empty trajectory")
    if not 0 <= transient_fraction < 1:
        raise ValueError("transient_fraction must lie in [0, 1)")
    n_steps = (len(tr) - 1) * tr.stride
    cut = int(transient_fraction * n_steps)
    start = -(-cut // tr.stride)
    if start >= len(tr):
        raise ValueError("post-transient window is empty")
    x, y = tr.x[start:], tr.y[start:]
    return Extrema(float(x.min()), float(x.max()), float(y.min()), float(y.max()))
