"""Experiment pipelines behind the CLI subcommands.

:func:`run` dispatches a :class:`~structsens.config.RunConfig` to one of
``fit``, ``intersect``, ``simulate``, ``bifurcate``, ``hopf`` or ``report``
and returns a :class:`ReportBundle` listing what was written.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bifurcation import (
    ICProtocol,
    SensitivityReport,
    _hopf_for_grid,
    refine_lc_saddle,
    scan_diagram,
    sensitivity_report,
    stochastic_diagram,
)
from .config import ConfigError, RunConfig
from .fitting import FitRegion, fit_response
from .models import LGMCalibration
from .output import (
    Provenance,
    emit_plot,
    write_csv,
    write_diagram_csv,
    write_extrema_csv,
    write_fit_results,
    write_intersections_csv,
    write_summary_csv,
    write_trajectory_csv,
)
from .presets import FIT_WINDOW
from .responses import Family, find_intersections
from .sim import counter, integrate_deterministic, integrate_stochastic, post_transient_extrema

log = logging.getLogger(__name__)

__all__ = ["ReportBundle", "ExperimentError", "run"]

HOPF_SCAN = (1e-3, 1e3, 400)


class ExperimentError(RuntimeError):
    """A module failure annotated with the experiment that hit it."""

    def __init__(self, experiment: str, cause: Exception):
        super().__init__(f"{experiment}: {cause}")
        self.experiment = experiment
        self.cause = cause


@dataclass
class ReportBundle:
    experiment: str
    provenance: Provenance
    out_dir: Path
    csv_files: list[Path] = field(default_factory=list)
    svg_files: list[Path] = field(default_factory=list)
    deterministic_runs: int = 0
    stochastic_runs: int = 0
    results: dict = field(default_factory=dict)

    @property
    def files(self) -> list[Path]:
        return self.csv_files + self.svg_files


class _Ctx:
    def __init__(self, cfg: RunConfig, threads: Optional[int]):
        self.cfg = cfg
        self.threads = threads
        self.out = Path(cfg.section("output")["dir"])
        self.plots = cfg.section("output")["plots"]
        self.prov = Provenance(cfg.hash, cfg.seed, __version__)
        self.bundle = ReportBundle(cfg.experiment, self.prov, self.out)
        self._cal: Optional[LGMCalibration] = None

    def csv(self, name: str, writer, *args) -> Path:
        p = writer(self.out / name, *args, self.prov)
        self.bundle.csv_files.append(p)
        return p

    def svg(self, name: str, obj, title: Optional[str] = None) -> None:
        if self.plots:
            self.bundle.svg_files.append(emit_plot(obj, self.out / name, self.prov, title))

    def calibration(self) -> Optional[LGMCalibration]:
        if self._cal is None:
            self._cal = self.cfg.calibration()
            if self._cal is not None:
                cal = self._cal
                rows = [["r", cal.r], ["s", cal.s], ["q", cal.q],
                        ["max_rel_residual", cal.max_rel_residual],
                        ["converged", str(cal.converged).lower()]]
                self.csv("calibration.csv", write_csv, ["param", "value"], rows)
                if not cal.converged:
                    log.warning("LGM calibration did not converge (max residual %.3g)",
                                cal.max_rel_residual)
        return self._cal

    def spec(self, response, K=None):
        return self.cfg.model_spec(response, K, self.calibration())


def _safe(label: str) -> str:
    return label.replace("|", "_").replace("/", "_")


# --------------------------------------------------------------------------


def _fit(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    f = cfg.section("fit")
    target = cfg.fit_target(Path(cfg.source).parent if cfg.source != "<config>" else None)
    res = fit_response(Family.parse(f["candidate"]), target, cfg.fit_region(),
                       restarts=f["restarts"], seed=cfg.seed, tol=f["tol"],
                       max_iter=f["max_iter"])
    ctx.bundle.results["fit"] = [res]
    ctx.csv("fit.csv", write_fit_results, [res])


def _intersect(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    resp = cfg.responses()
    dom = (cfg.section("intersect")["x_lo"], cfg.section("intersect")["x_hi"])
    fams = sorted(resp)
    pairs = list(itertools.combinations(fams, 2))
    if len(fams) == 3:
        # cyclic order H/I, I/T, T/H
        pairs = [(fams[0], fams[1]), (fams[1], fams[2]), (fams[2], fams[0])]
    sets = [find_intersections(resp[a], resp[b], dom) for a, b in pairs]
    ctx.bundle.results["intersections"] = sets
    ctx.csv("intersections.csv", write_intersections_csv, sets)


def _simulate(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    spec = ctx.spec(cfg.response())
    sim = cfg.sim_config()
    stride = cfg.section("sim")["stride"]
    if sim.sigma > 0:
        tr = integrate_stochastic(spec, sim, stride=stride)
    else:
        tr = integrate_deterministic(spec, sim, stride=stride)
    ex = post_transient_extrema(tr, sim.transient_fraction)
    ctx.bundle.results["trajectory"] = tr
    ctx.bundle.results["extrema"] = ex
    ctx.csv("trajectory.csv", write_trajectory_csv, tr)
    ctx.csv("extrema.csv", write_extrema_csv, [(spec.K, ex)])
    ctx.svg("trajectory.svg", tr, f"{spec.kind.value.upper()} {spec.response.code} K={spec.K:g}")


def _diagrams(ctx: _Ctx, labelled: list[tuple[str, object]]) -> None:
    """Deterministic (and optionally stochastic) sweeps for labelled responses."""
    cfg = ctx.cfg
    grid = cfg.K_grid()
    sim = cfg.sim_config()
    bif = cfg.section("bifurcation")
    protocol = ICProtocol()
    diags = []
    for label, resp in labelled:
        spec = ctx.spec(resp, float(grid[0]))
        diag = scan_diagram(spec, grid, protocol, sim, bif["eps_cycle"], ctx.threads)
        if bif["refine"]:
            refine_lc_saddle(spec, diag, protocol, sim, bif["eps_cycle"])
        diags.append(diag)
        ctx.csv(f"diagram_{_safe(label)}.csv", write_diagram_csv, diag)
        ctx.svg(f"diagram_{_safe(label)}.svg", diag, f"{spec.kind.value.upper()} {label}")
        if sim.sigma > 0:
            sd = stochastic_diagram(spec, grid, sim, cfg.section("sim")["replicates"],
                                    protocol, bif["eps_cycle"], ctx.threads)
            ctx.bundle.results.setdefault("stochastic", []).append(sd)
            ctx.csv(f"diagram_{_safe(label)}_stochastic.csv", write_diagram_csv, sd)
            ctx.svg(f"diagram_{_safe(label)}_stochastic.svg", sd,
                    f"{spec.kind.value.upper()} {label} sigma={sim.sigma:g}")
    labels = [lbl for lbl, _ in labelled]
    if len(diags) >= 2:
        rep = sensitivity_report(diags)
    else:
        d = diags[0]
        rep = SensitivityReport((d.code,), (d.hopf_K,), (d.lc_saddle_K,), (d.bistable_window,))
    ctx.bundle.results["diagrams"] = dict(zip(labels, diags))
    ctx.bundle.results["sensitivity"] = rep
    ctx.csv("summary.csv", write_summary_csv, labels, rep)


def _labelled_codes(ctx: _Ctx) -> list[tuple[str, object]]:
    cfg = ctx.cfg
    if cfg.has("response"):
        r = cfg.response()
        return [(r.code, r)]
    return [(c, cfg.build_response(c)) for c in cfg.response_codes()]


def _bifurcate(ctx: _Ctx) -> None:
    _diagrams(ctx, _labelled_codes(ctx))


def _hopf(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    bif = cfg.section("bifurcation")
    if bif["hopf_K_lo"] is not None and bif["hopf_K_hi"] is not None:
        scan = np.geomspace(bif["hopf_K_lo"], bif["hopf_K_hi"], HOPF_SCAN[2])
    elif cfg.has("grid"):
        g = cfg.K_grid()
        scan = np.geomspace(g[0], g[-1], HOPF_SCAN[2]) if len(g) > 1 else g
    else:
        scan = np.geomspace(*HOPF_SCAN)
    rows = []
    for label, resp in _labelled_codes(ctx):
        h = _hopf_for_grid(ctx.spec(resp, float(scan[0])), scan)
        rows.append([label, h])
    ctx.bundle.results["hopf"] = dict(rows)
    ctx.csv("hopf.csv", write_csv, ["response", "hopf_K"], rows)


def _report(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    rep = cfg.section("report")
    model = cfg.section("model")["model"]
    sets = rep["sets"] or ("original", "fitted", "piecewise")
    originals = cfg.responses()
    codes = cfg.response_codes()
    labelled: list[tuple[str, object]] = []
    for name in sets:
        if name == "original":
            labelled += [(f.initial, originals[f]) for f in sorted(originals)]
        elif name == "fitted":
            fixed = Family.parse(rep["fixed"])
            lo, hi = FIT_WINDOW[model]
            lo = rep["x_lo"] if rep["x_lo"] is not None else lo
            hi = rep["x_hi"] if rep["x_hi"] is not None else hi
            region = FitRegion(lo, hi)
            fits = []
            for fam in sorted(originals):
                if fam is fixed:
                    continue
                res = fit_response(fam, originals[fixed], region, seed=cfg.seed)
                fits.append(res)
                labelled.append((f"{fam.initial}|{fixed.initial}", res.response))
            ctx.bundle.results["fits"] = fits
            ctx.csv("fitted_responses.csv", write_fit_results, fits)
        elif name == "piecewise":
            labelled += [(c, cfg.build_response(c)) for c in codes if len(c) == 3]
    if not labelled:
        raise ValueError("report has no responses to compare")
    _diagrams(ctx, labelled)


_DISPATCH = {
    "fit": _fit,
    "intersect": _intersect,
    "simulate": _simulate,
    "bifurcate": _bifurcate,
    "hopf": _hopf,
    "report": _report,
}


def run(cfg: RunConfig, threads: Optional[int] = None) -> ReportBundle:
    """Execute the configured experiment and write its outputs."""
    ctx = _Ctx(cfg, threads)
    ctx.out.mkdir(parents=True, exist_ok=True)
    det0, sto0 = counter.deterministic, counter.stochastic
    try:
        _DISPATCH[cfg.experiment](ctx)
    except (OSError, ConfigError, ExperimentError):
        raise
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        raise ExperimentError(cfg.experiment, exc) from exc
    ctx.bundle.deterministic_runs = counter.deterministic - det0
    ctx.bundle.stochastic_runs = counter.stochastic - sto0
    return ctx.bundle
