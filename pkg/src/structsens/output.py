"""CSV and SVG writers.

Every file starts with a provenance comment naming the producing config
hash and seed: ``# structsens <version> config=<hash> seed=<seed>`` for CSV
and the same text inside ``<!-- -->`` for SVG.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bifurcation import BifurcationDiagram, SensitivityReport  # noqa: E402
from .fitting import FitResult  # noqa: E402
from .responses import IntersectionSet  # noqa: E402
from .sim import Extrema, Trajectory  # noqa: E402

__all__ = [
    "Provenance",
    "write_csv",
    "write_trajectory_csv",
    "write_extrema_csv",
    "write_diagram_csv",
    "write_summary_csv",
    "write_fit_results",
    "write_intersections_csv",
    "emit_plot",
    "read_csv",
]


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    seed: int
    version: str

    @property
    def text(self) -> str:
        return f"structsens {self.version} config={self.config_hash} seed={self.seed}"


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], prov: Provenance) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"# {prov.text}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[str, list[dict]]:
    """Return ``(provenance_line, rows)`` of a file written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        rows = list(csv.DictReader(fh))
    return first, rows


def write_trajectory_csv(path, tr: Trajectory, prov: Provenance) -> Path:
    noisy = tr.xi is not None
    header = ["t", "x", "y"] + (["xi"] if noisy else [])
    if noisy:
        rows = zip(tr.times, tr.x, tr.y, tr.xi)
    else:
        rows = zip(tr.times, tr.x, tr.y)
    return write_csv(path, header, ([float(v) for v in r] for r in rows), prov)


def _extrema_rows(K: float, ex: Extrema):
    yield [K, "x", ex.x_min, ex.x_max]
    yield [K, "y", ex.y_min, ex.y_max]


def write_extrema_csv(path, items: Sequence[tuple[float, Extrema]], prov: Provenance) -> Path:
    rows = [r for K, ex in items for r in _extrema_rows(float(K), ex)]
    return write_csv(path, ["K", "var", "min", "max"], rows, prov)


def write_diagram_csv(path, diag: BifurcationDiagram, prov: Provenance) -> Path:
    rows = []
    for c in diag.cells:
        if c.extrema is None:
            rows.append([float(c.K), c.ic_label, "x", None, None, c.cls])
            rows.append([float(c.K), c.ic_label, "y", None, None, c.cls])
            continue
        for K, var, lo, hi in _extrema_rows(float(c.K), c.extrema):
            rows.append([K, c.ic_label, var, float(lo), float(hi), c.cls])
    return write_csv(path, ["K", "ic_label", "var", "min", "max", "class"], rows, prov)


def write_summary_csv(path, labels: Sequence[str], report: SensitivityReport,
                      prov: Provenance) -> Path:
    rows = []
    for lbl, h, lc, win in zip(labels, report.hopf, report.lc_saddle, report.bistable):
        lo, hi = win if win is not None else (None, None)
        rows.append([lbl, h, lc, lo, hi])
    return write_csv(path, ["response", "hopf_K", "lc_saddle_K", "bistable_lo", "bistable_hi"],
                     rows, prov)


def write_fit_results(path, results: Sequence[FitResult], prov: Provenance) -> Path:
    return write_csv(path, ["family", "a", "b", "objective", "converged"],
                     (r.csv_row() for r in results), prov)


def write_intersections_csv(path, sets: Sequence[IntersectionSet], prov: Provenance) -> Path:
    rows = []
    for s in sets:
        pair = "/".join(f.initial for f in s.pair)
        for i, x in enumerate(s.points):
            rows.append([pair, i, float(x)])
    return write_csv(path, ["pair", "index", "x"], rows, prov)


# --------------------------------------------------------------------------
# SVG


def _save_svg(fig, path: Path, prov: Provenance) -> Path:
    buf = io.StringIO()
    with plt.rc_context({"svg.hashsalt": prov.config_hash, "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    text = buf.getvalue()
    # the provenance comment has to be the first line, so drop the XML declaration
    text = re.sub(r"^<\?xml[^>]*\?>\s*", "", text)
    path.write_text(f"<!-- {prov.text} -->\n{text}")
    return path


def _plot_diagram(diag: BifurcationDiagram, title: str):
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    styles = ["-", "--", ":", "-."]
    for ax, var in zip(axes, ("x", "y")):
        for j, lbl in enumerate(diag.labels):
            ks, lo, hi = [], [], []
            for c in diag.branch(lbl):
                if c.extrema is None:
                    continue
                ks.append(c.K)
                lo.append(getattr(c.extrema, f"{var}_min"))
                hi.append(getattr(c.extrema, f"{var}_max"))
            if not ks:
                continue
            color = f"C{j}"
            tag = f"{diag.code} ({lbl})"
            ax.plot(ks, hi, styles[j % 4], color=color, lw=1.2, label=f"{tag} max")
            ax.plot(ks, lo, styles[j % 4], color=color, lw=0.8, label=f"{tag} min")
        if diag.hopf_K is not None:
            ax.axvline(diag.hopf_K, color="k", lw=0.6, alpha=0.5)
        if diag.lc_saddle_K is not None:
            ax.axvline(diag.lc_saddle_K, color="r", lw=0.6, alpha=0.5)
        ax.set_ylabel("prey x" if var == "x" else "predator y")
    axes[0].legend(fontsize=7, loc="best")
    axes[-1].set_xlabel("carrying capacity K")
    fig.suptitle(title)
    return fig


def _plot_trajectory(tr: Trajectory, title: str):
    n = 3 if tr.xi is not None else 2
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), sharex=True)
    axes[0].plot(tr.times, tr.x, lw=0.8, label="prey x")
    axes[0].set_ylabel("x")
    axes[1].plot(tr.times, tr.y, lw=0.8, color="C1", label="predator y")
    axes[1].set_ylabel("y")
    if tr.xi is not None:
        axes[2].plot(tr.times, tr.xi, lw=0.6, color="C2", label="noise xi")
        axes[2].set_ylabel("xi")
    for ax in axes:
        ax.legend(fontsize=7, loc="upper right")
    axes[-1].set_xlabel("t")
    fig.suptitle(title)
    return fig


def emit_plot(obj, path, prov: Provenance, title: Optional[str] = None) -> Path:
    """Render a diagram (min/max branches vs K) or a trajectory (series vs t) to SVG."""
    path = Path(path)
    if isinstance(obj, BifurcationDiagram):
        if not any(c.extrema is not None for c in obj.cells):
            raise ValueError("cannot plot a diagram without any extrema")
        fig = _plot_diagram(obj, title or f"response {obj.code}")
    elif isinstance(obj, Trajectory):
        if len(obj) == 0:
            raise ValueError("cannot plot an empty trajectory")
        fig = _plot_trajectory(obj, title or "trajectory")
    else:
        raise TypeError(f"cannot plot {type(obj).__name__}")
    return _save_svg(fig, path, prov)
