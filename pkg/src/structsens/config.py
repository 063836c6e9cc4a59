"""Run configuration: a flat ``key = value`` format with ``[section]`` headers.

Values are numbers, ``true``/``false``, double-quoted strings or flat
``[v1, v2, ...]`` lists; ``#`` starts a comment. Example::

    experiment = "bifurcate"
    seed = 0

    [model]
    model = "rm"
    r = 1.0
    m = 0.1

    [responses]
    holling = [3.05, 2.68]
    ivlev = [1.0, 2.0]
    trig = [0.99, 1.48]
    codes = ["H", "I", "T", "HII"]

    [grid]
    K_min = 0.2
    K_max = 0.8
    K_step = 0.01

Every default is filled in on parsing; :meth:`RunConfig.serialize` writes
the fully resolved configuration, which parses back to an equal object.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .bifurcation import EPS_CYCLE
from .fitting import MAX_ITER, N_GRID, RESTARTS, TOL, FitRegion, SampledCurve
from .models import LGMCalibration, ModelSpec, State, calibrate_lgm
from .responses import Family, FunctionalResponse, piecewise_from_code
from .sim import SimConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "EXPERIMENTS"]

EXPERIMENTS = ("fit", "intersect", "simulate", "bifurcate", "hopf", "report")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str = "", line: Optional[int] = None):
        where = []
        if key:
            where.append(key)
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.key = key
        self.line = line


_REQ = object()

# section -> key -> (type, default); type "num", "int", "str", "bool", "list", "numlist"
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "": {
        "experiment": ("str", _REQ),
        "seed": ("int", 0),
    },
    "model": {
        "model": ("str", _REQ),
        "r": ("num", None),
        "K": ("num", None),
        "m": ("num", None),
        "s": ("num", None),
        "q": ("num", None),
        "x_floor": ("num", 1e-12),
        "calibrate": ("bool", False),
        "hopf_targets": ("numlist", None),
        "anchor": ("str", "q"),
        "anchor_value": ("num", 212.0),
    },
    "response": {
        "family": ("str", None),
        "a": ("num", None),
        "b": ("num", None),
        "code": ("str", None),
        "holling": ("numlist", None),
        "ivlev": ("numlist", None),
        "trig": ("numlist", None),
    },
    "responses": {
        "holling": ("numlist", None),
        "ivlev": ("numlist", None),
        "trig": ("numlist", None),
        "codes": ("list", None),
    },
    "sim": {
        "dt": ("num", 1e-3),
        "t_end": ("num", 2000.0),
        "transient_fraction": ("num", 0.5),
        "sigma": ("num", 0.0),
        "replicates": ("int", 10),
        "x0": ("num", None),
        "y0": ("num", None),
        "stride": ("int", 100),
    },
    "grid": {
        "K_min": ("num", None),
        "K_max": ("num", None),
        "K_step": ("num", None),
        "K": ("numlist", None),
    },
    "fit": {
        "candidate": ("str", None),
        "target": ("str", None),
        "data": ("str", None),
        "x_lo": ("num", 0.0),
        "x_hi": ("num", 4.0),
        "n_grid": ("int", N_GRID),
        "restarts": ("int", RESTARTS),
        "tol": ("num", TOL),
        "max_iter": ("int", MAX_ITER),
        "focus_lo": ("num", None),
        "focus_hi": ("num", None),
        "outside_weight": ("num", None),
    },
    "intersect": {
        "x_lo": ("num", 0.0),
        "x_hi": ("num", 4.0),
    },
    "bifurcation": {
        "eps_cycle": ("num", EPS_CYCLE),
        "refine": ("bool", False),
        "hopf_K_lo": ("num", None),
        "hopf_K_hi": ("num", None),
    },
    "report": {
        "sets": ("list", None),
        "fixed": ("str", "holling"),
        "x_lo": ("num", None),
        "x_hi": ("num", None),
    },
    "output": {
        "dir": ("str", "out"),
        "plots": ("bool", True),
    },
}

# sections each experiment requires
REQUIRED = {
    "fit": ("fit",),
    "intersect": ("responses",),
    "simulate": ("model",),
    "bifurcate": ("model", "grid"),
    "hopf": ("model",),
    "report": ("model", "responses", "grid"),
}


# --------------------------------------------------------------------------
# parsing


_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w.]*)\s*\]$")
_KEY = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")


def _strip_comment(line: str) -> str:
    out, in_str = [], False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out).strip()


def _atom(text: str, key: str, line: int):
    text = text.strip()
    if not text:
        raise ConfigError("missing value", key, line)
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"') or '"' in text[1:-1]:
            raise ConfigError(f"malformed string {text}", key, line)
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        if re.fullmatch(r"[+-]?\d+", text):
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse value {text!r}", key, line) from None


def _value(text: str, key: str, line: int):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError("unterminated list", key, line)
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_atom(part, key, line) for part in inner.split(",")]
    return _atom(text, key, line)


def _coerce(kind: str, value, key: str, line: int):
    def num(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", key, line)
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError("value must be finite", key, line)
        return v

    if kind == "num":
        return num(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key, line)
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a quoted string, got {value!r}", key, line)
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", key, line)
        return value
    if kind == "numlist":
        if not isinstance(value, list):
            raise ConfigError("expected a list of numbers", key, line)
        return tuple(num(v) for v in value)
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError("expected a list", key, line)
        return tuple(str(v) for v in value)
    raise AssertionError(kind)


def parse_config_text(text: str, source: str = "<config>",
                      experiment: Optional[str] = None) -> "RunConfig":
    """Parse and validate config text.

    ``experiment`` (e.g. a CLI subcommand) replaces the file's
    ``experiment`` key, which may then be omitted.
    """
    raw: dict[str, dict[str, Any]] = {}
    lines: dict[str, int] = {}
    present = {""}
    section = ""
    raw[""] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        m = _SECTION.match(body)
        if m:
            section = m.group(1)
            if section not in SCHEMA:
                raise ConfigError("unknown section", f"[{section}]", lineno)
            if section in present and section != "":
                raise ConfigError("duplicate section", f"[{section}]", lineno)
            present.add(section)
            raw.setdefault(section, {})
            continue
        m = _KEY.match(body)
        if not m:
            raise ConfigError(f"expected 'key = value', got {body!r}", section, lineno)
        key, val = m.group(1), m.group(2)
        path = f"{section}.{key}" if section else key
        if key not in SCHEMA[section]:
            raise ConfigError("unknown key", path, lineno)
        if key in raw[section]:
            raise ConfigError("duplicate key", path, lineno)
        kind = SCHEMA[section][key][0]
        raw[section][key] = _coerce(kind, _value(val, path, lineno), path, lineno)
        lines[path] = lineno

    if experiment is not None:
        raw[""]["experiment"] = experiment

    values: dict[str, dict[str, Any]] = {}
    for sec, keys in SCHEMA.items():
        if sec not in present:
            continue
        out = {}
        for key, (_, default) in keys.items():
            if key in raw[sec]:
                out[key] = raw[sec][key]
            elif default is _REQ:
                path = f"{sec}.{key}" if sec else key
                raise ConfigError("required key missing", path)
            else:
                out[key] = default
        values[sec] = out
    cfg = RunConfig(values, source)
    cfg.validate(lines)
    return cfg


def parse_config(path, experiment: Optional[str] = None) -> "RunConfig":
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, str(path), experiment)


# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(type(v))


def _as_state(x0, y0) -> Optional[State]:
    if x0 is None and y0 is None:
        return None
    return State(x0, y0)


@dataclass
class RunConfig:
    """Resolved configuration: ``values[section][key]`` with defaults applied."""

    values: dict
    source: str = "<config>"

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    @property
    def experiment(self) -> str:
        return self.values[""]["experiment"]

    @property
    def seed(self) -> int:
        return self.values[""]["seed"]

    def section(self, name: str) -> dict:
        return self.values.get(name) or {
            k: (None if d is _REQ else d) for k, (_, d) in SCHEMA[name].items()
        }

    def has(self, name: str) -> bool:
        return name in self.values

    def serialize(self) -> str:
        out = []
        for key, v in self.values[""].items():
            if v is not None:
                out.append(f"{key} = {_fmt(v)}")
        for sec in SCHEMA:
            if sec == "" or sec not in self.values:
                continue
            out.append("")
            out.append(f"[{sec}]")
            for key, v in self.values[sec].items():
                if v is not None:
                    out.append(f"{key} = {_fmt(v)}")
        return "\n".join(out) + "\n"

    @property
    def hash(self) -> str:
        """Digest of the resolved config, leaving out the output directory.

        ``output.dir`` only decides where files land, so reruns into another
        directory keep the same provenance and byte-identical files.
        """
        vals = {s: dict(v) for s, v in self.values.items()}
        if "output" in vals:
            vals["output"]["dir"] = None
        text = RunConfig(vals, self.source).serialize()
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, experiment=None, seed=None, out=None) -> "RunConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        if experiment is not None:
            vals[""]["experiment"] = experiment
        if seed is not None:
            vals[""]["seed"] = int(seed)
        if out is not None:
            vals.setdefault("output", self.section("output"))
            vals["output"]["dir"] = str(out)
        cfg = RunConfig(vals, self.source)
        cfg.validate({})
        return cfg

    # ---------------------------------------------------------------- checks

    def validate(self, lines: dict) -> None:
        def err(msg, path):
            raise ConfigError(msg, path, lines.get(path))

        exp = self.experiment
        if exp not in EXPERIMENTS:
            err(f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}",
                "experiment")
        for sec in REQUIRED[exp]:
            if sec not in self.values:
                raise ConfigError(f"experiment {exp!r} requires a [{sec}] block", f"[{sec}]")
        if self.seed < 0:
            err("seed must be non-negative", "seed")

        if self.has("model"):
            m = self.values["model"]
            if m["model"] not in ("rm", "lgm"):
                err('model must be "rm" or "lgm"', "model.model")
            if m["r"] is None and not (m["model"] == "lgm" and m["calibrate"]):
                err("required key missing", "model.r")
            if m["model"] == "rm":
                if m["m"] is None:
                    err("required key missing", "model.m")
            elif m["calibrate"]:
                if m["hopf_targets"] is None:
                    err("calibration needs hopf_targets", "model.hopf_targets")
                if m["anchor"] not in ("r", "s", "q"):
                    err("anchor must be r, s or q", "model.anchor")
            else:
                for k in ("s", "q"):
                    if m[k] is None:
                        err("required key missing", f"model.{k}")
            for k in ("r", "K", "m", "s", "q"):
                if m[k] is not None and not m[k] > 0:
                    err("must be positive", f"model.{k}")
            if exp in ("simulate",) and m["K"] is None:
                err("simulate needs a carrying capacity", "model.K")

        if self.has("response"):
            r = self.values["response"]
            if r["code"] is None:
                for k in ("family", "a", "b"):
                    if r[k] is None:
                        err("required key missing", f"response.{k}")
                try:
                    Family.parse(r["family"])
                except ValueError as exc:
                    err(str(exc), "response.family")
        if self.has("responses") and self.values["responses"]["codes"] is not None:
            for c in self.values["responses"]["codes"]:
                if not re.fullmatch(r"[HIThit]{1}|[HIThit]{3}", c):
                    err(f"bad response code {c!r}", "responses.codes")
        for sec in ("response", "responses"):
            if not self.has(sec):
                continue
            for fam in ("holling", "ivlev", "trig"):
                v = self.values[sec].get(fam)
                if v is not None and (len(v) != 2 or min(v) <= 0):
                    err("expected [a, b] with positive entries", f"{sec}.{fam}")

        if exp in ("simulate", "bifurcate", "hopf") and not (
            self.has("response") or self.has("responses")
        ):
            raise ConfigError(f"experiment {exp!r} requires a [response] block", "[response]")

        if self.has("sim"):
            s = self.values["sim"]
            try:
                SimConfig(s["dt"], s["t_end"], s["transient_fraction"], None, 0, s["sigma"])
            except ValueError as exc:
                raise ConfigError(str(exc), "sim", lines.get("sim.dt")) from None
            if s["replicates"] < 1:
                err("must be >= 1", "sim.replicates")
            if s["stride"] < 1:
                err("must be >= 1", "sim.stride")
            if (s["x0"] is None) != (s["y0"] is None):
                err("x0 and y0 must be given together", "sim.x0")

        if self.has("grid"):
            g = self.values["grid"]
            if g["K"] is None and None in (g["K_min"], g["K_max"], g["K_step"]):
                err("give K = [...] or K_min, K_max and K_step", "grid")
            try:
                grid = self.K_grid()
            except ValueError as exc:
                err(str(exc), "grid")
            if len(grid) < 1 or grid[0] <= 0:
                err("K values must be positive", "grid")

        if exp == "fit":
            f = self.values["fit"]
            if f["candidate"] is None:
                err("required key missing", "fit.candidate")
            if f["data"] is None and f["target"] is None:
                err("give a target family or a data CSV", "fit.target")
            try:
                self.fit_region()
            except ValueError as exc:
                err(str(exc), "fit")

        if self.has("report") and self.values["report"]["sets"] is not None:
            for sname in self.values["report"]["sets"]:
                if sname not in ("original", "fitted", "piecewise"):
                    err(f"unknown report set {sname!r}", "report.sets")

    # ---------------------------------------------------------- constructors

    def responses(self) -> dict:
        """``{Family: FunctionalResponse}`` from ``[responses]`` (or ``[response]``)."""
        out = {}
        for sec in ("responses", "response"):
            if not self.has(sec):
                continue
            vals = self.values[sec]
            for fam in Family:
                v = vals.get(fam.key)
                if v is not None and fam not in out:
                    out[fam] = FunctionalResponse(fam, *v)
            if sec == "response" and vals.get("family") is not None and vals.get("a"):
                fam = Family.parse(vals["family"])
                out.setdefault(fam, FunctionalResponse(fam, vals["a"], vals["b"]))
        return out

    def response(self):
        """The single response of ``[response]``, possibly piecewise."""
        if not self.has("response"):
            codes = self.response_codes()
            if len(codes) != 1:
                raise ConfigError("a single [response] is required", "[response]")
            return self.build_response(codes[0])
        r = self.values["response"]
        if r["code"] is not None:
            return self.build_response(r["code"])
        return FunctionalResponse(Family.parse(r["family"]), r["a"], r["b"])

    def build_response(self, code: str):
        code = code.upper()
        resp = self.responses()
        x_lo, x_hi = self.section("intersect")["x_lo"], self.section("intersect")["x_hi"]
        try:
            if len(code) == 1:
                return resp[Family.parse(code)]
            return piecewise_from_code(code, resp, (x_lo, x_hi))
        except KeyError:
            raise ConfigError(f"no parameters for response {code!r}", "responses") from None
        except ValueError as exc:
            raise ConfigError(str(exc), "responses") from None

    def response_codes(self) -> tuple[str, ...]:
        if self.has("responses") and self.values["responses"]["codes"] is not None:
            return tuple(c.upper() for c in self.values["responses"]["codes"])
        return tuple(f.initial for f in self.responses())

    def calibration(self) -> Optional[LGMCalibration]:
        m = self.values["model"]
        if m["model"] != "lgm" or not m["calibrate"]:
            return None
        resp = list(self.responses().values())
        if len(resp) != len(m["hopf_targets"]):
            raise ConfigError("hopf_targets needs one value per response family",
                              "model.hopf_targets")
        return calibrate_lgm(resp, m["hopf_targets"], (m["anchor"], m["anchor_value"]))

    def model_spec(self, response=None, K: Optional[float] = None,
                   calibration: Optional[LGMCalibration] = None) -> ModelSpec:
        m = self.values["model"]
        response = response if response is not None else self.response()
        K = K if K is not None else (m["K"] if m["K"] is not None else 1.0)
        kw = dict(r=m["r"], s=m["s"], q=m["q"])
        if m["model"] == "lgm" and m["calibrate"]:
            cal = calibration or self.calibration()
            kw = dict(r=cal.r, s=cal.s, q=cal.q)
        if m["model"] == "rm":
            return ModelSpec("rm", kw["r"], K, response, m=m["m"], x_floor=m["x_floor"])
        return ModelSpec("lgm", kw["r"], K, response, s=kw["s"], q=kw["q"],
                         x_floor=m["x_floor"])

    def sim_config(self) -> SimConfig:
        s = self.section("sim")
        return SimConfig(s["dt"], s["t_end"], s["transient_fraction"],
                         _as_state(s["x0"], s["y0"]), self.seed, s["sigma"])

    def K_grid(self) -> np.ndarray:
        g = self.values["grid"]
        if g["K"] is not None:
            arr = np.array(g["K"], dtype=float)
        else:
            lo, hi, step = g["K_min"], g["K_max"], g["K_step"]
            if not (step > 0 and hi >= lo):
                raise ValueError("need K_step > 0 and K_max >= K_min")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            # round off accumulated float error in lo + k*step
            arr = np.round(lo + step * np.arange(n), 12)
        if np.any(np.diff(arr) <= 0):
            raise ValueError("K values must be strictly increasing")
        return arr

    def fit_region(self) -> FitRegion:
        f = self.section("fit")
        if f["focus_lo"] is not None or f["focus_hi"] is not None:
            if None in (f["focus_lo"], f["focus_hi"], f["outside_weight"]):
                raise ValueError("focus_lo, focus_hi and outside_weight go together")
            return FitRegion.focused(f["x_lo"], f["x_hi"], (f["focus_lo"], f["focus_hi"]),
                                     f["outside_weight"], f["n_grid"])
        return FitRegion(f["x_lo"], f["x_hi"], f["n_grid"])

    def fit_target(self, base_dir: Optional[Path] = None):
        f = self.values["fit"]
        if f["data"] is not None:
            p = Path(f["data"])
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            return SampledCurve.from_csv(p)
        return self.build_response(Family.parse(f["target"]).initial)
