"""Published parameter sets and reference values.

The LGM Holling response is stored as ``a = 5050/3``, ``b = 10/3``; the
tabulated ``1683.333`` and ``3.333`` are these values rounded, and only the
unrounded pair reproduces the tabulated LGM intersections to four decimals.
"""

from __future__ import annotations

from .responses import Family, FunctionalResponse

H, I, T = Family.HOLLING, Family.IVLEV, Family.TRIG

RM_DEFAULTS = {"r": 1.0, "m": 0.1}
# time-scale anchor for calibrate_lgm; see models.calibrate_lgm
LGM_ANCHOR = ("q", 212.0)

RM_ORIGINAL = {
    H: FunctionalResponse(H, 3.05, 2.68),
    I: FunctionalResponse(I, 1.0, 2.0),
    T: FunctionalResponse(T, 0.99, 1.48),
}

LGM_ORIGINAL = {
    H: FunctionalResponse(H, 5050.0 / 3.0, 10.0 / 3.0),
    I: FunctionalResponse(I, 451.447, 2.313),
    T: FunctionalResponse(T, 446.182, 1.743),
}

ORIGINAL = {"rm": RM_ORIGINAL, "lgm": LGM_ORIGINAL}

# fitting windows around the coexistence prey density
FIT_WINDOW = {"rm": (0.0, 0.1), "lgm": (0.3, 1.0)}
FULL_WINDOW = (0.0, 4.0)

# regional fits: model -> fixed family -> fitted family -> (a, b)
REGIONAL_FITS = {
    "rm": {
        H: {I: (0.6282, 4.8204), T: (0.3707, 7.6281)},
        I: {H: (2.0026, 1.0453), T: (0.4069, 4.7698)},
        T: {H: (1.4695, 0.0978), I: (7.5417, 0.1948)},
    },
    "lgm": {
        H: {I: (399.8009, 3.1656), T: (384.1465, 2.4028)},
        I: {H: (1228.2780, 1.9855), T: (418.5697, 1.9188)},
        T: {H: (1114.6253, 1.5905), I: (492.0405, 2.0060)},
    },
}

# non-trivial intersections on [0, 4]: model -> (fam, fam) -> (low/mid, mid/high)
INTERSECTIONS = {
    "rm": {
        (H, I): (0.6191, 2.5799),
        (I, T): (0.5651, 2.1597),
        (T, H): (0.5942, 2.4695),
    },
    "lgm": {
        (H, I): (0.5726, 2.4486),
        (I, T): (0.4458, 1.8077),
        (T, H): (0.5152, 2.2611),
    },
}

# Hopf and limit-cycle-saddle carrying capacities of the original models
HOPF_K = {
    "rm": {H: 0.4452, I: 1.071, T: 10.12},
    "lgm": {H: 5.554, I: 12.09, T: 26.36},
}
LC_SADDLE_K = {
    "rm": {T: 2.644},
    "lgm": {I: 10.51, T: 12.94},
}


def fitted_set(model: str, fixed: Family) -> dict:
    """Tabulated regional-fit responses with ``fixed`` held at its original."""
    out = {fixed: ORIGINAL[model][fixed]}
    for fam, (a, b) in REGIONAL_FITS[model][fixed].items():
        out[fam] = FunctionalResponse(fam, a, b)
    return dict(sorted(out.items()))
