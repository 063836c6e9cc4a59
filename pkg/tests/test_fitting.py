import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structsens.fitting import (
    PENALTY,
    FitRegion,
    SampledCurve,
    fit_response,
    fit_to_self,
    make_objective,
    nelder_mead,
    objective,
    write_fit_csv,
)
from structsens.presets import FIT_WINDOW, FULL_WINDOW, LGM_ORIGINAL, REGIONAL_FITS, RM_ORIGINAL
from structsens.responses import Family, FunctionalResponse

H, I, T = Family.HOLLING, Family.IVLEV, Family.TRIG

# Levenberg-Marquardt (scipy least_squares, xtol=ftol=1e-15) on the same
# 1000-point uniform grid: (model, fixed, fitted) -> (a, b)
LM_FULL = {
    ("lgm", H, I): (451.42123432207256, 2.3134830137206226),
    ("lgm", H, T): (446.1524679681105, 1.7434153208545191),
    ("rm", I, H): (3.0470168792691377, 2.6756030920472016),
    ("rm", I, T): (0.9889772134331885, 1.4749996838732728),
}
LM_REGIONAL = {
    ("rm", H, I): (0.6279547145133473, 4.822366082865208),
    ("rm", H, T): (0.36997051624213667, 7.644979807214475),
    ("rm", I, H): (2.0025695878332996, 1.0451030415437155),
    ("rm", I, T): (0.40607037618268504, 4.779901892784006),
    ("rm", T, H): (1.4694708218259303, 0.09739276386433884),
    ("rm", T, I): (7.574682959456439, 0.19399558619126467),
    ("lgm", H, I): (399.7671447368876, 3.165717971820829),
    ("lgm", H, T): (384.11602546618394, 2.402813773696199),
    ("lgm", I, H): (1228.2974311342398, 1.9855377985021767),
    ("lgm", I, T): (418.5691291525657, 1.9188089440853013),
    ("lgm", T, H): (1114.6618962695727, 1.5905853809881307),
    ("lgm", T, I): (492.04077028934756, 2.006055614774934),
}
ORIGINAL = {"rm": RM_ORIGINAL, "lgm": LGM_ORIGINAL}


class TestNelderMead:
    def test_quadratic(self):
        x, f, it, conv = nelder_mead(lambda p: (p[0] - 3) ** 2 + 2 * (p[1] + 1) ** 2, [1.0, 1.0])
        assert conv
        np.testing.assert_allclose(x, [3, -1], atol=1e-5)
        assert f < 1e-10

    def test_rosenbrock(self):
        rosen = lambda p: 100 * (p[1] - p[0] ** 2) ** 2 + (1 - p[0]) ** 2  # noqa: E731
        x, f, _, conv = nelder_mead(rosen, [-1.2, 1.0], tol=1e-14, max_iter=20000)
        assert conv
        np.testing.assert_allclose(x, [1, 1], atol=1e-4)

    def test_iteration_cap_reports_not_converged(self):
        _, _, it, conv = nelder_mead(lambda p: (p[0] - 100) ** 2 + p[1] ** 2, [1.0, 1.0],
                                     max_iter=3)
        assert it == 3 and not conv

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            nelder_mead(lambda p: 0.0, [1.0, 1.0], tol=0.0)

    def test_zero_start_coordinate(self):
        x, _, _, conv = nelder_mead(lambda p: (p[0] - 0.5) ** 2 + (p[1] - 0.5) ** 2, [0.0, 0.0])
        assert conv
        np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-5)


class TestObjective:
    def test_penalty_for_nonpositive(self):
        region = FitRegion(0.0, 1.0)
        t = RM_ORIGINAL[I]
        for p in [(0.0, 1.0), (1.0, -1.0), (math.nan, 1.0), (math.inf, 1.0)]:
            assert objective(H, p, t, region) == PENALTY

    def test_zero_at_identity(self):
        t = RM_ORIGINAL[H]
        assert objective(H, (t.a, t.b), t, FitRegion(0, 4)) == 0.0

    def test_matches_manual_sum(self):
        region = FitRegion(0.0, 4.0, n_grid=50)
        xs = np.linspace(0, 4, 50)
        t = RM_ORIGINAL[I]
        cand = FunctionalResponse(H, 3.0, 2.6)
        expected = float(np.sum((cand(xs) - t(xs)) ** 2))
        assert objective(H, (3.0, 2.6), t, region) == pytest.approx(expected, rel=1e-12)

    def test_focused_weights(self):
        region = FitRegion.focused(0.0, 4.0, (0.0, 1.0), 0.0, n_grid=100)
        w = region.weight_array()
        xs = region.grid
        assert np.all(w[xs <= 1.0] == 1.0) and np.all(w[xs > 1.0] == 0.0)
        # with zero weight outside, the focused objective equals the [0, 1] part only
        t = RM_ORIGINAL[I]
        full = make_objective(H, t, FitRegion(0.0, 4.0, n_grid=100))
        foc = make_objective(H, t, region)
        assert foc((3.0, 2.6)) < full((3.0, 2.6))

    def test_region_validation(self):
        with pytest.raises(ValueError):
            FitRegion(1.0, 0.5)
        with pytest.raises(ValueError):
            FitRegion(0.0, 1.0, n_grid=5)
        with pytest.raises(ValueError):
            FitRegion(0.0, 1.0, n_grid=10, weights=(1.0,) * 9)
        with pytest.raises(ValueError):
            FitRegion(0.0, 1.0, n_grid=10, weights=(-1.0,) + (1.0,) * 9)


class TestFits:
    @pytest.mark.parametrize("key", sorted(LM_FULL, key=str))
    def test_full_domain_matches_lm_oracle(self, key):
        model, fixed, fam = key
        res = fit_response(fam, ORIGINAL[model][fixed], FitRegion(*FULL_WINDOW))
        assert res.converged
        np.testing.assert_allclose(res.params, LM_FULL[key], rtol=1e-4)

    @pytest.mark.parametrize("key", sorted(LM_REGIONAL, key=str))
    def test_regional_matches_lm_oracle(self, key):
        model, fixed, fam = key
        res = fit_response(fam, ORIGINAL[model][fixed], FitRegion(*FIT_WINDOW[model]))
        np.testing.assert_allclose(res.params, LM_REGIONAL[key], rtol=1e-4)

    @pytest.mark.parametrize("model", ["rm", "lgm"])
    def test_regional_close_to_tabulated(self, model):
        for fixed, fits in REGIONAL_FITS[model].items():
            for fam, ab in fits.items():
                np.testing.assert_allclose(LM_REGIONAL[(model, fixed, fam)], ab, rtol=0.02)

    def test_same_family_rejected(self):
        with pytest.raises(ValueError):
            fit_response(H, RM_ORIGINAL[H], FitRegion(0, 4))

    def test_seed_determinism(self):
        a = fit_response(T, RM_ORIGINAL[I], FitRegion(0, 0.1), seed=3)
        b = fit_response(T, RM_ORIGINAL[I], FitRegion(0, 0.1), seed=3)
        assert a == b

    def test_best_not_worse_than_initial(self):
        res = fit_response(T, RM_ORIGINAL[H], FitRegion(0, 4), restarts=2)
        assert res.objective <= res.initial_objective

    def test_grid_doubling_stable(self):
        for model, fixed, fam in LM_FULL:
            t = ORIGINAL[model][fixed]
            r1 = fit_response(fam, t, FitRegion(*FULL_WINDOW, n_grid=1000))
            r2 = fit_response(fam, t, FitRegion(*FULL_WINDOW, n_grid=2000))
            np.testing.assert_allclose(r1.params, r2.params, rtol=5e-3)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([H, I, T]), st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_self_recovery(fam, a, b):
    truth = FunctionalResponse(fam, a, b)
    res = fit_to_self(truth, FitRegion(0.0, 4.0, n_grid=200), tol=1e-14, max_iter=20000)
    np.testing.assert_allclose(res.params, (a, b), rtol=1e-3)


class TestSampledCurve:
    def test_fit_to_samples_recovers_truth(self, tmp_path):
        truth = FunctionalResponse(I, 1.0, 2.0)
        xs = np.linspace(0.0, 4.0, 80)
        path = tmp_path / "data.csv"
        lines = ["# observed", "x,f"] + [f"{float(x)!r},{float(truth(x))!r}" for x in xs[::-1]]
        path.write_text("\n".join(lines) + "\n")
        curve = SampledCurve.from_csv(path)
        assert curve.x[0] == 0.0
        res = fit_response(I, curve, FitRegion(0.0, 4.0))
        np.testing.assert_allclose(res.params, (1.0, 2.0), rtol=1e-5)

    def test_weight_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,f,w\n0.1,0.2,1\n0.2,0.3,0\n0.3,0.35,2\n")
        c = SampledCurve.from_csv(path)
        assert c.w == (1.0, 0.0, 2.0)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="x,f"):
            SampledCurve.from_csv(path)

    def test_validation(self):
        with pytest.raises(ValueError):
            SampledCurve((0.2, 0.1), (1.0, 2.0))
        with pytest.raises(ValueError):
            SampledCurve((), ())
        with pytest.raises(ValueError):
            SampledCurve((0.1, 0.2), (1.0, 2.0), w=(1.0,))

    def test_too_few_in_region(self):
        c = SampledCurve((0.1, 3.0), (0.2, 0.9))
        with pytest.raises(ValueError, match="fewer than two"):
            fit_response(H, c, FitRegion(0.0, 1.0))

    def test_grid_weights_rejected_for_samples(self):
        c = SampledCurve(tuple(np.linspace(0, 1, 20)), tuple(np.linspace(0, 1, 20)))
        region = FitRegion.focused(0.0, 1.0, (0.0, 0.5), 0.1, n_grid=20)
        with pytest.raises(ValueError, match="w column"):
            fit_response(H, c, region)


def test_write_fit_csv(tmp_path):
    res = fit_response(T, RM_ORIGINAL[I], FitRegion(0, 4), restarts=1)
    path = tmp_path / "fit.csv"
    write_fit_csv([res], path, header="# test")
    lines = path.read_text().splitlines()
    assert lines[0] == "# test"
    assert lines[1] == "family,a,b,objective,converged"
    fam, a, b, obj, conv = lines[2].split(",")
    assert fam == T.key and float(a) == res.params[0] and float(b) == res.params[1]
    assert conv == str(res.converged).lower()
