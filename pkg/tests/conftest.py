import numpy as np
import pytest

from structsens.models import ModelSpec, calibrate_lgm
from structsens.presets import HOPF_K, LGM_ORIGINAL, RM_ORIGINAL


@pytest.fixture(scope="session")
def lgm_cal():
    resp = list(LGM_ORIGINAL.values())
    return calibrate_lgm(resp, [HOPF_K["lgm"][r.family] for r in resp])


@pytest.fixture
def rm_spec():
    def make(fam, K=1.0, m=0.1):
        return ModelSpec("rm", 1.0, K, RM_ORIGINAL[fam], m=m)
    return make


@pytest.fixture
def lgm_spec(lgm_cal):
    def make(fam, K=8.0):
        return ModelSpec("lgm", lgm_cal.r, K, LGM_ORIGINAL[fam], s=lgm_cal.s, q=lgm_cal.q)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
