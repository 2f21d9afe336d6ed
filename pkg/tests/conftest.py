import numpy as np
import pytest

from cbfaw import constants
from cbfaw.aw_cbf import make_cbf_params
from cbfaw.lqr_synthesis import make_gains
from cbfaw.load import scenario_path
from cbfaw.lti_core import build_extended_system, make_limits, make_plant
from cbfaw.verify import reference_problem


@pytest.fixture(scope="session")
def reference_plant():
    return make_plant(
        constants.REFERENCE_A_P, constants.REFERENCE_B_P, constants.REFERENCE_C_P_REG, constants.REFERENCE_D_P_REG
    )


@pytest.fixture(scope="session")
def reference_extended(reference_plant):
    return build_extended_system(reference_plant)


@pytest.fixture(scope="session")
def printed_gains():
    """The rounded gain vector of the reference design, used for hand arithmetic."""
    k_i, k_p1, k_p2 = constants.REFERENCE_GAINS
    return make_gains([[k_i]], [[k_p1, k_p2]], 2, 1)


@pytest.fixture(scope="session")
def reference_limits():
    return make_limits(-constants.REFERENCE_LIMIT, constants.REFERENCE_LIMIT, 1)


@pytest.fixture(scope="session")
def reference_params():
    return make_cbf_params(constants.REFERENCE_ALPHA_CBF)


@pytest.fixture(scope="session")
def lqr_problem():
    """The reference design with gains synthesised by LQR."""
    return reference_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def short_doublet(tmp_path):
    """fig4_limited_aw cut to 3 s at a 10 ms step, renamed and written to tmp_path."""
    text = scenario_path("fig4_limited_aw").read_text(encoding="utf-8")
    text = text.replace("scenario.name = fig4_limited_aw", "scenario.name = short_doublet")
    text = text.replace("sim.dt = 1.0e-3", "sim.dt = 0.01")
    text = text.replace("sim.duration = 15.0", "sim.duration = 3.0")
    path = tmp_path / "short_doublet.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)
