import json

import numpy as np
import pytest

from arobundle.model import Instance, Polytope, StageData, XBounds

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])


def tiny_stage(t, n_u=1, d=0.0, f=1.0, H=1.0, M=0.0, n_x=1):
    """One state, one control: s - y = H u_t, y >= M u_t, s free, cost d s + f y."""
    return StageData(
        t=t, n_s=1, n_y=1, n_u=n_u, Tt=np.zeros((1, n_x)), At=np.ones((1, 1)),
        Bt=np.zeros((1, 1)), Wt=-np.ones((1, 1)), h0=np.zeros(1), Ht=np.full((1, n_u), H),
        Lt=np.zeros((1, n_x)), Et=np.zeros((1, 1)), Gt=np.ones((1, 1)), m0=np.zeros(1),
        Mt=np.full((1, n_u), M), dt=np.array([d]), ft=np.array([f]))


def tiny_instance(T=1, lo=0.0, hi=1.0, d=0.0, c=0.0, H=1.0, M=0.0):
    stages = tuple(tiny_stage(t, d=d, H=H, M=M) for t in range(1, T + 1))
    return Instance(T=T, n_x=1, c=np.array([c]), s0=np.zeros(1),
                    x_bounds=XBounds(np.array([-1.0]), np.array([1.0])), stages=stages,
                    U=Polytope.box(np.full(T, lo), np.full(T, hi)))


MINIMAL_DOC = {
    "T": 1, "n_x": 1, "c": [1.0], "s0": [0.0], "x_bounds": {"lo": [0], "hi": [1]},
    "stages": [{
        "n_s": 1, "n_y": 1, "n_u": 1,
        "At": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1.0]]},
        "Wt": {"rows": 1, "cols": 1, "triplets": [[0, 0, -1.0]]},
        "Ht": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1.0]]},
        "h0": [0.0],
        "Gt": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1.0]]},
        "m0": [0.0], "ft": [1.0], "dt": [0.0],
    }],
    "U": {"dim": 1, "lo": [0], "hi": [1]},
}


@pytest.fixture
def minimal_doc():
    return json.loads(json.dumps(MINIMAL_DOC))
