import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uniattr import autodiff as ad  # noqa: E402
from uniattr.attribution import FunctionHead  # noqa: E402
from uniattr.data import gen_dataset  # noqa: E402
from uniattr.models import fit_gmm, train  # noqa: E402

GMM_POINTS = np.array([[1.0, 1.0], [2.0, 5.0], [4.0, 3.0]])


@pytest.fixture(scope="session")
def stripes():
    return gen_dataset("stripes-vs-checker", 400, side=16, seed=0)


@pytest.fixture(scope="session")
def stripes_eval():
    return gen_dataset("stripes-vs-checker", 200, side=16, seed=1000)


@pytest.fixture(scope="session")
def cnn(stripes):
    return train("small-cnn", stripes, epochs=8, lr=0.1, seed=0)


@pytest.fixture(scope="session")
def blobs():
    return gen_dataset("blobs2d", 200, seed=0)


@pytest.fixture(scope="session")
def mlp(blobs):
    return train("mlp", blobs, epochs=30, lr=0.5, seed=0)


@pytest.fixture(scope="session")
def gmm():
    return fit_gmm(GMM_POINTS).to_model()


def linear_head(w, b=0.0):
    """Scalar head F(x) = w . x + b on batches of shape (N, *w.shape)."""
    w = np.asarray(w, dtype=np.float64)

    def build(xv):
        n = xv.shape[0]
        return ad.reshape(ad.reshape(xv, (n, -1)) @ w.reshape(-1, 1), (n,)) + b

    return FunctionHead(build, w.shape)


def quadratic_head():
    """F(x) = x^2 on scalars, as a head over inputs of shape (1,)."""

    def build(xv):
        return ad.reshape(xv * xv, (xv.shape[0],))

    return FunctionHead(build, (1,))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
