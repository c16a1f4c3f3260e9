import numpy as np
import pytest

from uniattr.config import ExperimentConfig
from uniattr.experiments import (
    MissingArtifactError,
    attribute,
    eval_data,
    markdown_table,
    obtain_model,
    sample_seed,
    train_data,
)
from uniattr.metrics import MetricReport
from uniattr.models import predict


def test_sample_seeds_are_stable_and_distinct():
    assert sample_seed(0, 3) == sample_seed(0, 3)
    assert len({sample_seed(0, i) for i in range(100)}) == 100
    assert sample_seed(1, 0) != sample_seed(0, 0)


def test_train_and_eval_data_differ():
    cfg = ExperimentConfig(n_samples=10)
    assert not np.array_equal(train_data(cfg).x[:10], eval_data(cfg).x)
    assert eval_data(cfg, corruption="brighten").x.mean() > eval_data(cfg).x.mean()


@pytest.mark.parametrize("method", ["uni", "ig-black", "ig-blur", "ig-noise", "sg"])
def test_every_method_attributes(cnn, stripes_eval, method):
    cfg = ExperimentConfig()
    x = stripes_eval.x[0]
    c = int(predict(cnn, x))
    res = attribute(cnn, method, x, c, cfg, seed=1)
    assert res.amap.scores.shape == x.shape and res.amap.method == method
    assert (res.trace is None) == (method == "sg")
    again = attribute(cnn, method, x, c, cfg, seed=1)
    np.testing.assert_array_equal(res.amap.scores, again.amap.scores)


def test_unknown_method(cnn, stripes_eval):
    with pytest.raises(ValueError):
        attribute(cnn, "lime", stripes_eval.x[0], 0, ExperimentConfig(), 0)


def test_missing_artifact(tmp_path):
    cfg = ExperimentConfig(out_dir=str(tmp_path))
    with pytest.raises(MissingArtifactError):
        obtain_model(cfg, train_if_missing=False)


def test_markdown_table():
    rep = MetricReport.from_values("m", [0.5, 1.0])
    table = markdown_table({"uni": {"m": rep}}, ["m", "other"])
    assert table.splitlines()[2] == "| uni | 0.7500 ± 0.2500 | - |"
