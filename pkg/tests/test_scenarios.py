import pytest

from aoi_online import scenarios
from aoi_online.delay_models import LogNormal
from aoi_online.online_sampler import Online


@pytest.mark.parametrize("name", list(scenarios.SCENARIOS))
def test_scenarios_are_self_contained(name):
    sc = scenarios.get(name)
    refs = sc.references()
    assert refs["optimum"]["aoi_star"] > 0
    for label, value in refs.items():
        if label != "optimum":
            assert value >= refs["optimum"]["aoi_star"] - 1e-9


def test_truncated_twins():
    a = scenarios.get("lognormal-unconstrained").model
    b = scenarios.get("lognormal-unconstrained-truncated").model
    assert a.truncation is None and b == LogNormal.truncated(1.0, 1.3)


def test_constrained_frequency():
    sc = scenarios.get("lognormal-constrained")
    assert sc.inv_f_max == pytest.approx(10 * sc.model.moments().mean)
    assert sc.policies["online_V1"] == Online(V=1.0)


def test_unknown():
    with pytest.raises(ValueError):
        scenarios.get("nope")


@pytest.mark.slow
def test_online_threshold_trend():
    """Per-run threshold error shrinks as cycles accumulate (heavy tail: use medians)."""
    import numpy as np
    from aoi_online.simulator import RunConfig, ensemble
    sc = scenarios.get("lognormal-unconstrained")
    star = sc.references()["optimum"]["gamma_star"]
    s = ensemble(RunConfig(sc.model, sc.policies["online"], 20_000, seed=0, bounds_mode="estimated"),
                 20, checkpoints=[10, 100, 1000, 20_000], times=[])
    err = np.median(np.abs(s.per_run["gamma"] - star), axis=1) / star
    assert np.all(np.diff(err) < 0), err
    assert err[-1] < 0.2
