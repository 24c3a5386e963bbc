"""The MSE-envelope criterion should notice a broken step-size schedule."""

import math

import pytest

from aoi_online import acceptance
from aoi_online import online_sampler as osm

ORIGINAL = osm.step_size


def scaled(factor):
    return lambda k, D_lb: factor * ORIGINAL(k, D_lb)


MUTANTS = {
    "eta_times_0.1": scaled(0.1),
    "constant_eta": lambda k, D_lb: 0.05 / D_lb,
    "eta_over_sqrt_k": lambda k, D_lb: 1.0 / (math.sqrt(k + 2) * D_lb),
}


@pytest.mark.parametrize("name", list(MUTANTS))
def test_mutant_fails_mse_envelope(monkeypatch, name):
    monkeypatch.setattr(osm, "step_size", MUTANTS[name])
    ok, measured = acceptance.mse_envelope(runs=100)
    assert not ok, measured


@pytest.mark.xfail(strict=True, reason="a doubled step keeps the 1/K rate and stays inside the envelope")
def test_doubled_eta_fails_mse_envelope(monkeypatch):
    monkeypatch.setattr(osm, "step_size", scaled(2.0))
    ok, measured = acceptance.mse_envelope(runs=100)
    assert not ok, measured


def test_unmutated_passes():
    ok, measured = acceptance.mse_envelope(runs=100)
    assert ok, measured
