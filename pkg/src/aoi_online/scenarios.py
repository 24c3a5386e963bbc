"""Named experiment setups: log-normal delay, with and without a frequency cap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import oracle
from .delay_models import DelayModel, LogNormal, Uniform
from .online_sampler import ConstantWait, Online, OracleThreshold, PlugIn, Policy, ZeroWait


@dataclass(frozen=True)
class ExperimentScenario:
    name: str
    description: str
    model: DelayModel
    policies: dict[str, Policy]
    inv_f_max: float = 0.0
    bounds_mode: str = "estimated"
    K: int = 100_000
    runs: int = 100
    meta: dict = field(default_factory=dict)

    @property
    def f_max(self) -> float:
        return math.inf if self.inv_f_max == 0 else 1.0 / self.inv_f_max

    def references(self) -> dict:
        """Oracle values for every comparison policy that has a closed form."""
        sol = oracle.solve_constrained(self.model, self.f_max)
        refs = {"optimum": sol.to_dict()}
        for label, pol in self.policies.items():
            if isinstance(pol, ZeroWait):
                refs[label] = oracle.stationary_policy_aoi(self.model, 0.0)
            elif isinstance(pol, ConstantWait):
                refs[label] = oracle.constant_wait_aoi(self.model, pol.resolve(self.model, self.inv_f_max))
            elif isinstance(pol, OracleThreshold):
                refs[label] = sol.aoi_star
        return refs


def _unconstrained(name, model, note):
    return ExperimentScenario(
        name, "log-normal delay, no sampling-frequency constraint",
        model,
        {"online": Online(), "zero_wait": ZeroWait(), "oracle": OracleThreshold(),
         "plugin": PlugIn(refit_every=100)},
        meta={"truncation": note})


def _constrained(name, model, note):
    inv_f = 10 * model.moments().mean
    return ExperimentScenario(
        name, "log-normal delay, f_max = 1 / (10 * mean delay)",
        model,
        {"online_V1": Online(V=1.0), "online_V10": Online(V=10.0),
         "constant_wait": ConstantWait(), "oracle": OracleThreshold()},
        inv_f_max=inv_f, meta={"truncation": note})


def _build() -> dict[str, ExperimentScenario]:
    untrunc = "untruncated"
    trunc = "truncated at the 99.99th percentile"
    out = [
        _unconstrained("lognormal-unconstrained", LogNormal(1.0, 1.3), untrunc),
        _unconstrained("lognormal-unconstrained-truncated", LogNormal.truncated(1.0, 1.3), trunc),
        _constrained("lognormal-constrained", LogNormal(1.0, 1.5), untrunc),
        _constrained("lognormal-constrained-truncated", LogNormal.truncated(1.0, 1.5), trunc),
        ExperimentScenario("uniform", "Uniform[0, 1] delay, exact moment bounds",
                           Uniform(0.0, 1.0),
                           {"online": Online(), "zero_wait": ZeroWait(), "oracle": OracleThreshold()},
                           bounds_mode="exact"),
    ]
    return {s.name: s for s in out}


SCENARIOS = _build()


def get(name: str) -> ExperimentScenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
