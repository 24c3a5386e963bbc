"""Online threshold learner and baseline waiting policies.

The scalar functions (``init_state``, ``step_size``, ``decide_wait``,
``update``) are the reference form of the learner.  The simulator drives
many runs at once through the batched controllers below, which apply the
same arithmetic elementwise; tests hold the two paths bit-identical.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from typing import Any, Sequence

import numpy as np

from . import oracle
from .delay_models import DelayModel, Empirical

log = logging.getLogger(__name__)

DEFAULT_V = 10.0


@dataclass(frozen=True)
class SamplerConfig:
    gamma_lb: float
    gamma_ub: float
    D_lb: float
    V: float = DEFAULT_V
    inv_f_max: float = 0.0
    seed: int = 0
    w_ub: float | None = None

    def __post_init__(self):
        if not self.gamma_lb <= self.gamma_ub:
            raise ValueError(f"empty window [{self.gamma_lb}, {self.gamma_ub}]")
        if not self.D_lb > 0:
            raise ValueError(f"D_lb must be > 0, got {self.D_lb}")
        if not self.V > 0:
            raise ValueError(f"V must be > 0, got {self.V}")
        if not self.inv_f_max >= 0:
            raise ValueError(f"inv_f_max must be >= 0, got {self.inv_f_max}")


@dataclass(frozen=True)
class SamplerState:
    k: int
    gamma: float
    U: float = 0.0


def init_state(config: SamplerConfig, rng: np.random.Generator | None = None) -> SamplerState:
    """gamma_1 drawn uniformly on the clipping window, zero debt."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    u = float(rng.random())
    return SamplerState(1, config.gamma_lb + (config.gamma_ub - config.gamma_lb) * u, 0.0)


def step_size(k, D_lb):
    if k == 1:
        return 1.0 / (2 * D_lb)
    return 1.0 / ((k + 2) * D_lb)


def decide_wait(state: SamplerState, config: SamplerConfig, delay: float) -> float:
    return max(state.gamma + state.U / config.V - delay, 0.0)


def update(state: SamplerState, config: SamplerConfig, delay: float, wait: float) -> SamplerState:
    """One Robbins-Monro step on gamma and one queue step on the debt."""
    L = delay + wait
    Q = 0.5 * L * L
    eta = step_size(state.k, config.D_lb)
    gamma = min(config.gamma_ub, max(state.gamma + eta * (Q - state.gamma * L), config.gamma_lb))
    U = max(state.U + config.inv_f_max - L, 0.0)
    return SamplerState(state.k + 1, gamma, U)


# -- batched controllers ----------------------------------------------------

@dataclass
class BatchContext:
    """What a policy may know when a batch of runs starts."""

    model: DelayModel
    inv_f_max: float
    rngs: Sequence[np.random.Generator]
    D_lb: np.ndarray
    D_ub: np.ndarray
    M_lb: np.ndarray
    M_ub: np.ndarray

    @property
    def n(self) -> int:
        return len(self.rngs)

    @property
    def f_max(self) -> float:
        return math.inf if self.inv_f_max == 0 else 1.0 / self.inv_f_max


class Controller:
    """Maps a vector of delays (one per run) to a vector of waits."""

    gamma: np.ndarray | None = None
    U: np.ndarray | None = None

    def wait(self, d: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe(self, d: np.ndarray, w: np.ndarray) -> None:
        pass

    def final_state(self, i: int) -> Any:
        return None


class _FixedWait(Controller):
    def __init__(self, w: np.ndarray):
        self.w = w

    def wait(self, d):
        return self.w.copy()


class _Threshold(Controller):
    def __init__(self, beta: np.ndarray):
        self.beta = beta

    def wait(self, d):
        return np.maximum(self.beta - d, 0.0)


class _OnlineController(Controller):
    def __init__(self, lb, ub, D_lb, V, inv_f_max, rngs, w_ub=None):
        self.lb, self.ub, self.D_lb = lb, ub, D_lb
        self.V = V
        self.inv_f_max = inv_f_max
        self.w_ub = w_ub
        self._warned = False
        u = np.array([rng.random() for rng in rngs])
        self.gamma = lb + (ub - lb) * u
        self.U = np.zeros(len(rngs))
        self.k = 1

    def wait(self, d):
        w = np.maximum(self.gamma + self.U / self.V - d, 0.0)
        if self.w_ub is not None and not self._warned and np.any(w > self.w_ub):
            log.warning("online wait exceeded W_ub=%g at cycle %d", self.w_ub, self.k)
            self._warned = True
        return w

    def observe(self, d, w):
        L = d + w
        Q = 0.5 * L * L
        eta = step_size(self.k, self.D_lb)
        self.gamma = np.minimum(self.ub, np.maximum(self.gamma + eta * (Q - self.gamma * L), self.lb))
        self.U = np.maximum(self.U + self.inv_f_max - L, 0.0)
        self.k += 1

    def final_state(self, i):
        return SamplerState(self.k, float(self.gamma[i]), float(self.U[i]))


class _PlugInController(Controller):
    """Certainty-equivalence baseline: re-solve the oracle on observed delays."""

    def __init__(self, n, refit_every, min_history, f_max):
        self.refit_every = refit_every
        self.min_history = min_history
        self.f_max = f_max
        self.sorted = [np.empty(0) for _ in range(n)]
        self.pending: list[np.ndarray] = []
        self.beta = np.zeros(n)
        self.count = 0

    def wait(self, d):
        return np.maximum(self.beta - d, 0.0)

    def observe(self, d, w):
        self.pending.append(np.array(d, dtype=float))
        self.count += 1
        if self.count >= self.min_history and self.count % self.refit_every == 0:
            block = np.sort(np.stack(self.pending), axis=0)
            self.pending = []
            for i in range(len(self.beta)):
                old = self.sorted[i]
                new = block[:, i]
                self.sorted[i] = np.insert(old, np.searchsorted(old, new), new)
                if self.sorted[i][-1] > 0:
                    emp = Empirical.from_sorted(self.sorted[i])
                    self.beta[i] = oracle.solve_constrained(emp, self.f_max).beta

    def final_state(self, i):
        return {"beta_hat": float(self.beta[i]), "history": self.count}


# -- policy descriptions ----------------------------------------------------

class Policy:
    name = ""

    def controller(self, ctx: BatchContext) -> Controller:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        d = {"policy": self.name}
        d.update({k: v for k, v in asdict(self).items() if v is not None})
        return d

    def wait(self, delay: float, **ctx) -> float:
        """Scalar wait for a single delay (baseline_wait)."""
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroWait(Policy):
    name = "zero_wait"

    def controller(self, ctx):
        return _FixedWait(np.zeros(ctx.n))

    def wait(self, delay, **ctx):
        return 0.0


@dataclass(frozen=True)
class ConstantWait(Policy):
    """Fixed wait; by default 1/f_max minus the mean delay (floored at 0)."""

    w: float | None = None
    name = "constant_wait"

    def resolve(self, model: DelayModel, inv_f_max: float) -> float:
        if self.w is not None:
            return float(self.w)
        return max(inv_f_max - model.moments().mean, 0.0)

    def controller(self, ctx):
        return _FixedWait(np.full(ctx.n, self.resolve(ctx.model, ctx.inv_f_max)))

    def wait(self, delay, model=None, inv_f_max=0.0, **ctx):
        if self.w is None and model is None:
            raise ValueError("constant wait needs either w or a model")
        return self.resolve(model, inv_f_max) if self.w is None else float(self.w)


@dataclass(frozen=True)
class OracleThreshold(Policy):
    """Known-distribution optimum; beta is solved from the model when omitted."""

    beta: float | None = None
    name = "oracle"

    def resolve(self, model: DelayModel, inv_f_max: float) -> float:
        if self.beta is not None:
            return float(self.beta)
        f_max = math.inf if inv_f_max == 0 else 1.0 / inv_f_max
        return oracle.solve_constrained(model, f_max).beta

    def controller(self, ctx):
        return _Threshold(np.full(ctx.n, self.resolve(ctx.model, ctx.inv_f_max)))

    def wait(self, delay, model=None, inv_f_max=0.0, **ctx):
        beta = self.beta if self.beta is not None else self.resolve(model, inv_f_max)
        return max(beta - delay, 0.0)


@dataclass(frozen=True)
class PlugIn(Policy):
    refit_every: int = 10
    min_history: int = 10
    name = "plugin"

    def __post_init__(self):
        if self.refit_every < 1 or self.min_history < 1:
            raise ValueError("refit_every and min_history must be >= 1")

    def controller(self, ctx):
        return _PlugInController(ctx.n, self.refit_every, self.min_history, ctx.f_max)

    def wait(self, delay, history=(), inv_f_max=0.0, **ctx):
        if len(history) < self.min_history:
            return 0.0
        f_max = math.inf if inv_f_max == 0 else 1.0 / inv_f_max
        beta = oracle.solve_constrained(Empirical(history), f_max).beta
        return max(beta - delay, 0.0)


@dataclass(frozen=True)
class Online(Policy):
    """The learner. Unset window/step constants come from the run's moment bounds."""

    V: float = DEFAULT_V
    gamma_lb: float | None = None
    gamma_ub: float | None = None
    D_lb: float | None = None
    w_ub: float | None = None
    name = "online"

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError(f"V must be > 0, got {self.V}")

    def controller(self, ctx):
        n = ctx.n
        if self.gamma_lb is None or self.gamma_ub is None:
            lb, ub = np.empty(n), np.empty(n)
            for i in range(n):
                b = oracle.gamma_bounds(ctx.D_lb[i], ctx.D_ub[i], ctx.M_lb[i], ctx.M_ub[i], ctx.f_max)
                lb[i], ub[i] = b.gamma_lb, b.gamma_ub
        if self.gamma_lb is not None:
            lb = np.full(n, float(self.gamma_lb))
        if self.gamma_ub is not None:
            ub = np.full(n, float(self.gamma_ub))
        if np.any(lb > ub):
            raise ValueError("online policy window has gamma_lb > gamma_ub")
        D_lb = np.full(n, float(self.D_lb)) if self.D_lb is not None else np.asarray(ctx.D_lb, float)
        return _OnlineController(lb, ub, D_lb, float(self.V), ctx.inv_f_max, ctx.rngs, self.w_ub)

    def config_for(self, gamma_lb, gamma_ub, D_lb, inv_f_max=0.0, seed=0) -> SamplerConfig:
        return SamplerConfig(gamma_lb, gamma_ub, D_lb, self.V, inv_f_max, seed, self.w_ub)

    def wait(self, delay, state: SamplerState | None = None, config: SamplerConfig | None = None, **ctx):
        if state is None or config is None:
            raise ValueError("online policy needs a sampler state and config")
        return decide_wait(state, config, delay)


POLICIES = {cls.name: cls for cls in (Online, ZeroWait, ConstantWait, OracleThreshold, PlugIn)}


def policy_from_dict(obj: dict[str, Any] | str) -> Policy:
    if isinstance(obj, str):
        obj = {"policy": obj}
    obj = dict(obj)
    name = obj.pop("policy", None)
    alias = obj.pop("name", None)
    name = name or alias
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}")
    try:
        return POLICIES[name](**obj)
    except TypeError as exc:
        raise ValueError(f"bad parameters for policy {name!r}: {exc}") from None


def baseline_wait(policy: Policy, delay: float, **ctx) -> float:
    return policy.wait(delay, **ctx)


def with_window(policy: Online, bounds: oracle.GammaBounds) -> Online:
    return replace(policy, gamma_lb=bounds.gamma_lb, gamma_ub=bounds.gamma_ub)
