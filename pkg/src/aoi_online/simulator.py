"""Cycle-level simulation of the wait-for-ACK status-update loop.

One batched kernel drives any number of independent runs in lock-step:
every run owns its delay stream and policy generator, both derived from the
run's seed, and all per-cycle arithmetic is elementwise.  A single run is a
batch of one, so ``run`` and ``ensemble`` share exactly the same code path.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import oracle
from .aoi_core import Trajectory
from .delay_models import DelayModel, DelayStream
from .online_sampler import BatchContext, Policy

Z_975 = 1.96
DEFAULT_WARMUP = 100
BLOCK = 4096


@dataclass(frozen=True)
class RunConfig:
    model: DelayModel
    policy: Policy
    K: int
    inv_f_max: float = 0.0
    seed: int = 0
    bounds_mode: str = "exact"
    warmup_n: int = DEFAULT_WARMUP
    record_every: int = 1

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if not self.inv_f_max >= 0:
            raise ValueError(f"inv_f_max must be >= 0, got {self.inv_f_max}")
        if self.bounds_mode not in ("exact", "estimated"):
            raise ValueError(f"bounds_mode must be 'exact' or 'estimated', got {self.bounds_mode!r}")
        if self.bounds_mode == "estimated" and self.warmup_n < 1:
            raise ValueError("warmup_n must be >= 1 in estimated mode")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def f_max(self) -> float:
        return math.inf if self.inv_f_max == 0 else 1.0 / self.inv_f_max

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "policy": self.policy.to_dict(),
            "K": self.K,
            "inv_f_max": self.inv_f_max,
            "f_max": None if self.inv_f_max == 0 else 1.0 / self.inv_f_max,
            "seed": self.seed,
            "bounds_mode": self.bounds_mode,
            "warmup_n": self.warmup_n,
            "record_every": self.record_every,
        }


def run_generators(seed, index: int | None = None):
    """(delay generator, policy generator) for one run.

    Ensemble member ``i`` of master seed ``s`` uses the same streams as a
    single run with ``seed=s, index=i``.
    """
    entropy = seed if index is None else [seed, index]
    delay_ss, policy_ss = np.random.SeedSequence(entropy).spawn(2)
    return np.random.Generator(np.random.PCG64(delay_ss)), np.random.Generator(np.random.PCG64(policy_ss))


def bounds_from_samples(samples: np.ndarray) -> tuple[float, float, float, float]:
    d_hat = math.fsum(samples) / len(samples)
    m_hat = math.fsum(np.square(samples)) / len(samples)
    return d_hat / 10, 10 * d_hat, m_hat / 10, 10 * m_hat


def estimate_moment_bounds(model: DelayModel, n: int = DEFAULT_WARMUP, rng=None):
    """(D_lb, D_ub, M_lb, M_ub) from the empirical moments of n draws.

    ``rng`` may be a Generator or the run's DelayStream; in the latter case
    the n delays are consumed from the stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    stream = rng if isinstance(rng, DelayStream) else DelayStream(model, rng)
    return bounds_from_samples(stream.take(n))


def default_checkpoints(K: int) -> list[int]:
    pts, p = [], 1
    while p < K:
        pts.append(p)
        p *= 2
    pts.append(K)
    return pts


@dataclass
class BatchResult:
    checkpoints: list[int]
    # metric -> (n_checkpoints, runs)
    per_run: dict[str, np.ndarray]
    times: list[float]
    # (n_times, runs); NaN where a run ended before the time
    time_avg: np.ndarray
    final_states: list
    records: dict[str, np.ndarray] | None = None
    record_k: np.ndarray | None = None


def _kahan(s, c, x):
    y = x - c
    t = s + y
    c = (t - s) - y
    return t, c


def simulate_batch(model: DelayModel, policy: Policy, K: int, seeds: Sequence, *,
                   inv_f_max: float = 0.0, bounds_mode: str = "exact",
                   warmup_n: int = DEFAULT_WARMUP, checkpoints: Sequence[int] = (),
                   times: Sequence[float] = (), aoi_ref: float | None = None,
                   record_every: int | None = None) -> BatchResult:
    """Simulate ``len(seeds)`` runs of K cycles each, in lock-step.

    ``seeds`` entries are passed to :func:`run_generators` as (seed, index)
    pairs or plain seeds.  ``aoi_ref`` (optimal AoI) enables the theta
    diagnostic at checkpoints.  ``record_every`` keeps per-cycle rows.
    """
    R = len(seeds)
    gens = [run_generators(*s) if isinstance(s, tuple) else run_generators(s) for s in seeds]
    streams = [DelayStream(model, g[0], BLOCK) for g in gens]
    if bounds_mode == "exact":
        m = model.moments()
        D_lb = D_ub = np.full(R, m.mean)
        M_lb = M_ub = np.full(R, m.second_moment)
    else:
        b = np.array([bounds_from_samples(s.take(warmup_n)) for s in streams])
        D_lb, D_ub, M_lb, M_ub = b.T
    ctx = BatchContext(model, inv_f_max, [g[1] for g in gens], D_lb, D_ub, M_lb, M_ub)
    ctrl = policy.controller(ctx)

    cps = sorted(set(int(k) for k in checkpoints if 1 <= k <= K))
    cp_index = {k: i for i, k in enumerate(cps)}
    names = ["aoi_ratio", "gamma", "U", "interval", "theta"]
    per_run = {n: np.full((len(cps), R), np.nan) for n in names}

    times = sorted(float(t) for t in times)
    nT = len(times)
    t_arr = np.array(times + [math.inf])
    area_t = np.full((nT, R), np.nan)
    ptr = np.zeros(R, dtype=int)
    run_idx = np.arange(R)

    rec_k = None
    records = None
    if record_every is not None:
        rec_k = np.unique(np.append(np.arange(record_every, K + 1, record_every), K))
        records = {c: np.empty((len(rec_k), R)) for c in
                   ("D", "W", "L", "Q", "X", "S", "R", "gamma", "U", "cum_ratio")}
        rec_pos = {int(k): i for i, k in enumerate(rec_k)}

    sumX, cX = np.zeros(R), np.zeros(R)
    sumL, cL = np.zeros(R), np.zeros(R)
    L_prev = np.zeros(R)
    S_prev = np.zeros(R)  # S_{k-1}, virtual packet at 0
    block = None
    for k in range(1, K + 1):
        j = (k - 1) % BLOCK
        if j == 0:
            n = min(BLOCK, K - k + 1)
            block = np.stack([s.take(n) for s in streams], axis=1)
        d = block[j]
        S = sumL.copy()
        gamma_k = None if ctrl.gamma is None else ctrl.gamma.copy()
        U_k = None if ctrl.U is None else ctrl.U.copy()
        w = ctrl.wait(d)
        L = d + w
        Q = 0.5 * L * L
        X = L_prev * d + Q
        Rk = S + d
        sumX_before = sumX
        sumX, cX = _kahan(sumX, cX, X)
        sumL, cL = _kahan(sumL, cL, L)

        if nT:
            S_next = sumL
            hit = S_next > t_arr[ptr]
            while hit.any():
                i = run_idx[hit]
                t = t_arr[ptr[i]]
                t1 = np.minimum(t, Rk[i])
                part = 0.5 * ((t1 - S_prev[i]) ** 2 - (S[i] - S_prev[i]) ** 2)
                after = t > Rk[i]
                part = part + np.where(after, 0.5 * ((t - S[i]) ** 2 - (Rk[i] - S[i]) ** 2), 0.0)
                area_t[ptr[i], i] = (sumX_before[i] + part) / t
                ptr[i] += 1
                hit = S_next > t_arr[ptr]

        if records is not None and k in rec_pos:
            p = rec_pos[k]
            for name, val in (("D", d), ("W", w), ("L", L), ("Q", Q), ("X", X), ("S", S),
                              ("R", Rk), ("cum_ratio", sumX / sumL)):
                records[name][p] = val
            records["gamma"][p] = np.nan if gamma_k is None else gamma_k
            records["U"][p] = np.nan if U_k is None else U_k

        ctrl.observe(d, w)
        L_prev = L
        S_prev = S

        if k in cp_index:
            p = cp_index[k]
            per_run["aoi_ratio"][p] = sumX / sumL
            per_run["interval"][p] = sumL / k
            if ctrl.gamma is not None:
                per_run["gamma"][p] = ctrl.gamma
                per_run["U"][p] = ctrl.U
            if aoi_ref is not None:
                per_run["theta"][p] = (sumX - aoi_ref * sumL) / k

    # a time equal to the horizon is reached exactly at the end
    for i in range(R):
        while ptr[i] < nT and t_arr[ptr[i]] <= sumL[i]:
            area_t[ptr[i], i] = sumX[i] / t_arr[ptr[i]]
            ptr[i] += 1

    return BatchResult(cps, per_run, times, area_t,
                       [ctrl.final_state(i) for i in range(R)], records, rec_k)


def run(config: RunConfig, index: int | None = None):
    """Simulate one run; returns (Trajectory, final policy state)."""
    seed = config.seed if index is None else (config.seed, index)
    res = simulate_batch(config.model, config.policy, config.K, [seed],
                         inv_f_max=config.inv_f_max, bounds_mode=config.bounds_mode,
                         warmup_n=config.warmup_n, record_every=1)
    rec = res.records
    gamma = rec["gamma"][:, 0]
    U = rec["U"][:, 0]
    traj = Trajectory(rec["D"][:, 0], rec["W"][:, 0],
                      None if np.all(np.isnan(gamma)) else gamma,
                      None if np.all(np.isnan(U)) else U)
    return traj, res.final_states[0]


@dataclass
class EnsembleSummary:
    checkpoints: list[int]
    per_run: dict[str, np.ndarray]
    times: list[float]
    time_avg: np.ndarray
    runs: int
    z: float = Z_975
    meta: dict = field(default_factory=dict)
    final_states: list = field(default_factory=list)
    records: dict[str, np.ndarray] | None = None
    record_k: np.ndarray | None = None

    def mean(self, metric: str) -> np.ndarray:
        return np.mean(self._values(metric), axis=1)

    def ci_half_width(self, metric: str) -> np.ndarray:
        v = self._values(metric)
        return self.z * np.std(v, axis=1, ddof=1) / math.sqrt(v.shape[1])

    def _values(self, metric):
        return self.time_avg if metric == "time_avg_aoi" else self.per_run[metric]

    def at(self, metric: str, k: int) -> np.ndarray:
        """Per-run values of ``metric`` at checkpoint ``k``."""
        return self.per_run[metric][self.checkpoints.index(k)]

    def rows(self):
        """(checkpoint, metric, mean, ci_half_width) rows; time rows carry t."""
        out = []
        for name in ("aoi_ratio", "gamma", "U", "interval", "theta"):
            v = self.per_run[name]
            if np.all(np.isnan(v)):
                continue
            mean, ci = self.mean(name), self.ci_half_width(name)
            out += [(k, name, mean[i], ci[i]) for i, k in enumerate(self.checkpoints)]
        if self.times:
            ta = self.time_avg
            for i, t in enumerate(self.times):
                vals = ta[i][~np.isnan(ta[i])]
                if vals.size >= 2:
                    out.append((t, "time_avg_aoi", float(vals.mean()),
                                self.z * float(vals.std(ddof=1)) / math.sqrt(vals.size)))
        return out


def _batch_worker(args):
    model, policy, K, seeds, kw = args
    return simulate_batch(model, policy, K, seeds, **kw)


def ensemble(config: RunConfig, runs: int, checkpoints: Sequence[int] | None = None,
             times: Sequence[float] | None = None, workers: int = 1,
             batch_size: int | None = None, record_every: int | None = None) -> EnsembleSummary:
    """Independent runs seeded (config.seed, i) for i < runs, aggregated at checkpoints.

    Results do not depend on ``workers`` or ``batch_size``.
    """
    if runs < 2:
        raise ValueError("an ensemble needs at least 2 runs")
    if checkpoints is None:
        checkpoints = default_checkpoints(config.K)
    try:
        ref = oracle.solve_constrained(config.model, config.f_max)
    except oracle.OracleError:
        ref = None
    if times is None:
        # S_{K+1} >= sum of delays, so a grid up to half of K * mean delay is
        # reached by essentially every run
        mean = config.model.moments().mean
        times = [k * mean * 0.5 for k in checkpoints]
    seeds = [(config.seed, i) for i in range(runs)]
    batch_size = batch_size or runs
    chunks = [seeds[i:i + batch_size] for i in range(0, runs, batch_size)]
    kw = dict(inv_f_max=config.inv_f_max, bounds_mode=config.bounds_mode,
              warmup_n=config.warmup_n, checkpoints=checkpoints, times=times,
              aoi_ref=None if ref is None else ref.aoi_star, record_every=record_every)
    jobs = [(config.model, config.policy, config.K, c, kw) for c in chunks]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_batch_worker, jobs))
    else:
        parts = [_batch_worker(j) for j in jobs]
    first = parts[0]
    per_run = {n: np.concatenate([p.per_run[n] for p in parts], axis=1) for n in first.per_run}
    time_avg = np.concatenate([p.time_avg for p in parts], axis=1)
    finals = [s for p in parts for s in p.final_states]
    meta = {"config": config.to_dict(), "runs": runs, "ci": "normal approximation, z=1.96",
            "oracle": None if ref is None else ref.to_dict()}
    records = None
    if record_every is not None:
        records = {n: np.concatenate([p.records[n] for p in parts], axis=1) for n in first.records}
    return EnsembleSummary(first.checkpoints, per_run, first.times, time_avg, runs,
                           meta=meta, final_states=finals, records=records,
                           record_k=first.record_k)
