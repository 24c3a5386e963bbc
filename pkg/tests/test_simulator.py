import math

import numpy as np
import pytest

from aoi_online import aoi_core, oracle
from aoi_online.delay_models import Deterministic, LogNormal, Uniform
from aoi_online.online_sampler import ConstantWait, Online, OracleThreshold, PlugIn, ZeroWait
from aoi_online.simulator import (RunConfig, default_checkpoints, ensemble, estimate_moment_bounds,
                                  run, simulate_batch)

U01 = Uniform(0.0, 1.0)


class TestRun:
    def test_hand_example(self):
        traj, _ = run(RunConfig(Deterministic(1.0), ZeroWait(), 3))
        assert list(traj.S[:3]) == [0, 1, 2]
        assert list(traj.R) == [1, 2, 3]
        assert traj.total_area() == 3.5

    @pytest.mark.parametrize("model", [U01, LogNormal(1.0, 1.3)])
    def test_single_cycle(self, model):
        traj, _ = run(RunConfig(model, ZeroWait(), 1, seed=4))
        assert traj.total_area() == 0.5 * traj.D[0] ** 2

    def test_oracle_threshold_ratio(self):
        traj, _ = run(RunConfig(U01, OracleThreshold(), 100_000, seed=2))
        assert aoi_core.aoi_ratio(traj) == pytest.approx(0.822185, rel=0.01)

    def test_invariants(self):
        traj, _ = run(RunConfig(LogNormal(1.0, 1.5), Online(), 2000, inv_f_max=80.0, seed=3))
        assert np.all(traj.S[:-1] < traj.R) and np.all(traj.R <= traj.S[1:])
        assert np.allclose(traj.S[1:], traj.R + traj.W)
        assert traj.total_length() == pytest.approx(traj.horizon)

    def test_deterministic(self):
        cfg = RunConfig(LogNormal(1.0, 1.3), Online(), 3000, seed=9, bounds_mode="estimated")
        a, sa = run(cfg)
        b, sb = run(cfg)
        assert np.array_equal(a.W, b.W) and np.array_equal(a.gamma, b.gamma) and sa == sb

    @pytest.mark.parametrize("policy", [Online(), PlugIn(refit_every=7), OracleThreshold(), ConstantWait()])
    def test_causality_prefix_replay(self, policy):
        """Waits of the first k cycles do not depend on how long the run goes on."""
        model = LogNormal(1.0, 1.5)
        long, _ = run(RunConfig(model, policy, 600, inv_f_max=50.0, seed=21))
        for k in (1, 17, 300):
            short, _ = run(RunConfig(model, policy, k, inv_f_max=50.0, seed=21))
            assert np.array_equal(short.D, long.D[:k])
            assert np.array_equal(short.W, long.W[:k])

    @pytest.mark.parametrize("kw", [dict(K=0), dict(K=2.5), dict(inv_f_max=-1.0), dict(bounds_mode="guess"),
                                    dict(bounds_mode="estimated", warmup_n=0), dict(record_every=0)])
    def test_config_validation(self, kw):
        base = dict(model=U01, policy=ZeroWait(), K=10)
        base.update(kw)
        with pytest.raises(ValueError):
            RunConfig(**base)


class TestMomentBounds:
    def test_deterministic(self):
        b = estimate_moment_bounds(Deterministic(2.0), 100, np.random.default_rng(0))
        assert b == pytest.approx((0.2, 20, 0.4, 40))

    def test_uniform_large_n(self):
        b = estimate_moment_bounds(U01, 1_000_000, np.random.default_rng(0))
        assert b == pytest.approx((0.05, 5, 1 / 30, 10 / 3), rel=0.01)

    def test_single_sample(self):
        rng = np.random.default_rng(5)
        d = U01.sample(np.random.default_rng(5), 4096)[0]
        b = estimate_moment_bounds(U01, 1, rng)
        assert b == pytest.approx((d / 10, 10 * d, d * d / 10, 10 * d * d))

    def test_warmup_consumed_from_stream(self):
        # estimated mode draws warmup delays first, so cycle delays shift by warmup_n
        ex, _ = run(RunConfig(U01, ZeroWait(), 50, seed=1))
        est, _ = run(RunConfig(U01, ZeroWait(), 50, seed=1, bounds_mode="estimated", warmup_n=10))
        assert np.array_equal(est.D[:40], ex.D[10:])


class TestEnsemble:
    def test_member_equals_single_run(self):
        cfg = RunConfig(LogNormal(1.0, 1.5), Online(V=1.0), 2000, inv_f_max=80.0, seed=13)
        s = ensemble(cfg, 4, checkpoints=[100, 2000], record_every=1)
        for i in range(4):
            traj, final = run(cfg, index=i)
            assert s.at("aoi_ratio", 2000)[i] == pytest.approx(aoi_core.aoi_ratio(traj), rel=1e-12)
            assert np.array_equal(s.records["W"][:, i], traj.W)
            assert s.final_states[i] == final

    def test_workers_and_batches_equivalent(self):
        cfg = RunConfig(U01, Online(), 3000, seed=8)
        base = ensemble(cfg, 6)
        for kw in (dict(batch_size=1), dict(batch_size=4), dict(batch_size=2, workers=3)):
            other = ensemble(cfg, 6, **kw)
            for name in base.per_run:
                assert np.array_equal(base.per_run[name], other.per_run[name], equal_nan=True)
            assert np.array_equal(base.time_avg, other.time_avg, equal_nan=True)

    def test_identical_seeds_zero_variance(self):
        res = simulate_batch(U01, Online(), 500, [5, 5], checkpoints=[500])
        assert res.per_run["gamma"][0, 0] == res.per_run["gamma"][0, 1]
        s = ensemble(RunConfig(Deterministic(1.0), ZeroWait(), 100), 3, checkpoints=[100])
        assert s.ci_half_width("aoi_ratio")[0] == 0.0

    def test_ci_formula(self):
        s = ensemble(RunConfig(U01, ZeroWait(), 200, seed=3), 10, checkpoints=[200])
        v = s.at("aoi_ratio", 200)
        assert s.ci_half_width("aoi_ratio")[0] == pytest.approx(1.96 * v.std(ddof=1) / math.sqrt(10))

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            ensemble(RunConfig(U01, ZeroWait(), 10), 1)

    def test_time_average_matches_trajectory(self):
        cfg = RunConfig(U01, Online(), 1000, seed=4)
        times = [1.0, 50.0, 200.0]
        s = ensemble(cfg, 3, checkpoints=[1000], times=times)
        for i in range(3):
            traj, _ = run(cfg, index=i)
            for j, t in enumerate(times):
                assert s.time_avg[j, i] == pytest.approx(aoi_core.time_average_aoi(traj, t), rel=1e-9)

    def test_time_beyond_horizon_is_nan(self):
        s = ensemble(RunConfig(U01, ZeroWait(), 10, seed=0), 2, checkpoints=[10], times=[1e6])
        assert np.all(np.isnan(s.time_avg))
        assert not [r for r in s.rows() if r[1] == "time_avg_aoi"]

    def test_oracle_threshold_within_3_ci(self):
        beta = 0.6
        s = ensemble(RunConfig(U01, OracleThreshold(beta=beta), 20_000, seed=1), 40, checkpoints=[20_000])
        want = oracle.stationary_policy_aoi(U01, beta)
        assert abs(s.mean("aoi_ratio")[0] - want) <= 3 * s.ci_half_width("aoi_ratio")[0]

    def test_rows(self):
        s = ensemble(RunConfig(U01, Online(), 64, seed=0), 3)
        metrics = {r[1] for r in s.rows()}
        assert {"aoi_ratio", "gamma", "U", "interval", "theta", "time_avg_aoi"} <= metrics
        assert s.checkpoints == default_checkpoints(64) == [1, 2, 4, 8, 16, 32, 64]
        assert s.meta["oracle"]["gamma_star"] == pytest.approx(0.3221853546)

    @pytest.mark.slow
    def test_online_uniform_ensemble(self):
        s = ensemble(RunConfig(U01, Online(), 100_000, seed=31), 100, checkpoints=[100_000], times=[])
        assert abs(s.mean("aoi_ratio")[0] - 0.822185) <= 0.01

    @pytest.mark.slow
    def test_frequency_constraint_met(self):
        m = LogNormal(1.0, 1.5)
        inv_f = 10 * m.moments().mean
        s = ensemble(RunConfig(m, Online(V=10.0), 100_000, inv_f_max=inv_f, seed=32), 100,
                     checkpoints=[100_000], times=[])
        assert s.mean("interval")[0] >= 0.98 * inv_f
