"""Cycle accounting and trajectory metrics.

A trajectory is stored as the per-cycle delays and waits; everything else
(lengths, rewards, areas, timestamps) is derived.  Timing convention: the
first sample goes out at S_1 = 0 and a virtual packet generated and
delivered at t = 0 plays the role of cycle 0, so A(0) = 0 and L_0 = 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class CycleRecord:
    k: int
    D: float
    W: float
    L: float
    Q: float
    X: float
    S: float
    R: float


def cycle_area(prev_length: float, delay: float, wait: float) -> float:
    """AoI area accumulated between two consecutive sampling instants.

    The age starts the cycle at ``prev_length`` above zero and keeps growing
    until the new packet lands after ``delay``; it then restarts from
    ``delay`` and grows over the remaining ``wait``.  Parallelogram plus
    triangle.
    """
    length = delay + wait
    return prev_length * delay + 0.5 * length * length


class Trajectory:
    """Ordered cycles 1..K of one sample path.

    ``gamma`` and ``U`` hold the online sampler's threshold estimate and
    frequency debt *used* in each cycle (i.e. before that cycle's update).
    """

    def __init__(self, delays: Sequence[float], waits: Sequence[float],
                 gamma: Sequence[float] | None = None, U: Sequence[float] | None = None):
        self.D = np.asarray(delays, dtype=float)
        self.W = np.asarray(waits, dtype=float)
        if self.D.shape != self.W.shape or self.D.ndim != 1:
            raise ValueError("delays and waits must be 1-d arrays of equal length")
        if np.any(self.D < 0) or np.any(self.W < 0):
            raise ValueError("delays and waits must be nonnegative")
        self.gamma = None if gamma is None else np.asarray(gamma, dtype=float)
        self.U = None if U is None else np.asarray(U, dtype=float)
        self.L = self.D + self.W
        self.Q = 0.5 * self.L * self.L
        prev = np.concatenate([[0.0], self.L[:-1]])
        self.X = prev * self.D + self.Q
        # S[k-1] is S_k; S has K+1 entries so S[K] is S_{K+1}
        self.S = np.concatenate([[0.0], np.cumsum(self.L)])
        self.R = self.S[:-1] + self.D

    def __len__(self) -> int:
        return int(self.D.size)

    @property
    def K(self) -> int:
        return len(self)

    def cycle(self, k: int) -> CycleRecord:
        i = k - 1
        if not 0 <= i < len(self):
            raise IndexError(f"cycle {k} outside 1..{len(self)}")
        return CycleRecord(k, float(self.D[i]), float(self.W[i]), float(self.L[i]),
                           float(self.Q[i]), float(self.X[i]), float(self.S[i]),
                           float(self.R[i]))

    def __iter__(self) -> Iterator[CycleRecord]:
        for k in range(1, len(self) + 1):
            yield self.cycle(k)

    @property
    def horizon(self) -> float:
        """S_{K+1}, the end of the last cycle."""
        return float(self.S[-1])

    def total_area(self) -> float:
        return math.fsum(self.X)

    def total_length(self) -> float:
        return math.fsum(self.L)

    def cumulative_ratio(self) -> np.ndarray:
        return np.cumsum(self.X) / np.cumsum(self.L)

    def write_csv(self, path: str | Path, every: int = 1) -> None:
        write_trajectory_csv(self, path, every)


TRAJECTORY_COLUMNS = ["k", "D", "W", "L", "Q", "X", "S", "R", "gamma", "U", "cum_ratio"]


def write_trajectory_csv(traj: Trajectory, path: str | Path, every: int = 1) -> None:
    """Thinned export: every ``every``-th cycle plus the last one."""
    K = len(traj)
    idx = list(range(every - 1, K, every))
    if K and (not idx or idx[-1] != K - 1):
        idx.append(K - 1)
    ratio = traj.cumulative_ratio()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for i in idx:
            g = "" if traj.gamma is None else repr(float(traj.gamma[i]))
            u = "" if traj.U is None else repr(float(traj.U[i]))
            w.writerow([i + 1] + [repr(float(a[i])) for a in
                                  (traj.D, traj.W, traj.L, traj.Q, traj.X, traj.S, traj.R)]
                       + [g, u, repr(float(ratio[i]))])


def aoi_ratio(traj: Trajectory) -> float:
    """Cumulative AoI over elapsed time after the last cycle."""
    if len(traj) == 0:
        raise ValueError("no cycles")
    total = traj.total_length()
    if total <= 0:
        raise ValueError("trajectory has zero elapsed time")
    return traj.total_area() / total


def _area_up_to(traj: Trajectory, t: float) -> float:
    """Exact integral of A(s) over [0, t] for 0 <= t <= S_{K+1}."""
    S = traj.S
    # cycle index i (0-based) with S[i] <= t < S[i+1]
    i = int(np.searchsorted(S, t, side="right")) - 1
    if i >= len(traj):
        return traj.total_area()
    done = math.fsum(traj.X[:i])
    s_start = S[i]
    s_prev = S[i - 1] if i > 0 else 0.0
    r = traj.R[i]
    # before reception the age is measured from the previous sample
    t1 = min(t, r)
    part = 0.5 * ((t1 - s_prev) ** 2 - (s_start - s_prev) ** 2)
    if t > r:
        part += 0.5 * ((t - s_start) ** 2 - (r - s_start) ** 2)
    return done + part


def time_average_aoi(traj: Trajectory, t: float) -> float:
    """(1/t) * integral of the reconstructed age over [0, t]."""
    if len(traj) == 0:
        raise ValueError("no cycles")
    if not t > 0:
        raise ValueError(f"time must be > 0, got {t}")
    if t > traj.horizon * (1 + 1e-12):
        raise ValueError(f"time {t} is beyond the trajectory horizon {traj.horizon}")
    return _area_up_to(traj, min(t, traj.horizon)) / t


def age_at(traj: Trajectory, t: float) -> float:
    """A(t) = t - S_{i(t)} with the virtual packet received at time 0."""
    received = np.searchsorted(traj.R, t, side="right")
    if received == 0:
        return float(t)
    return float(t - traj.S[received - 1])


def sample_path(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the sawtooth A(t) over [0, S_{K+1}].

    Returns (times, ages) where consecutive points are joined linearly,
    and a repeated time marks a downward jump at a reception instant.
    """
    K = len(traj)
    times = np.empty(2 * K + 1)
    ages = np.empty(2 * K + 1)
    times[0], ages[0] = 0.0, 0.0
    prev_s = 0.0
    for i in range(K):
        r = traj.R[i]
        times[2 * i + 1] = r
        ages[2 * i + 1] = r - prev_s
        times[2 * i + 2] = r
        ages[2 * i + 2] = traj.D[i]
        prev_s = traj.S[i]
    times = np.append(times, traj.horizon)
    ages = np.append(ages, traj.horizon - traj.S[K - 1] if K else 0.0)
    return times, ages


def path_integral(traj: Trajectory) -> float:
    """Integral of the sawtooth by trapezoids between breakpoints.

    Deliberately independent of the per-cycle area formula; used to audit it.
    """
    t, a = sample_path(traj)
    dt = np.diff(t)
    return math.fsum(0.5 * dt * (a[1:] + a[:-1]))


def theta_diagnostic(traj: Trajectory, gamma_star: float, mean_delay: float) -> float:
    """(1/K) sum X_k - (gamma* + mean delay) (1/K) sum L_k.

    Tends to zero exactly when the path's AoI ratio tends to the optimum.
    """
    K = len(traj)
    if K == 0:
        raise ValueError("no cycles")
    return (traj.total_area() - (gamma_star + mean_delay) * traj.total_length()) / K
