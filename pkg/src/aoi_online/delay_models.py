"""Delay distributions for the status-update channel.

Every model exposes the same small surface: ``sample``, ``cdf``, ``moments``,
``quantile`` and ``threshold_integrals``.  The last one returns the pair

    E[max{beta, D}]  and  E[1/2 max{beta, D}^2]

which is all the threshold-policy solvers ever need from a distribution.
Models are immutable once built, so they can be shared freely between runs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Any, Iterable

import numpy as np
from scipy import integrate

# Mass left outside the integration range for unbounded models.
TAIL_EPS = 1e-12
DEFAULT_TRUNCATION_QUANTILE = 0.9999
QUAD_EPSREL = 1e-12

_STD_NORMAL = NormalDist()


class ModelError(ValueError):
    """Invalid delay-model parameters or description."""


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    second_moment: float
    upper_support: float = math.inf


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


class DelayModel:
    """Base class. Subclasses fill in the distribution-specific pieces."""

    kind: str = ""

    def sample(self, rng: np.random.Generator, size: int | None = None):
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def moments(self) -> MomentSummary:
        raise NotImplementedError

    def threshold_integrals(self, beta: float) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def upper_support(self) -> float:
        return math.inf

    @property
    def mean(self) -> float:
        return self.moments().mean

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta >= 0.0:
        raise ModelError(f"threshold must be >= 0, got {beta}")
    return beta


@dataclass(frozen=True)
class Deterministic(DelayModel):
    d: float
    kind = "deterministic"

    def __post_init__(self):
        if not self.d > 0:
            raise ModelError(f"deterministic delay must be > 0, got {self.d}")

    def sample(self, rng, size=None):
        if size is None:
            return float(self.d)
        return np.full(size, float(self.d))

    def cdf(self, x):
        return 1.0 if x >= self.d else 0.0

    def quantile(self, p):
        return float(self.d)

    @property
    def upper_support(self):
        return float(self.d)

    def moments(self):
        return MomentSummary(self.d, self.d * self.d, self.d)

    def threshold_integrals(self, beta):
        m = max(_check_beta(beta), self.d)
        return m, 0.5 * m * m

    def to_dict(self):
        return {"kind": self.kind, "d": self.d}


@dataclass(frozen=True)
class Uniform(DelayModel):
    a: float
    b: float
    kind = "uniform"

    def __post_init__(self):
        if not (self.a >= 0 and self.b > self.a):
            raise ModelError(f"uniform needs 0 <= a < b, got a={self.a}, b={self.b}")

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.a + (self.b - self.a) * u

    def cdf(self, x):
        return min(1.0, max(0.0, (x - self.a) / (self.b - self.a)))

    def quantile(self, p):
        return self.a + (self.b - self.a) * p

    @property
    def upper_support(self):
        return float(self.b)

    def moments(self):
        a, b = self.a, self.b
        return MomentSummary((a + b) / 2, (a * a + a * b + b * b) / 3, b)

    def threshold_integrals(self, beta):
        beta = _check_beta(beta)
        a, b = self.a, self.b
        if beta <= a:
            m = self.moments()
            return m.mean, 0.5 * m.second_moment
        if beta >= b:
            return beta, 0.5 * beta * beta
        w = b - a
        p = (beta - a) / w
        e_max = beta * p + (b * b - beta * beta) / (2 * w)
        e_sq = beta * beta * p + (b**3 - beta**3) / (3 * w)
        return e_max, 0.5 * e_sq

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class LogNormal(DelayModel):
    """Log-normal delay, optionally truncated to [0, truncation].

    Truncation is by rejection: draws above the cap are redrawn, so the
    truncated law is the conditional law given D <= cap.
    """

    mu: float
    sigma: float
    truncation: float | None = None
    kind = "lognormal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError(f"lognormal sigma must be > 0, got {self.sigma}")
        if self.truncation is not None and not self.truncation > 0:
            raise ModelError(f"truncation must be > 0, got {self.truncation}")

    @classmethod
    def truncated(cls, mu: float, sigma: float,
                  quantile: float = DEFAULT_TRUNCATION_QUANTILE) -> "LogNormal":
        cap = math.exp(mu + sigma * _STD_NORMAL.inv_cdf(quantile))
        return cls(mu, sigma, cap)

    @property
    def _mass(self) -> float:
        if self.truncation is None:
            return 1.0
        return _phi((math.log(self.truncation) - self.mu) / self.sigma)

    @property
    def upper_support(self):
        return math.inf if self.truncation is None else float(self.truncation)

    def sample(self, rng, size=None):
        if size is None:
            return float(self.sample(rng, 1)[0])
        x = np.exp(self.mu + self.sigma * rng.standard_normal(size))
        if self.truncation is not None:
            bad = x > self.truncation
            while bad.any():
                n = int(bad.sum())
                x[bad] = np.exp(self.mu + self.sigma * rng.standard_normal(n))
                bad = x > self.truncation
        return x

    def cdf(self, x):
        if x <= 0:
            return 0.0
        if self.truncation is not None and x >= self.truncation:
            return 1.0
        return _phi((math.log(x) - self.mu) / self.sigma) / self._mass

    def quantile(self, p):
        if p <= 0:
            return 0.0
        if p >= 1:
            return self.upper_support
        return math.exp(self.mu + self.sigma * _STD_NORMAL.inv_cdf(p * self._mass))

    def integration_cap(self) -> float:
        if self.truncation is not None:
            return float(self.truncation)
        return self.quantile(1.0 - TAIL_EPS)

    def _partial_moment(self, lo: float, n: int) -> float:
        """int_lo^cap x^n p(x) dx for the untruncated density, in log space."""
        cap = self.truncation
        y_hi = math.inf if cap is None else math.log(cap)
        y_lo = -math.inf if lo <= 0 else math.log(lo)
        if y_lo >= y_hi:
            return 0.0
        mu, s = self.mu, self.sigma
        # exp(n*y) * N(y; mu, s^2) is a Gaussian bump centred at mu + n s^2
        scale = math.exp(n * mu + 0.5 * n * n * s * s)
        peak = mu + n * s * s

        def f(y):
            z = (y - peak) / s
            return math.exp(-0.5 * z * z) / (s * math.sqrt(2 * math.pi))

        total = 0.0
        pieces = [y_lo, min(max(peak, y_lo), y_hi), y_hi]
        for a, b in zip(pieces[:-1], pieces[1:]):
            if b > a:
                val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_EPSREL,
                                        limit=200)
                total += val
        return scale * total

    def moments(self):
        if self.truncation is None:
            mean = math.exp(self.mu + 0.5 * self.sigma**2)
            second = math.exp(2 * self.mu + 2 * self.sigma**2)
        else:
            z = self._mass
            mean = self._partial_moment(0.0, 1) / z
            second = self._partial_moment(0.0, 2) / z
        return MomentSummary(mean, second, self.upper_support)

    def threshold_integrals(self, beta):
        beta = _check_beta(beta)
        if beta >= self.upper_support:
            return beta, 0.5 * beta * beta
        z = self._mass
        p = self.cdf(beta)
        e_max = beta * p + self._partial_moment(beta, 1) / z
        e_sq = beta * beta * p + self._partial_moment(beta, 2) / z
        return e_max, 0.5 * e_sq

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "sigma": self.sigma,
                "truncation": self.truncation}


@dataclass(frozen=True)
class LeCamPerturbed(DelayModel):
    """Uniform[0, 1] with mass moved from [0, delta/2] to [1 - delta/2, 1].

    Density is 1 - c/sqrt(k) on the low strip, 1 + c/sqrt(k) on the high
    strip and 1 in between.
    """

    delta: float
    c: float
    k_param: int
    kind = "lecam"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ModelError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.c <= 0.5:
            raise ModelError(f"c must lie in (0, 1/2], got {self.c}")
        if int(self.k_param) != self.k_param or self.k_param < 1:
            raise ModelError(f"k_param must be a positive integer, got {self.k_param}")

    @property
    def segments(self) -> list[tuple[float, float, float]]:
        h = self.c / math.sqrt(self.k_param)
        half = self.delta / 2
        return [(0.0, half, 1 - h), (half, 1 - half, 1.0), (1 - half, 1.0, 1 + h)]

    @property
    def upper_support(self):
        return 1.0

    def cdf(self, x):
        total = 0.0
        for lo, hi, h in self.segments:
            if x > lo:
                total += h * (min(x, hi) - lo)
        return min(total, 1.0)

    def quantile(self, p):
        acc = 0.0
        for lo, hi, h in self.segments:
            mass = h * (hi - lo)
            if p <= acc + mass:
                return lo + (p - acc) / h
            acc += mass
        return 1.0

    def sample(self, rng, size=None):
        u = rng.random(size)
        (_, h1, d0), (_, h2, _), (_, _, d2) = self.segments
        m0 = d0 * h1
        m1 = m0 + (h2 - h1)
        x = np.where(u <= m0, u / d0,
                     np.where(u <= m1, h1 + (u - m0), h2 + (u - m1) / d2))
        x = np.minimum(x, 1.0)
        return float(x) if size is None else x

    def _tail(self, beta: float, n: int) -> float:
        total = 0.0
        for lo, hi, h in self.segments:
            a = max(lo, beta)
            if hi > a:
                total += h * (hi ** (n + 1) - a ** (n + 1)) / (n + 1)
        return total

    def moments(self):
        return MomentSummary(self._tail(0.0, 1), self._tail(0.0, 2), 1.0)

    def threshold_integrals(self, beta):
        beta = _check_beta(beta)
        if beta >= 1.0:
            return beta, 0.5 * beta * beta
        p = self.cdf(beta)
        return beta * p + self._tail(beta, 1), 0.5 * (beta * beta * p + self._tail(beta, 2))

    def to_dict(self):
        return {"kind": self.kind, "delta": self.delta, "c": self.c,
                "k_param": self.k_param}


class Empirical(DelayModel):
    """Discrete uniform law on a set of observed delays."""

    kind = "empirical"

    def __init__(self, samples: Iterable[float]):
        arr = np.sort(np.asarray(list(samples), dtype=float))
        if arr.size == 0:
            raise ModelError("empirical model needs at least one sample")
        if not np.all(np.isfinite(arr)) or arr[0] < 0:
            raise ModelError("empirical samples must be finite and >= 0")
        if arr[-1] <= 0:
            raise ModelError("empirical samples must not all be zero")
        self._set_arrays(arr)

    @classmethod
    def from_sorted(cls, arr: np.ndarray) -> "Empirical":
        """Fast path for callers that already hold a sorted, validated array."""
        obj = object.__new__(cls)
        obj._set_arrays(np.asarray(arr, dtype=float))
        return obj

    def _set_arrays(self, arr):
        self._sorted = arr
        self._sorted.setflags(write=False)
        # suffix sums: _csum[i] = sum(arr[i:])
        self._csum = np.concatenate([np.cumsum(arr[::-1])[::-1], [0.0]])
        self._csum2 = np.concatenate([np.cumsum((arr * arr)[::-1])[::-1], [0.0]])

    @property
    def samples(self) -> np.ndarray:
        return self._sorted

    def __repr__(self):
        return f"Empirical(n={self.n})"

    @property
    def n(self) -> int:
        return int(self._sorted.size)

    @property
    def upper_support(self):
        return float(self._sorted[-1])

    def sample(self, rng, size=None):
        idx = rng.integers(0, self.n, size)
        out = self._sorted[idx]
        return float(out) if size is None else out

    def cdf(self, x):
        return float(np.searchsorted(self._sorted, x, side="right")) / self.n

    def quantile(self, p):
        i = min(self.n - 1, max(0, math.ceil(p * self.n) - 1))
        return float(self._sorted[i])

    def moments(self):
        return MomentSummary(math.fsum(self._sorted) / self.n,
                             math.fsum(self._sorted * self._sorted) / self.n,
                             self.upper_support)

    def threshold_integrals(self, beta):
        beta = _check_beta(beta)
        i = int(np.searchsorted(self._sorted, beta, side="right"))
        n = self.n
        e_max = (beta * i + self._csum[i]) / n
        e_sq = (beta * beta * i + self._csum2[i]) / n
        return float(e_max), float(0.5 * e_sq)

    def to_dict(self):
        return {"kind": self.kind, "samples": list(self._sorted.tolist())}

    def __eq__(self, other):
        return isinstance(other, Empirical) and np.array_equal(self._sorted, other._sorted)

    def __hash__(self):
        return hash(self._sorted.tobytes())


def sample(model: DelayModel, rng: np.random.Generator) -> float:
    return model.sample(rng)


def moments(model: DelayModel) -> MomentSummary:
    return model.moments()


def threshold_integrals(model: DelayModel, beta: float) -> tuple[float, float]:
    return model.threshold_integrals(beta)


class DelayStream:
    """Per-run delay source with block buffering.

    Delays are always generated ``block`` at a time from the run's own
    generator, so the produced sequence does not depend on how callers
    slice their requests.
    """

    def __init__(self, model: DelayModel, rng: np.random.Generator, block: int = 4096):
        self.model = model
        self.rng = rng
        self.block = block
        self._buf = np.empty(0)
        self._pos = 0

    def _refill(self):
        self._buf = np.asarray(self.model.sample(self.rng, self.block), dtype=float)
        self._pos = 0

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= self._buf.size:
                self._refill()
            m = min(n - filled, self._buf.size - self._pos)
            out[filled:filled + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            filled += m
        return out

    def next(self) -> float:
        return float(self.take(1)[0])


# -- serialization ----------------------------------------------------------

def model_from_dict(obj: dict[str, Any]) -> DelayModel:
    try:
        kind = obj["kind"]
        if kind == "uniform":
            return Uniform(float(obj["a"]), float(obj["b"]))
        if kind == "deterministic":
            return Deterministic(float(obj["d"]))
        if kind == "lognormal":
            trunc = obj.get("truncation")
            mu, sigma = float(obj["mu"]), float(obj["sigma"])
            if trunc is True or trunc == "default":
                return LogNormal.truncated(mu, sigma)
            return LogNormal(mu, sigma, None if trunc in (None, False) else float(trunc))
        if kind == "lecam":
            return LeCamPerturbed(float(obj["delta"]), float(obj["c"]), int(obj["k_param"]))
        if kind == "empirical":
            if "csv" in obj:
                return load_empirical_csv(obj["csv"])
            return Empirical(obj["samples"])
    except KeyError as exc:
        raise ModelError(f"model description missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"bad model description {obj!r}: {exc}") from None
    raise ModelError(f"unknown model kind {obj.get('kind')!r}")


def load_empirical_csv(path: str | Path) -> Empirical:
    """One-column CSV of delays; a non-numeric first row is taken as header."""
    values = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if i == 0:
                    continue
                raise ModelError(f"{path}: non-numeric delay {row[0]!r} on line {i + 1}")
    return Empirical(values)


def parse_model_spec(text: str) -> DelayModel:
    """Parse ``kind:p1,p2,...`` shorthand, inline JSON, or a JSON file path.

    >>> parse_model_spec("uniform:0,1")
    Uniform(a=0.0, b=1.0)
    """
    text = text.strip()
    if text.startswith("{"):
        return model_from_dict(json.loads(text))
    if text.endswith(".json") and Path(text).exists():
        return model_from_dict(json.loads(Path(text).read_text()))
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    if kind == "empirical":
        return load_empirical_csv(rest)
    try:
        args = [float(x) for x in rest.split(",")] if rest else []
    except ValueError:
        raise ModelError(f"cannot parse model parameters in {text!r}") from None
    if kind == "uniform" and len(args) == 2:
        return Uniform(*args)
    if kind == "deterministic" and len(args) == 1:
        return Deterministic(args[0])
    if kind == "lognormal" and len(args) in (2, 3):
        return LogNormal(*args)
    if kind in ("lognormal-trunc", "lognormal_trunc") and len(args) == 2:
        return LogNormal.truncated(*args)
    if kind == "lecam" and len(args) == 3:
        return LeCamPerturbed(args[0], args[1], int(args[2]))
    raise ModelError(f"cannot parse model spec {text!r}")
