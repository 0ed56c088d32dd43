"""Sequential statistical tests used by the checkers.

Samplers are callables ``sampler(rng, size) -> np.ndarray``.  Sequential
tests consume them in batches of growing size; a test's verdict and its
reported sample count depend only on the sample stream, so a fixed seed gives
identical results.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

__all__ = [
    "StatParams",
    "TestCertificate",
    "StatsError",
    "UnboundedSample",
    "HorizonCapExceeded",
    "sprt_bernoulli",
    "sequential_mean_test",
    "alg0",
    "closeness_sample_size",
    "closeness_test",
    "duration_of_simulation",
    "DistributionSampler",
]

Sampler = Callable[[np.random.Generator, int], np.ndarray]

FIRST_BATCH = 64
MAX_BATCH = 1 << 16
CHOW_ROBBINS_MIN = 30
CLOSENESS_C1 = 16.0
CLIP = 1e-9


class StatsError(ValueError):
    pass


class UnboundedSample(StatsError):
    """A sample left the declared range ``[-1, 1]``."""


class HorizonCapExceeded(StatsError):
    def __init__(self, msg: str, certificate: "TestCertificate"):
        super().__init__(msg)
        self.certificate = certificate


@dataclass(frozen=True)
class StatParams:
    alpha: float = 0.05
    gamma: float = 0.05
    delta: float = 0.05
    delta_prime: float = 0.05

    def __post_init__(self):
        for name in ("alpha", "gamma", "delta", "delta_prime"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise StatsError(f"{name} must lie in (0, 1), got {v}")

    def split(self, k: int) -> "StatParams":
        """Per-test budgets for ``k`` tests joined by a union bound."""
        return StatParams(self.alpha / k, self.gamma / k, self.delta, self.delta_prime)


@dataclass
class TestCertificate:
    verdict: str
    samples: int
    alpha: float
    gamma: float
    delta: float
    test: str = "sprt"
    seed: object = None
    stages: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    def ndjson(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, default=str)


def _batches(rng: np.random.Generator, sampler: Sampler, limit: int | None = None):
    size = FIRST_BATCH
    drawn = 0
    while limit is None or drawn < limit:
        if limit is not None:
            size = min(size, limit - drawn)
        x = np.asarray(sampler(rng, size))
        drawn += size
        yield x
        size = min(2 * size, MAX_BATCH)


# --------------------------------------------------------------------------- SPRT


class _Wald:
    """Wald SPRT of ``θ = p0`` against ``θ = p1 > p0`` with thresholds ``lo < 0 < hi``."""

    def __init__(self, p0, p1, err_h1, err_h0):
        # err_h1: P(accept H1 | H0); err_h0: P(accept H0 | H1)
        self.step1 = math.log(p1 / p0)
        self.step0 = math.log((1 - p1) / (1 - p0))
        self.hi = math.log((1 - err_h0) / err_h1)
        self.lo = math.log(err_h0 / (1 - err_h1))
        self.llr = 0.0
        self.n = 0
        self.result: str | None = None

    def feed(self, x: np.ndarray):
        """Consume a batch; returns the number of samples used (all if undecided)."""
        path = self.llr + np.cumsum(np.where(x, self.step1, self.step0))
        hit = np.flatnonzero((path >= self.hi) | (path <= self.lo))
        if hit.size:
            k = int(hit[0])
            self.result = "H1" if path[k] >= self.hi else "H0"
            self.llr = float(path[k])
            self.n += k + 1
            return path[: k + 1]
        self.llr = float(path[-1]) if path.size else self.llr
        self.n += x.size
        return path


def _clip_pair(a, b, notes, label):
    ca, cb = min(max(a, CLIP), 1 - CLIP), min(max(b, CLIP), 1 - CLIP)
    if (ca, cb) != (a, b):
        notes.append(f"{label}: hypotheses ({a:.6g}, {b:.6g}) clipped to ({ca:.6g}, {cb:.6g})")
    return ca, cb


def sprt_bernoulli(sampler: Sampler, c: float, params: StatParams, rng: np.random.Generator, *,
                   seed=None, trace=None, limit: int | None = None) -> tuple[str, TestCertificate]:
    """Yes/No/Unknown decision of ``θ > c`` for a Bernoulli sampler.

    Two Wald tests run on one sample stream.  The upper test (``c`` against
    ``c+δ``) answers Yes when it accepts ``c+δ``; the lower test (``c-δ``
    against ``c``) answers No when it accepts ``c-δ``.  Wrong Yes or No has
    probability at most α, and Unknown at most γ when ``|θ - c| > δ``.
    """
    a, g, d = params.alpha, params.gamma, params.delta
    cert = TestCertificate("Unknown", 0, a, g, d, "sprt", seed)
    # predetermined cases: θ ∈ [0, 1]
    if c >= 1.0:
        cert.verdict = "No"
        cert.notes.append("threshold >= 1: theta > c impossible")
        return "No", cert
    if c < 0.0:
        cert.verdict = "Yes"
        cert.notes.append("threshold < 0: theta > c certain")
        return "Yes", cert
    u0, u1 = _clip_pair(c, c + d, cert.notes, "upper")
    l0, l1 = _clip_pair(c - d, c, cert.notes, "lower")
    upper = _Wald(u0, u1, a, g) if u0 < u1 else None
    lower = _Wald(l0, l1, g, a) if l0 < l1 else None
    if upper is None:
        cert.notes.append("upper test degenerate; Yes unreachable")
    if lower is None:
        cert.notes.append("lower test degenerate; No unreachable")
    used = 0
    for x in _batches(rng, sampler, limit):
        x = x.astype(bool)
        n_up = n_lo = 0
        if upper is not None and upper.result is None:
            path = upper.feed(x)
            n_up = path.size
            if trace is not None:
                _trace_llr(trace, "upper", upper.n - path.size, path)
        if lower is not None and lower.result is None:
            path = lower.feed(x)
            n_lo = path.size
            if trace is not None:
                _trace_llr(trace, "lower", lower.n - path.size, path)
        used += max(n_up, n_lo)
        if (upper is None or upper.result) and (lower is None or lower.result):
            break
    yes = upper is not None and upper.result == "H1"
    no = lower is not None and lower.result == "H0"
    verdict = "Yes" if yes and not no else "No" if no and not yes else "Unknown"
    if yes and no:
        cert.notes.append("both tests decisive in opposite directions")
    cert.verdict = verdict
    cert.samples = used
    cert.stages = {"upper": upper.n if upper else 0, "lower": lower.n if lower else 0}
    return verdict, cert


def _trace_llr(trace, name, start, path):
    for k, v in enumerate(path):
        trace.write(json.dumps({"test": name, "n": start + k + 1, "llr": float(v)}) + "\n")


# --------------------------------------------------------------------------- Chow-Robbins


def sequential_mean_test(sampler: Sampler, c: float, params: StatParams, rng: np.random.Generator, *,
                         seed=None, limit: int | None = None) -> tuple[str, TestCertificate]:
    """Fixed-width sequential confidence interval for the mean of samples in ``[-1, 1]``.

    Stops at the first ``n >= 30`` with ``s_n^2 + 1/n <= n d^2 / z^2`` where
    ``d = δ/2`` and ``z`` is the two-sided normal quantile at level
    ``min(α, γ)``; Yes if ``mean - d > c``, No if ``mean + d < c``.
    """
    a, g, d = params.alpha, params.gamma, params.delta
    cert = TestCertificate("Unknown", 0, a, g, d, "chow-robbins", seed)
    half = d / 2
    z = float(ndtri(1 - min(a, g) / 2))
    n = 0
    s1 = 0.0
    s2 = 0.0
    for x in _batches(rng, sampler, limit):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > 1.0):
            raise UnboundedSample("sample outside [-1, 1]; normalise the observable weights")
        idx = n + np.arange(1, x.size + 1)
        c1 = s1 + np.cumsum(x)
        c2 = s2 + np.cumsum(x * x)
        mean = c1 / idx
        var = np.maximum(c2 / idx - mean * mean, 0.0) * idx / np.maximum(idx - 1, 1)
        ok = (idx >= CHOW_ROBBINS_MIN) & (var + 1.0 / idx <= idx * half * half / (z * z))
        hit = np.flatnonzero(ok)
        if hit.size:
            k = int(hit[0])
            n = int(idx[k])
            m = float(mean[k])
            cert.samples = n
            cert.stages = {"mean": m, "variance": float(var[k]), "half_width": half, "z": z}
            verdict = "Yes" if m - half > c else "No" if m + half < c else "Unknown"
            cert.verdict = verdict
            return verdict, cert
        n = int(idx[-1])
        s1, s2 = float(c1[-1]), float(c2[-1])
    cert.samples = n
    cert.notes.append("sample limit reached")
    return "Unknown", cert


def alg0(sampler: Sampler, c: float, params: StatParams, rng: np.random.Generator, *, binary: bool = True,
         **kw) -> tuple[str, TestCertificate]:
    """Dispatch to the SPRT for 0/1 weights and to Chow-Robbins otherwise."""
    if binary:
        return sprt_bernoulli(sampler, c, params, rng, **kw)
    kw.pop("trace", None)
    return sequential_mean_test(sampler, c, params, rng, **kw)


# --------------------------------------------------------------------------- closeness


class DistributionSampler:
    """Sampler for an explicit distribution; also yields multinomial count vectors directly."""

    def __init__(self, p):
        p = np.maximum(np.asarray(p, dtype=float), 0.0)
        self.p = p / p.sum()
        self._cdf = np.cumsum(self.p)
        self._cdf /= self._cdf[-1]

    def __call__(self, rng, size):
        return np.minimum(np.searchsorted(self._cdf, rng.random(size), side="right"), len(self.p) - 1)

    def counts(self, rng, size):
        return rng.multinomial(size, self.p)


def _counts(sampler, rng, m, n):
    if hasattr(sampler, "counts"):
        k = np.asarray(sampler.counts(rng, m))
        if k.size != n:
            raise StatsError(f"support size mismatch: sampler has {k.size}, expected {n}")
        return k
    x = np.asarray(sampler(rng, m), dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= n):
        raise StatsError("sample index outside the declared support")
    return np.bincount(x, minlength=n)


def closeness_sample_size(n: int, alpha: float, delta: float) -> int:
    """``m = ⌈16 n^(2/3) δ^(-8/3) ln(n/α)⌉`` samples per distribution and stage."""
    return int(math.ceil(CLOSENESS_C1 * n ** (2 / 3) * delta ** (-8 / 3) * math.log(max(n / alpha, math.e))))


def closeness_test(sampler_p, sampler_q, n: int, alpha: float, delta: float, rng: np.random.Generator, *,
                   seed=None) -> tuple[str, TestCertificate]:
    """ℓ1 closeness test of two distributions on ``{0, ..., n-1}``.

    A first sample pair identifies heavy elements (empirical frequency at
    least ``δ / (8 n^(1/3))`` in either sample).  A second pair estimates the
    ℓ1 distance on the heavy part, and the ℓ2 distance on the light part from
    collision counts.  Reject if the heavy ℓ1 estimate exceeds ``δ/2`` or the
    light ℓ2² estimate exceeds ``δ²/(8n)``.
    """
    m = closeness_sample_size(n, alpha, delta)
    cert = TestCertificate("Accept", 4 * m, alpha, 0.0, delta, "closeness", seed)
    cutoff = delta / (8 * n ** (1 / 3))
    kp, kq = _counts(sampler_p, rng, m, n), _counts(sampler_q, rng, m, n)
    heavy = (kp / m >= cutoff) | (kq / m >= cutoff)
    lp, lq = _counts(sampler_p, rng, m, n), _counts(sampler_q, rng, m, n)
    heavy_l1 = float(np.abs(lp[heavy] - lq[heavy]).sum() / m)
    light = ~heavy
    a, b = lp[light].astype(float), lq[light].astype(float)
    l2 = float((a * (a - 1)).sum() / (m * (m - 1)) + (b * (b - 1)).sum() / (m * (m - 1)) - 2 * (a * b).sum() / (m * m))
    reject = heavy_l1 > delta / 2 or l2 > delta * delta / (8 * n)
    cert.verdict = "Reject" if reject else "Accept"
    cert.stages = {
        "m": m,
        "heavy": int(heavy.sum()),
        "heavy_l1": heavy_l1,
        "light_l2sq": l2,
        "heavy_threshold": delta / 2,
        "light_threshold": delta * delta / (8 * n),
    }
    return cert.verdict, cert


# --------------------------------------------------------------------------- horizon truncation


def duration_of_simulation(sampler_at: Callable[[float], object], invariant_sampler, n: int, alpha: float,
                           delta_prime: float, rng: np.random.Generator, *, horizon_cap: float = 2.0 ** 20,
                           seed=None) -> tuple[float, TestCertificate]:
    """Doubling search for a time after which the chain is δ'/3-close to ``Y*``.

    Tests ``t = 1, 2, 4, ...``; at iteration ``i`` the closeness test runs with
    budget ``α_i / 2`` where ``α_0 = α`` and ``α_{i+1} = α_i / 2``.  Returns
    ``t + 1`` for the first accepted ``t``.
    """
    t = 1.0
    a_i = alpha
    tested = []
    samples = 0
    cert = TestCertificate("Accept", 0, alpha, 0.0, delta_prime, "duration", seed)
    while True:
        if t > horizon_cap:
            cert.verdict = "Reject"
            cert.samples = samples
            cert.stages = {"tested": tested}
            raise HorizonCapExceeded(f"no horizon found up to cap {horizon_cap:g}", cert)
        verdict, sub = closeness_test(sampler_at(t), invariant_sampler, n, a_i / 2, delta_prime / 3, rng)
        samples += sub.samples
        tested.append({"t": t, "alpha": a_i / 2, "verdict": verdict, "samples": sub.samples})
        if verdict == "Accept":
            break
        t *= 2
        a_i /= 2
    cert.samples = samples
    cert.stages = {"tested": tested, "achieved_alpha": sum(x["alpha"] for x in tested)}
    return t + 1, cert
