"""Finite Markov chains: representation, transient analysis and sampling.

Explicit chains hold a sparse generator (CT) or stochastic matrix (DT) with the
convention ``M[i, j]`` = rate or probability of ``i -> j``; distributions are
row vectors, ``p(t) = p0 exp(tA)``.  Implicit chains only expose a state codec
and an outgoing-transition enumerator, for state spaces too large to store.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from . import kernels

log = logging.getLogger(__name__)

__all__ = [
    "MarkovChain",
    "ImplicitChain",
    "InvariantEstimate",
    "ChainError",
    "RateOverflow",
    "CapExceeded",
    "NonConvergence",
    "ssa_sample",
    "ssa_samples",
    "dtmc_sample",
    "dtmc_samples",
    "exact_samples",
    "transient_distribution",
    "transient_path",
    "estimate_invariant",
    "spawn_rngs",
]

DEFAULT_STATE_CAP = 100_000


class ChainError(ValueError):
    pass


class RateOverflow(ChainError):
    """An implicit chain state has total exit rate above its declared bound."""


class CapExceeded(ChainError):
    pass


class NonConvergence(ChainError):
    pass


@dataclass
class ImplicitChain:
    """Chain given by an enumerator over integer-tuple states.

    ``transitions(state)`` returns ``[(target_tuple, rate_or_prob), ...]``;
    ``sample_initial(rng)`` draws an initial tuple.  ``radices`` define the
    codec that packs a tuple into one Python integer (mixed radix, first
    coordinate most significant), so the state count may exceed 2**64.
    """

    radices: tuple[int, ...]
    transitions: Callable[[tuple], list]
    sample_initial: Callable[[np.random.Generator], tuple]
    lambda_max: float | None = None
    offsets: tuple[int, ...] | None = None

    @property
    def state_count(self) -> int:
        n = 1
        for r in self.radices:
            n *= int(r)
        return n

    def encode(self, state: Sequence[int]) -> int:
        offs = self.offsets or (0,) * len(self.radices)
        key = 0
        for s, r, o in zip(state, self.radices, offs):
            v = int(s) - o
            if not 0 <= v < r:
                raise ChainError(f"coordinate {s} outside codec range")
            key = key * int(r) + v
        return key

    def decode(self, key: int) -> tuple[int, ...]:
        offs = self.offsets or (0,) * len(self.radices)
        out = []
        for r, o in zip(reversed(self.radices), reversed(offs)):
            key, v = divmod(int(key), int(r))
            out.append(v + o)
        return tuple(reversed(out))


@dataclass
class MarkovChain:
    kind: str  # "ct" or "dt"
    matrix: sp.csr_matrix | None = None
    initial: np.ndarray | None = None
    implicit: ImplicitChain | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ct", "dt"):
            raise ChainError(f"unknown chain kind {self.kind!r}")
        if self.matrix is not None:
            self.matrix = sp.csr_matrix(self.matrix, dtype=float)
            self.matrix.sum_duplicates()
            self.matrix.sort_indices()
        if self.initial is not None:
            self.initial = np.asarray(self.initial, dtype=float)

    @property
    def explicit(self) -> bool:
        return self.matrix is not None

    @property
    def state_count(self) -> int:
        if self.matrix is not None:
            return self.matrix.shape[0]
        return self.implicit.state_count

    def check(self, tol: float = 1e-9) -> list[str]:
        """Structural checks of an explicit chain; returns problems found."""
        if self.matrix is None:
            return []
        m = self.matrix
        rows = np.asarray(m.sum(axis=1)).ravel()
        off = m - sp.diags(m.diagonal())
        problems = []
        if off.nnz and off.data.min() < 0:
            problems.append("negative off-diagonal entry")
        target = 0.0 if self.kind == "ct" else 1.0
        if np.max(np.abs(rows - target), initial=0.0) > tol:
            problems.append(f"row sums differ from {target}")
        if self.kind == "dt" and m.nnz and m.data.min() < 0:
            problems.append("negative probability")
        return problems

    def exit_rates(self) -> np.ndarray:
        return -self.matrix.diagonal()

    def off_diagonal(self) -> sp.csr_matrix:
        m = (self.matrix - sp.diags(self.matrix.diagonal())).tocsr()
        m.eliminate_zeros()
        m.sort_indices()
        return m


# --------------------------------------------------------------------------- transient analysis


def _poisson_window(lam: float, tol: float) -> tuple[int, int, np.ndarray]:
    lo = int(poisson.ppf(tol / 4, lam)) if lam > 0 else 0
    hi = int(poisson.isf(tol / 4, lam)) + 1 if lam > 0 else 0
    k = np.arange(lo, hi + 1)
    w = poisson.pmf(k, lam)
    return lo, hi, w / w.sum()


def _uniformized(chain: MarkovChain):
    a = chain.matrix
    q = float(np.max(-a.diagonal(), initial=0.0))
    if q == 0.0:
        return 0.0, None
    q *= 1.02
    pt = (sp.identity(a.shape[0], format="csr") + a / q).T.tocsr()
    return q, pt


def _ct_step(p, q, pt, dt, tol):
    if q == 0.0 or dt == 0.0:
        return p.copy()
    lam = q * dt
    # split very long steps so the Poisson window stays moderate
    if lam > 5e4:
        pieces = int(np.ceil(lam / 5e4))
        for _ in range(pieces):
            p = _ct_step(p, q, pt, dt / pieces, tol / pieces)
        return p
    lo, hi, w = _poisson_window(lam, tol)
    v = p.copy()
    for _ in range(lo):
        v = pt @ v
    out = w[0] * v
    for j in range(1, len(w)):
        v = pt @ v
        out += w[j] * v
    out = np.maximum(out, 0.0)
    return out / out.sum()


def _require_explicit(chain: MarkovChain, cap: int):
    if chain.matrix is None:
        raise CapExceeded("transient analysis needs an explicit chain")
    if chain.state_count > cap:
        raise CapExceeded(f"state count {chain.state_count} exceeds cap {cap}")


def transient_distribution(chain: MarkovChain, t, p0=None, tol: float = 1e-10, cap: int = DEFAULT_STATE_CAP):
    """``p0 exp(tA)`` by uniformization (CT) or ``p0 T^t`` (DT)."""
    return transient_path(chain, [t], p0=p0, tol=tol, cap=cap)[0]


def transient_path(chain: MarkovChain, times, p0=None, tol: float = 1e-10, cap: int = DEFAULT_STATE_CAP):
    """Distributions at each of ``times`` (any order), stepping through them sorted."""
    _require_explicit(chain, cap)
    times = list(times)
    p = np.asarray(chain.initial if p0 is None else p0, dtype=float)
    out = [None] * len(times)
    order = sorted(range(len(times)), key=lambda k: times[k])
    if chain.kind == "ct":
        q, pt = _uniformized(chain)
        now = 0.0
        for k in order:
            t = float(times[k])
            if t < 0:
                raise ChainError("negative time")
            p = _ct_step(p, q, pt, t - now, tol / max(len(times), 1))
            now = t
            out[k] = p.copy()
    else:
        tt = chain.matrix.T.tocsr()
        now = 0
        for k in order:
            t = int(times[k])
            if t < 0 or t != times[k]:
                raise ChainError("DT times must be non-negative integers")
            for _ in range(t - now):
                p = tt @ p
            now = t
            out[k] = p.copy()
    return out


# --------------------------------------------------------------------------- sampling


def spawn_rngs(seed, count: int, *key: int) -> list[np.random.Generator]:
    """Independent Philox streams derived from ``(seed, *key, index)``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(count)]


def _draw_initial(p0: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(p0)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(p0) - 1).astype(np.int64)


def _trace(trace, times, states, seed, start=0):
    if trace is None:
        return
    for r, row in enumerate(np.atleast_2d(states)):
        for t, s in zip(times, row):
            trace.write(json.dumps({"t": float(t), "state": int(s), "replication": start + r, "seed": seed}) + "\n")


def ssa_samples(chain: MarkovChain, times, size: int, rng: np.random.Generator, *, trace=None, seed=None,
                backend: str | None = None) -> np.ndarray:
    """``size`` SSA trajectories observed at sorted ``times``; returns ``(size, len(times))`` states."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ChainError("observation times must be sorted and non-negative")
    if chain.matrix is None:
        out = np.empty((size, len(times)), dtype=object)
        for k in range(size):
            out[k] = _implicit_trajectory(chain, times, rng)
        return out
    off = chain.off_diagonal()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    init = _draw_initial(chain.initial, size, rng)
    states = kernels.get(backend).ssa_csr(
        off.indptr.astype(np.int64), off.indices.astype(np.int64), off.data.astype(float),
        exit_rates, init, times, rng,
    )
    _trace(trace, times, states, seed)
    return states


def ssa_sample(chain: MarkovChain, t: float, rng: np.random.Generator, **kw):
    """One state distributed as ``Y(t)`` via exponential holding times."""
    return ssa_samples(chain, [t], 1, rng, **kw)[0, 0]


def _implicit_trajectory(chain: MarkovChain, times, rng):
    imp = chain.implicit
    state = imp.sample_initial(rng)
    out = []
    now = 0.0
    k = 0
    while k < len(times):
        moves = imp.transitions(state)
        total = float(sum(r for _, r in moves))
        if imp.lambda_max is not None and total > imp.lambda_max * (1 + 1e-12):
            raise RateOverflow(f"state {state} has exit rate {total} > {imp.lambda_max}")
        if total <= 0.0:
            out.extend([state] * (len(times) - k))
            break
        now += -np.log1p(-rng.random()) / total
        while k < len(times) and now > times[k]:
            out.append(state)
            k += 1
        if k == len(times):
            break
        u = rng.random() * total
        for tgt, r in moves:
            u -= r
            if u < 0:
                state = tgt
                break
        else:
            state = moves[-1][0]
    return out


def dtmc_samples(chain: MarkovChain, steps, size: int, rng: np.random.Generator, *, trace=None, seed=None):
    """Trajectories of a DT chain observed at sorted integer ``steps``."""
    steps = [int(s) for s in steps]
    if chain.matrix is None:
        out = np.empty((size, len(steps)), dtype=object)
        imp = chain.implicit
        for r in range(size):
            state = imp.sample_initial(rng)
            now = 0
            for k, s in enumerate(steps):
                while now < s:
                    moves = imp.transitions(state)
                    u = rng.random()
                    for tgt, pr in moves:
                        u -= pr
                        if u < 0:
                            state = tgt
                            break
                    now += 1
                out[r, k] = state
        return out
    m = chain.matrix
    cdf_rows = [np.cumsum(m.data[m.indptr[i]:m.indptr[i + 1]]) for i in range(m.shape[0])]
    state = _draw_initial(chain.initial, size, rng)
    out = np.empty((size, len(steps)), dtype=np.int64)
    now = 0
    for k, s in enumerate(steps):
        while now < s:
            u = rng.random(size)
            nxt = np.empty_like(state)
            for i in np.unique(state):
                sel = state == i
                cdf = cdf_rows[i]
                pos = np.searchsorted(cdf / cdf[-1], u[sel], side="right")
                nxt[sel] = m.indices[m.indptr[i] + np.minimum(pos, len(cdf) - 1)]
            state = nxt
            now += 1
        out[:, k] = state
    _trace(trace, steps, out, seed)
    return out


def dtmc_sample(chain: MarkovChain, t: int, rng: np.random.Generator, **kw):
    return dtmc_samples(chain, [t], 1, rng, **kw)[0, 0]


def exact_samples(chain: MarkovChain, times, size: int, rng: np.random.Generator, *, dists=None):
    """Independent draws from the exact transient distribution at each time.

    Column ``k`` is an i.i.d. sample of ``Y(times[k])`` obtained by inverse-CDF
    sampling of the uniformized distribution; columns are independent of each
    other (unlike trajectory samples).
    """
    if dists is None:
        dists = transient_path(chain, times)
    out = np.empty((size, len(dists)), dtype=np.int64)
    for k, p in enumerate(dists):
        out[:, k] = _draw_initial(np.maximum(p, 0.0), size, rng)
    return out


# --------------------------------------------------------------------------- invariant distributions


@dataclass
class InvariantEstimate:
    """Estimate ``Y*`` of the invariant distribution with declared ℓ1 accuracy."""

    vector: np.ndarray | None
    accuracy: float
    method: str
    evaluator: Callable[[Any], float] | None = None
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def value(self, r) -> float:
        """``r · Y*`` for a weight vector (explicit) or observable key (implicit)."""
        if self.vector is not None:
            return float(np.dot(r, self.vector))
        return float(self.evaluator(r))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is not None:
            return self.sampler(rng, size)
        return _draw_initial(self.vector, size, rng)


def estimate_invariant(chain: MarkovChain, delta_prime: float = 0.1, *, method: str = "solve",
                       max_iter: int = 10_000_000, evaluator=None, sampler=None) -> InvariantEstimate:
    """Invariant distribution of an irreducible explicit chain.

    ``method="solve"`` solves the balance equations directly (accuracy limited
    by floating point); ``method="power"`` runs (uniformized) power iteration
    until the ℓ1 change per step falls below ``delta_prime / 6``.  Implicit
    chains need an analytic ``evaluator`` and ``sampler``.
    """
    if chain.matrix is None:
        if evaluator is None or sampler is None:
            raise ChainError("implicit chains need an analytic invariant evaluator and sampler")
        return InvariantEstimate(None, delta_prime / 3, "analytic", evaluator, sampler)
    n = chain.state_count
    m = chain.matrix
    if method == "solve":
        gen = m if chain.kind == "ct" else m - sp.identity(n, format="csr")
        lhs = sp.vstack([gen.T, np.ones((1, n))]).tocsr()
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        try:
            from scipy.sparse.linalg import lsqr

            if n <= 4000:
                sol = np.linalg.lstsq(lhs.toarray(), rhs, rcond=None)[0]
            else:
                sol = lsqr(lhs, rhs, atol=1e-14, btol=1e-14, iter_lim=100000)[0]
        except np.linalg.LinAlgError:
            sol = None
        if sol is not None:
            resid = np.abs(gen.T @ sol).sum()
            if np.all(sol > -1e-10) and resid < 1e-9:
                sol = np.maximum(sol, 0.0)
                sol /= sol.sum()
                return InvariantEstimate(sol, delta_prime / 3, "solve")
        log.info("direct invariant solve failed, falling back to power iteration")
    if chain.kind == "ct":
        q, pt = _uniformized(chain)
        if pt is None:
            return InvariantEstimate(chain.initial.copy(), delta_prime / 3, "power")
    else:
        pt = m.T.tocsr()
    p = chain.initial.copy() if chain.initial is not None else np.full(n, 1.0 / n)
    tol = delta_prime / 6
    for _ in range(max_iter):
        nxt = pt @ p
        if np.abs(nxt - p).sum() < tol:
            return InvariantEstimate(nxt / nxt.sum(), delta_prime / 3, "power")
        p = nxt
    raise NonConvergence("power iteration did not converge")


def stationary_birth_death(up: float, down: float, size: int) -> np.ndarray:
    """Invariant of a birth-death chain with constant rates: ``∝ (up/down)^j``."""
    w = (up / down) ** np.arange(size)
    return w / w.sum()
