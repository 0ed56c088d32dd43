"""End-to-end decision procedures.

``check_mitl_ctmc`` labels the atoms of an MITL formula on time segments of
a continuous-time chain with sequential tests and monitors the resulting
three-valued signal.  ``check_iltl`` labels discrete steps and decides the
formula with Büchi automata.  ``verify_shs_ct`` and ``verify_shs_dt`` wrap
both with grid reduction and formula strengthening.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.linalg as sla

from . import reduction as red
from .automata.buchi import LassoWord, is_intersection_empty, lasso_automaton, ltl_to_buchi, propositions
from .automata.mitl import MonitorStats, ThreeValuedSignal, eval_mitl_three_valued, partial_signal, segment_bounds
from .casestudy import CaseStudy
from .logic import (
    FALSE,
    And,
    Atom,
    Const,
    Formula,
    Next,
    Or,
    Release,
    Until,
    atoms,
    bind,
    format_formula,
    horizon,
    negate,
    observables_of,
    parse_formula,
    strengthen,
)
from .markov import (
    InvariantEstimate,
    MarkovChain,
    dtmc_samples,
    estimate_invariant,
    spawn_rngs,
    ssa_samples,
    transient_distribution,
)
from .model import HybridModelCT, HybridModelDT
from .stats import (
    DistributionSampler,
    HorizonCapExceeded,
    StatParams,
    alg0,
    duration_of_simulation,
)

log = logging.getLogger(__name__)

__all__ = [
    "CheckerConfig",
    "Verdict",
    "CheckerError",
    "SeparationError",
    "ExplicitSource",
    "CaseStudySource",
    "check_mitl_ctmc",
    "check_iltl",
    "verify_shs_ct",
    "verify_shs_dt",
]

# rng stream tags
_STAGE_HORIZON = 1
_STAGE_LABEL = 2


class CheckerError(ValueError):
    pass


class SeparationError(CheckerError):
    """An atom's threshold is within δ' of its value at the invariant estimate."""


@dataclass
class CheckerConfig:
    params: StatParams = field(default_factory=StatParams)
    seed: int = 0
    horizon_cap: float = 2.0 ** 20
    max_segments: int = 10 ** 7
    workers: int = 1
    h: float | None = None
    horizon: float | None = None
    sampling: str = "exact"
    lambda_y: dict | None = None
    alpha_c: dict | float | None = None
    beta_c: dict | float | None = None
    lambda_times: tuple = tuple(np.linspace(0.1, 10.0, 100))
    delta_p: float | None = None
    f_sup: float | None = None
    two_sided: bool = False
    strengthen: bool = True
    time_cap: float | None = None
    stats_trace: object = None

    def to_json(self) -> dict:
        p = self.params
        return {
            "alpha": p.alpha,
            "gamma": p.gamma,
            "delta": p.delta,
            "delta_prime": p.delta_prime,
            "seed": self.seed,
            "horizon_cap": self.horizon_cap,
            "max_segments": self.max_segments,
            "workers": self.workers,
            "h": self.h,
            "horizon": self.horizon,
            "sampling": self.sampling,
            "lambda_y": self.lambda_y,
            "alpha_c": self.alpha_c,
            "beta_c": self.beta_c,
            "delta_p": self.delta_p,
            "f_sup": self.f_sup,
            "two_sided": self.two_sided,
            "strengthen": self.strengthen,
            "time_cap": self.time_cap,
        }


@dataclass
class Verdict:
    value: str
    reason: str = ""
    capped: bool = False
    formula: str = ""
    T: float | None = None
    horizon_source: str = ""
    Delta: Fraction | None = None
    h: float | None = None
    h_source: str = ""
    segments: int = 0
    labeled: int = 0
    budgets: dict = field(default_factory=dict)
    samples: dict = field(default_factory=lambda: {"horizon": 0, "labeling": 0})
    certificates: list = field(default_factory=list)
    seed: object = None
    signal: ThreeValuedSignal | None = None
    extra: dict = field(default_factory=dict)

    @property
    def total_samples(self) -> int:
        return int(sum(self.samples.values()))

    def to_json(self, certificates: bool = False) -> dict:
        out = {
            "verdict": self.value,
            "reason": self.reason,
            "capped": self.capped,
            "formula": self.formula,
            "T": None if self.T is None else _num(self.T),
            "horizon_source": self.horizon_source,
            "Delta": None if self.Delta is None else str(self.Delta),
            "h": self.h,
            "h_source": self.h_source,
            "segments": self.segments,
            "labeled_segments": self.labeled,
            "budgets": self.budgets,
            "samples": dict(self.samples),
            "total_samples": self.total_samples,
            "seed": self.seed,
        }
        out.update(self.extra)
        if certificates:
            out["certificates"] = [c.to_json() for c in self.certificates]
        return out


def _num(v):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else float(v)
    return v


# --------------------------------------------------------------------------- sample sources


@dataclass
class _ObsInfo:
    binary: bool
    scale: float


def _obs_info(r: np.ndarray) -> _ObsInfo:
    if np.all((r == 0.0) | (r == 1.0)):
        return _ObsInfo(True, 1.0)
    s = float(np.max(np.abs(r), initial=0.0))
    return _ObsInfo(False, s if s > 0 else 1.0)


class ExplicitSource:
    """Samples of ``r · Y(t)`` for an explicit chain.

    ``sampling="exact"`` draws states from the uniformized transient
    distribution; ``"ssa"`` (or DT trajectory) simulation is available for
    cross-checks.
    """

    def __init__(self, chain: MarkovChain, weights: dict, sampling: str = "exact"):
        if not chain.explicit:
            raise CheckerError("ExplicitSource needs an explicit chain")
        if sampling not in ("exact", "ssa"):
            raise CheckerError(f"unknown sampling mode {sampling!r}")
        self.chain = chain
        self.kind = chain.kind
        self.weights = {k: np.asarray(v, dtype=float) for k, v in weights.items()}
        self.info = {k: _obs_info(v) for k, v in self.weights.items()}
        self.sampling = sampling
        self.n = chain.state_count
        self._cache: dict = {}
        self._step_cache: dict = {}

    def names(self):
        return list(self.weights)

    def h_default(self, names) -> float:
        """``‖r‖∞ ‖M‖₁`` maximised over the observables in use."""
        norm = float(np.max(np.abs(self.chain.matrix).sum(axis=0))) if self.chain.matrix.nnz else 0.0
        return max(float(np.max(np.abs(self.weights[k]))) for k in names) * norm

    # distributions
    def prepare(self, times):
        """Cache transient distributions at ``times`` (increasing)."""
        times = [float(t) for t in times]
        todo = [t for t in times if t not in self._cache]
        if not todo or self.sampling != "exact":
            return
        if self.kind == "dt":
            for t in todo:
                self._cache[t] = transient_distribution(self.chain, int(t))
            return
        widths = np.diff(todo)
        if len(todo) > 2 and np.allclose(widths, widths[0], rtol=1e-9, atol=0) and self.n <= 3000:
            w = float(widths[0])
            if w not in self._step_cache:
                self._step_cache = {w: sla.expm(w * self.chain.matrix.toarray())}
            step = self._step_cache[w]
            p = transient_distribution(self.chain, todo[0])
            self._cache[todo[0]] = p
            for t in todo[1:]:
                p = np.maximum(p @ step, 0.0)
                p /= p.sum()
                self._cache[t] = p
        else:
            for t in todo:
                self._cache[t] = transient_distribution(self.chain, t)

    def release(self):
        self._cache.clear()

    def distribution(self, t) -> np.ndarray:
        t = float(t)
        if t not in self._cache:
            self.prepare([t])
        return self._cache[t]

    def _states(self, t, rng, size):
        if self.sampling == "exact":
            return DistributionSampler(self.distribution(t))(rng, size)
        if self.kind == "dt":
            return dtmc_samples(self.chain, [int(t)], size, rng)[:, 0]
        return ssa_samples(self.chain, [float(t)], size, rng)[:, 0]

    def sampler(self, name: str, t) -> Callable:
        r = self.weights[name] / self.info[name].scale

        def draw(rng, size):
            return r[self._states(t, rng, size)]

        return draw

    def dist_sampler(self, t):
        if self.sampling == "exact":
            return DistributionSampler(self.distribution(t))
        return lambda rng, size: self._states(t, rng, size)


class CaseStudySource:
    """Samples of the two-far-coordinates indicator ``w`` by direct simulation of the implicit chain."""

    kind = "ct"
    n = None

    def __init__(self, cs: CaseStudy, backend: str | None = None):
        self.cs = cs
        self.backend = backend
        self.info = {"w": _ObsInfo(True, 1.0)}
        self.events = 0
        self.trajectories = 0

    def names(self):
        return ["w"]

    def h_default(self, names) -> float:
        return self.cs.h_bound()

    def prepare(self, times):
        pass

    def release(self):
        pass

    def sampler(self, name: str, t) -> Callable:
        if name != "w":
            raise CheckerError(f"unknown case-study observable {name!r}")

        def draw(rng, size):
            w, _, ev, _ = self.cs.simulate([float(t)], size, rng, self.backend)
            self.events += int(ev.sum())
            self.trajectories += size
            return w[:, 0]

        return draw

    def dist_sampler(self, t):
        raise CheckerError("the horizon search needs an explicit chain; supply a horizon for the implicit model")


# --------------------------------------------------------------------------- helpers


def _deadline(config: CheckerConfig):
    return None if config.time_cap is None else time.monotonic() + config.time_cap


def _expired(deadline) -> bool:
    return deadline is not None and time.monotonic() > deadline


def _invariant_value(ystar: InvariantEstimate | None, source, name: str):
    if ystar is None:
        return None
    if ystar.vector is not None:
        return float(np.dot(source.weights[name], ystar.vector))
    return float(ystar.evaluator(name))


def _tail(atom_list, ystar, source):
    out = []
    for a in atom_list:
        v = _invariant_value(ystar, source, a.obs)
        out.append(False if v is None else a.holds(v))
    return tuple(out)


def _check_separation(atom_list, ystar, source, delta_prime):
    for a in atom_list:
        v = _invariant_value(ystar, source, a.obs)
        if v is None:
            raise SeparationError("no invariant estimate available")
        if abs(v - float(a.c)) <= delta_prime:
            raise SeparationError(
                f"atom {format_formula(a)}: invariant value {v:.6g} within δ' = {delta_prime} of the threshold"
            )


def _floor_fraction(x: float, bits: int = 40) -> Fraction:
    """Largest dyadic rational ``k / 2^bits <= x`` (never rounds a step size up)."""
    f = Fraction(math.floor(x * 2 ** bits), 2 ** bits)
    if f <= 0:
        f = Fraction(x)
    return f


def _flip(v: str) -> str:
    return {"Yes": "No", "No": "Yes"}.get(v, v)


def _label_atom(source, atom: Atom, t, params: StatParams, rngs, seed, trace):
    """Algorithm 2's pair ``(res1, res2)`` for one atom, oriented so that res1 = Yes means True."""
    info = source.info[atom.obs]
    c = float(atom.c) / info.scale
    d3 = params.delta / 3 / info.scale
    sub = StatParams(params.alpha, params.gamma, min(d3, 0.999999), params.delta_prime)
    sampler = source.sampler(atom.obs, t)
    kw = {"seed": seed}
    if info.binary and trace is not None:
        kw["trace"] = trace
    if atom.upper:
        r1, c1 = alg0(sampler, c + d3, sub, rngs[0], binary=info.binary, **kw)
        r2, c2 = alg0(sampler, c - d3, sub, rngs[1], binary=info.binary, **kw)
        return (r1, r2), (c1, c2)
    # y < c: true when y is clearly below c, false when clearly above
    r1, c1 = alg0(sampler, c - d3, sub, rngs[0], binary=info.binary, **kw)
    r2, c2 = alg0(sampler, c + d3, sub, rngs[1], binary=info.binary, **kw)
    return (_flip(r1), _flip(r2)), (c1, c2)


def _pool_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------- CT / MITL


def check_mitl_ctmc(source, ystar: InvariantEstimate | None, formula: Formula, config: CheckerConfig) -> Verdict:
    """Decide an MITL formula on a continuous-time chain (Algorithms 1 and 2)."""
    p = config.params
    atom_list = atoms(formula)
    verdict = Verdict("Unknown", formula=format_formula(formula), seed=config.seed)
    if not atom_list:
        sig = ThreeValuedSignal((), (Fraction(0),), (), ())
        verdict.value = eval_mitl_three_valued(sig, formula)
        verdict.reason = "formula has no atoms"
        verdict.signal = sig
        return verdict
    bind(formula, source.names())
    deadline = _deadline(config)

    # horizon
    hrz = horizon(formula)
    if config.h is not None:
        h, h_source = float(config.h), "user"
    else:
        h, h_source = source.h_default(observables_of(formula)), "bound"
    if h <= 0:
        h = 1e-12
        h_source += " (zero derivative)"
    Delta = _floor_fraction(p.delta / (3 * h))
    verdict.h, verdict.h_source, verdict.Delta = h, h_source, Delta
    if hrz is not None:
        T = Fraction(hrz) + 2 * Delta
        verdict.horizon_source = "formula bound"
    elif config.horizon is not None:
        T = Fraction(config.horizon)
        verdict.horizon_source = "user"
    else:
        _check_separation(atom_list, ystar, source, p.delta_prime)
        rng = spawn_rngs(config.seed, 1, _STAGE_HORIZON)[0]
        inv = DistributionSampler(ystar.vector) if ystar.vector is not None else ystar.sampler
        try:
            t_found, cert = duration_of_simulation(
                source.dist_sampler, inv, source.n, min(p.alpha, p.gamma) / 2, p.delta_prime, rng,
                horizon_cap=config.horizon_cap, seed=config.seed,
            )
        except HorizonCapExceeded as exc:
            verdict.reason = f"horizon-cap: {exc}"
            verdict.capped = True
            verdict.certificates.append(exc.certificate)
            verdict.samples["horizon"] = exc.certificate.samples
            return verdict
        verdict.certificates.append(cert)
        verdict.samples["horizon"] = cert.samples
        T = Fraction(t_found)
        verdict.horizon_source = "closeness search"
    verdict.T = T
    bounds = segment_bounds(T, Delta)
    K = len(bounds) - 1
    verdict.segments = K
    if K > config.max_segments:
        verdict.reason = f"segment-cap: {K} segments exceed the cap {config.max_segments}"
        verdict.capped = True
        return verdict

    n_ap = len(atom_list)
    call = StatParams(p.alpha / 2 / (K * n_ap), p.gamma / 2 / (K * n_ap), p.delta, p.delta_prime)
    verdict.budgets = {
        "alpha": p.alpha,
        "gamma": p.gamma,
        "delta": p.delta,
        "delta_prime": p.delta_prime,
        "horizon_alpha": min(p.alpha, p.gamma) / 2,
        "labeling_alpha": p.alpha / 2,
        "labeling_gamma": p.gamma / 2,
        "atoms": n_ap,
        "segments": K,
        "per_call_alpha": call.alpha,
        "per_call_gamma": call.gamma,
        "per_call_delta": p.delta / 3,
    }
    tail = _tail(atom_list, ystar, source)
    pairs: list = []
    stats = MonitorStats()
    chunk = 4
    label_samples = 0
    while len(pairs) < K:
        if _expired(deadline):
            verdict.reason = "time-cap: labeling stopped at the configured time cap"
            verdict.capped = True
            break
        lo = len(pairs)
        hi = min(K, lo + chunk)
        mids = [float((bounds[i] + bounds[i + 1]) / 2) for i in range(lo, hi)]
        source.prepare(mids)
        jobs = [(i, a) for i in range(lo, hi) for a in range(n_ap)]

        def run(job):
            i, a = job
            rngs = spawn_rngs(config.seed, 2, _STAGE_LABEL, i, a)
            return _label_atom(source, atom_list[a], mids[i - lo], call, rngs, config.seed, config.stats_trace)

        results = _pool_map(run, jobs, config.workers)
        source.release()
        for i in range(lo, hi):
            row = []
            for a in range(n_ap):
                pair, certs = results[(i - lo) * n_ap + a]
                row.append(pair)
                verdict.certificates.extend(certs)
                label_samples += certs[0].samples + certs[1].samples
            pairs.append(row)
        sig = partial_signal(pairs, bounds, tail, atom_list)
        verdict.value = eval_mitl_three_valued(sig, formula, stats)
        verdict.signal = sig
        if verdict.value != "Unknown":
            break
        chunk = min(2 * chunk, 256)
    verdict.labeled = len(pairs)
    verdict.samples["labeling"] = label_samples
    verdict.extra["monitor_max_intervals"] = stats.max_spans
    if not verdict.reason:
        verdict.reason = "decided early" if verdict.labeled < K else "all segments labeled"
    return verdict


# --------------------------------------------------------------------------- DT / iLTL


def check_iltl(source, ystar: InvariantEstimate | None, formula: Formula, config: CheckerConfig) -> Verdict:
    """Decide an iLTL formula on a discrete-time chain (Algorithm 3)."""
    p = config.params
    props = propositions(formula)
    verdict = Verdict("Unknown", formula=format_formula(formula), seed=config.seed)
    bind(formula, source.names())
    deadline = _deadline(config)
    if config.horizon is not None:
        T = int(math.ceil(config.horizon))
        verdict.horizon_source = "user"
    elif not props:
        T = 0
        verdict.horizon_source = "no atoms"
    else:
        _check_separation(props, ystar, source, p.delta_prime)
        rng = spawn_rngs(config.seed, 1, _STAGE_HORIZON)[0]
        inv = DistributionSampler(ystar.vector) if ystar.vector is not None else ystar.sampler
        try:
            t_found, cert = duration_of_simulation(
                source.dist_sampler, inv, source.n, min(p.alpha, p.gamma) / 2, p.delta_prime, rng,
                horizon_cap=config.horizon_cap, seed=config.seed,
            )
        except HorizonCapExceeded as exc:
            verdict.reason = f"horizon-cap: {exc}"
            verdict.capped = True
            verdict.certificates.append(exc.certificate)
            verdict.samples["horizon"] = exc.certificate.samples
            return verdict
        verdict.certificates.append(cert)
        verdict.samples["horizon"] = cert.samples
        T = int(t_found)
        verdict.horizon_source = "closeness search"
    verdict.T = T
    verdict.segments = T
    if T > config.max_segments:
        verdict.reason = f"segment-cap: {T} steps exceed the cap {config.max_segments}"
        verdict.capped = True
        return verdict
    n_ap = max(len(props), 1)
    m = max(T, 1)
    call = StatParams(p.alpha / (2 * m * n_ap), p.gamma / (2 * m * n_ap), p.delta, p.delta_prime)
    verdict.budgets = {
        "alpha": p.alpha,
        "gamma": p.gamma,
        "delta": p.delta,
        "delta_prime": p.delta_prime,
        "atoms": len(props),
        "steps": T,
        "per_call_alpha": call.alpha,
        "per_call_gamma": call.gamma,
        "per_call_delta": p.delta / 3,
    }
    source.prepare(list(range(T)))
    jobs = [(t, a) for t in range(T) for a in range(len(props))]

    def run(job):
        t, a = job
        atom = props[a]
        info = source.info[atom.obs]
        rng = spawn_rngs(config.seed, 1, _STAGE_LABEL, t, a)[0]
        c = float(atom.c) / info.scale
        d3 = p.delta / 3 / info.scale
        sub = StatParams(call.alpha, call.gamma, min(d3, 0.999999), p.delta_prime)
        return alg0(source.sampler(atom.obs, t), c, sub, rng, binary=info.binary, seed=config.seed)

    results = []
    if not _expired(deadline):
        results = _pool_map(run, jobs, config.workers)
    else:
        verdict.reason = "time-cap"
        verdict.capped = True
        return verdict
    source.release()
    prefix = []
    samples = 0
    for t in range(T):
        letter = []
        for a in range(len(props)):
            v, cert = results[t * len(props) + a]
            verdict.certificates.append(cert)
            samples += cert.samples
            letter.append(True if v == "Yes" else False if v == "No" else None)
        prefix.append(tuple(letter))
    tail = _tail(props, ystar, source) if props else ()
    word = LassoWord(tuple(prefix), (tuple(tail),))
    verdict.samples["labeling"] = samples
    lasso = lasso_automaton(word, props)
    if is_intersection_empty(ltl_to_buchi(formula, props), lasso):
        verdict.value = "No"
    elif is_intersection_empty(ltl_to_buchi(negate(formula), props), lasso):
        verdict.value = "Yes"
    else:
        verdict.value = "Unknown"
    verdict.labeled = T
    verdict.extra["unknown_labels"] = word.unknowns
    verdict.reason = verdict.reason or "decided by automata emptiness"
    return verdict


# --------------------------------------------------------------------------- SHS pipelines


def _simplify(f: Formula) -> Formula:
    if isinstance(f, (Const, Atom)):
        return f
    if isinstance(f, Next):
        c = _simplify(f.child)
        return c if isinstance(c, Const) else Next(c)
    left, right = _simplify(f.left), _simplify(f.right)
    if isinstance(f, And):
        if left == FALSE or right == FALSE:
            return FALSE
        if isinstance(left, Const):
            return right
        if isinstance(right, Const):
            return left
        return And(left, right)
    if isinstance(f, Or):
        if isinstance(left, Const) and left.value or isinstance(right, Const) and right.value:
            return Const(True)
        if left == FALSE:
            return right
        if right == FALSE:
            return left
        return Or(left, right)
    if isinstance(f, Until) and right == FALSE:
        return FALSE
    if isinstance(f, Release) and right == FALSE:
        return FALSE
    return replace(f, left=left, right=right)


def _drop_infeasible(f: Formula, ranges: dict) -> tuple[Formula, list]:
    """Replace atoms no distribution can satisfy by ⊥; returns the formula and the dropped atoms."""
    dropped = []

    def go(g):
        if isinstance(g, Atom):
            lo, hi = ranges[g.obs]
            c = float(g.c)
            dead = (g.upper and (c > hi or (g.rel == ">" and c >= hi))) or (
                not g.upper and (c < lo or (g.rel == "<" and c <= lo))
            )
            if dead:
                dropped.append(format_formula(g))
                return FALSE
            return g
        if isinstance(g, Const):
            return g
        if isinstance(g, Next):
            return Next(go(g.child))
        return replace(g, left=go(g.left), right=go(g.right))

    return _simplify(go(f)), dropped


def _eps_fractions(eps: dict) -> dict:
    # shortest decimal that round-trips to the float budget
    return {k: Fraction(repr(float(v))) for k, v in eps.items()}


def _per_obs(value, name, what):
    if value is None:
        raise CheckerError(f"missing {what} for observable {name!r}")
    if isinstance(value, dict):
        if name not in value:
            raise CheckerError(f"missing {what} for observable {name!r}")
        return value[name]
    return value


def _as_formula(formula, flavor):
    return parse_formula(formula, flavor) if isinstance(formula, str) else formula


def verify_shs_ct(model: HybridModelCT, formula, pitch, config: CheckerConfig) -> tuple[Verdict, dict]:
    """Reduce, bound the reduction error, strengthen and check an MITL formula."""
    t0 = time.monotonic()
    phi = _as_formula(formula, "mitl")
    bind(phi, model.observables)
    partition = red.build_grid_partition(model, pitch)
    chain = red.reduce_ct(model, partition)
    names = observables_of(phi)
    weights = {k: red.observable_vector(model.observables[k], partition) for k in model.observables}
    budget = red.ErrorBudget(kind="ct")
    eps = {}
    if config.strengthen:
        for name in names:
            a_c = _per_obs(config.alpha_c, name, "contractivity rate alpha")
            b_c = _per_obs(config.beta_c, name, "contractivity constant beta")
            d_y = red.projection_error(model.initial_density, partition, model.observables[name])
            if config.lambda_y is not None and name in config.lambda_y:
                lam, src = float(config.lambda_y[name]), "user"
            else:
                lam = red.estimate_lambda(model, partition, model.observables[name], config.lambda_times, coarse=chain)
                src = "estimate"
            e = red.ct_error_bound(lam, float(a_c), float(b_c), float(d_y))
            budget.delta_y[name] = d_y
            budget.lambda_y[name] = lam
            budget.lambda_source[name] = src
            budget.alpha_c[name] = float(a_c)
            budget.beta_c[name] = float(b_c)
            budget.epsilon[name] = e
            eps[name] = e
        psi = strengthen(phi, _eps_fractions(eps))
    else:
        budget.notes.append("strengthening disabled")
        psi = phi
    ranges = {k: (float(min(v.min(), 0.0)), float(max(v.max(), 0.0))) for k, v in weights.items()}
    psi_eff, dropped = _drop_infeasible(psi, ranges)
    report = {
        "model": model.name,
        "kind": "ct",
        "pitch": str(pitch),
        "states": chain.state_count,
        "formula": format_formula(phi),
        "strengthened": format_formula(psi),
        "error_budget": budget.to_json(),
        "config": config.to_json(),
    }
    source = ExplicitSource(chain, weights, config.sampling)
    if dropped and psi_eff == FALSE:
        verdict = Verdict("No", reason="budget exceeds observable range", formula=format_formula(psi),
                          seed=config.seed)
        verdict.extra["infeasible_atoms"] = dropped
    else:
        ystar = estimate_invariant(chain, config.params.delta_prime)
        verdict = check_mitl_ctmc(source, ystar, psi_eff, config)
        if dropped:
            verdict.extra["infeasible_atoms"] = dropped
    report["psi_verdict"] = verdict.value
    report["conclusion"] = _conclusion_ct(verdict.value)
    if config.two_sided and verdict.value != "Yes":
        dual = strengthen(negate(phi), _eps_fractions(eps)) if eps else negate(phi)
        dual_eff, _ = _drop_infeasible(dual, ranges)
        if dual_eff == FALSE:
            dv = Verdict("No", reason="budget exceeds observable range")
        else:
            dv = check_mitl_ctmc(source, estimate_invariant(chain, config.params.delta_prime), dual_eff,
                                 replace(config, seed=config.seed + 1))
        report["dual_formula"] = format_formula(dual)
        report["dual_verdict"] = dv.value
        if dv.value == "Yes":
            report["conclusion"] = "φ fails on the SHS (the strengthened negation holds, up to statistical error α)"
    report["verdict"] = verdict.to_json()
    report["wall_time"] = time.monotonic() - t0
    return verdict, report


def _conclusion_ct(value: str) -> str:
    if value == "Yes":
        return "φ holds on the SHS (up to statistical error α)"
    if value == "No":
        return "ψ fails on the reduced chain; inconclusive for φ unless the dual strengthening of ¬φ is also checked"
    return "inconclusive"


def verify_shs_dt(model: HybridModelDT, formula, pitch, config: CheckerConfig) -> tuple[Verdict, dict]:
    """Reduce a discrete-time model, bound ``δ_P``, strengthen and check an iLTL formula."""
    t0 = time.monotonic()
    phi = _as_formula(formula, "iltl")
    bind(phi, model.observables)
    partition = red.build_grid_partition(model, pitch)
    chain = red.reduce_dt(model, partition)
    weights = {k: red.observable_vector(model.observables[k], partition) for k in model.observables}
    budget = red.ErrorBudget(kind="dt")
    ystar = estimate_invariant(chain, config.params.delta_prime)
    eps = {}
    if config.strengthen:
        alpha = model.contractivity
        if config.alpha_c is not None:
            # one per-step factor governs every observable of a DT model; take the weakest
            vals = config.alpha_c.values() if isinstance(config.alpha_c, dict) else [config.alpha_c]
            alpha = max(float(v) for v in vals)
        if alpha is None:
            raise CheckerError("missing contractivity constant alpha for the discrete-time model")
        if config.delta_p is not None:
            dp, src = float(config.delta_p), "user"
        else:
            steps = int(config.horizon) if config.horizon is not None else 64
            dp, src = red.estimate_delta_p(model, partition, chain, steps)
        fs = float(config.f_sup) if config.f_sup is not None else float(red.density_sup(model.initial_density, partition))
        e = red.dt_error_bound(dp, alpha, fs)
        budget.delta_p, budget.f_sup = dp, fs
        budget.notes.append(f"delta_p source: {src}")
        for name in observables_of(phi):
            budget.alpha_c[name] = alpha
            budget.epsilon[name] = e
            eps[name] = e
        psi = strengthen(phi, _eps_fractions(eps))
    else:
        psi = phi
        budget.notes.append("strengthening disabled")
    ranges = {k: (float(min(v.min(), 0.0)), float(max(v.max(), 0.0))) for k, v in weights.items()}
    psi_eff, dropped = _drop_infeasible(psi, ranges)
    report = {
        "model": model.name,
        "kind": "dt",
        "pitch": str(pitch),
        "states": chain.state_count,
        "formula": format_formula(phi),
        "strengthened": format_formula(psi),
        "error_budget": budget.to_json(),
        "config": config.to_json(),
    }
    if dropped and psi_eff == FALSE:
        verdict = Verdict("No", reason="budget exceeds observable range", formula=format_formula(psi),
                          seed=config.seed)
    else:
        verdict = check_iltl(ExplicitSource(chain, weights, config.sampling), ystar, psi_eff, config)
    if dropped:
        verdict.extra["infeasible_atoms"] = dropped
    report["psi_verdict"] = verdict.value
    report["conclusion"] = _conclusion_ct(verdict.value)
    report["verdict"] = verdict.to_json()
    report["wall_time"] = time.monotonic() - t0
    return verdict, report
