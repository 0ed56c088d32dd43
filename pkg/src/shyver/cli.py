"""Command-line front end: ``shyver reduce | check | bench | simulate``.

Exit codes: 0 Yes, 1 No, 4 Unknown, 2 input or validation error, 3 reduction
failure, 5 cap exhaustion (horizon, segment or time cap).  The first stdout
line of ``check`` is always the verdict in upper case.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import secrets
import sys
import threading
import time
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from . import reduction as red
from .automata.buchi import ltl_to_buchi, propositions
from .casestudy import CaseStudy, is_casestudy_doc
from .checker import (
    CaseStudySource,
    CheckerConfig,
    CheckerError,
    ExplicitSource,
    check_iltl,
    check_mitl_ctmc,
    verify_shs_ct,
    verify_shs_dt,
)
from .logic import FormulaError, format_formula, negate, parse_formula
from .markov import ChainError, dtmc_samples, estimate_invariant, spawn_rngs, ssa_samples
from .model import HybridModelCT, ModelError, model_from_dict, validate_model
from .stats import StatParams, StatsError

log = logging.getLogger("shyver")

EXIT_YES, EXIT_NO, EXIT_INPUT, EXIT_REDUCTION, EXIT_UNKNOWN, EXIT_CAP = 0, 1, 2, 3, 4, 5
EXIT_OF = {"Yes": EXIT_YES, "No": EXIT_NO, "Unknown": EXIT_UNKNOWN}

REPORT_SCHEMA = "shyver.report/1"
MANIFEST_SCHEMA = "shyver.manifest/1"
BENCH_SCHEMA = "shyver.bench/1"
VOLATILE_KEYS = frozenset({"wall_time", "timestamp"})


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


# --------------------------------------------------------------------------- helpers


def _setup_logging():
    level = os.environ.get("SHYVER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"not a rational number: {text!r}") from exc


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _is_chain_file(path) -> bool:
    try:
        with open(path) as fh:
            head = fh.readline().split()
    except (OSError, UnicodeDecodeError):
        return False
    return bool(head) and head[0] in ("ctmc", "dtmc")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def strip_volatile(doc):
    """Drop wall-clock fields so two reports of the same run compare equal."""
    if isinstance(doc, dict):
        return {k: strip_volatile(v) for k, v in doc.items() if k not in VOLATILE_KEYS}
    if isinstance(doc, list):
        return [strip_volatile(v) for v in doc]
    return doc


class _LockedWriter:
    """Single writer shared by the sampling threads."""

    def __init__(self, fh):
        self._fh = fh
        self._lock = threading.Lock()

    def write(self, text):
        with self._lock:
            self._fh.write(text)


def _key_values(items, what) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"--{what} expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = float(Fraction(v))
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"--{what}: bad value {v!r}") from exc
    return out


def _scalar_or_map(items, what):
    """``--x 0.5`` applies to every observable; ``--x y1=0.5`` to one."""
    if not items:
        return None
    if len(items) == 1 and "=" not in items[0]:
        try:
            return float(Fraction(items[0]))
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"--{what}: bad value {items[0]!r}") from exc
    return _key_values(items, what)


# --------------------------------------------------------------------------- reduce


def cmd_reduce(args) -> int:
    doc = _load_json(args.model)
    if is_casestudy_doc(doc):
        try:
            cs = CaseStudy.from_dict(doc)
            if args.pitch is not None:
                inv = 1 / _fraction(args.pitch)
                if inv.denominator != 1:
                    raise InputError("case-study pitch must be 1/eta for an integer eta")
                cs = replace(cs, eta=int(inv), A=cs.A)
        except (KeyError, ValueError) as exc:
            raise InputError(f"{args.model}: {exc}") from exc
        desc = cs.descriptor()
        desc["schema"] = "shyver.implicit/1"
        desc["tool_version"] = __version__
        _write_json(args.out, desc)
        print(f"implicit chain: {cs.state_count} states ({cs.state_count:.3g}), not materialised")
        return 0
    try:
        model = model_from_dict(doc)
    except ModelError as exc:
        raise InputError(f"{args.model}: {exc}") from exc
    problems = validate_model(model)
    if problems:
        raise InputError(f"{args.model}: " + "; ".join(problems))
    if args.pitch is None:
        raise InputError("--pitch is required for hybrid models")
    pitch = _fraction(args.pitch)
    try:
        partition = red.build_grid_partition(model, pitch)
        chain = red.reduce_ct(model, partition) if isinstance(model, HybridModelCT) else red.reduce_dt(model, partition)
    except red.ReductionError as exc:
        print(f"reduction failed: {exc}", file=sys.stderr)
        return EXIT_REDUCTION
    budget = red.ErrorBudget(kind="ct" if chain.kind == "ct" else "dt")
    for name, w in model.observables.items():
        budget.delta_y[name] = red.projection_error(model.initial_density, partition, w)
    if chain.kind == "dt":
        budget.f_sup = float(red.density_sup(model.initial_density, partition))
    budget.notes.append("Lambda_y, delta_P and contractivity constants are supplied at check time")
    sidecar = {
        "schema": "shyver.chain/1",
        "tool_version": __version__,
        "model": model.name,
        "pitch": str(pitch),
        "states": chain.state_count,
        "error_budget": budget.to_json(),
        "observables": {k: red.observable_vector(w, partition).tolist() for k, w in model.observables.items()},
    }
    red.write_chain(chain, args.out, sidecar)
    print(f"{chain.state_count} states, {chain.matrix.nnz} nonzeros -> {args.out}")
    return 0


# --------------------------------------------------------------------------- check

_CHECK_OPTIONS = (
    "model", "formula_text", "formula_path", "pitch", "alpha", "gamma", "delta", "delta_prime", "horizon_cap",
    "max_segments", "seed", "workers", "two_sided", "h", "horizon", "sampling", "lam", "contractivity_alpha",
    "contractivity_beta", "delta_p", "f_sup", "no_strengthen", "time_cap", "report", "dump_signal",
    "dump_automaton", "stats_trace", "backend",
)


def _resolve_formula(args):
    if args.formula is None:
        raise InputError("a formula (file or text) is required")
    p = Path(args.formula)
    if p.is_file():
        return p.read_text().strip(), str(p.resolve())
    return args.formula.strip(), None


def _config_from(opts) -> CheckerConfig:
    try:
        params = StatParams(opts["alpha"], opts["gamma"], opts["delta"], opts["delta_prime"])
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return CheckerConfig(
        params=params,
        seed=int(opts["seed"]),
        horizon_cap=float(opts["horizon_cap"]),
        max_segments=int(opts["max_segments"]),
        workers=int(opts["workers"]),
        h=opts["h"],
        horizon=None if opts["horizon"] is None else Fraction(opts["horizon"]),
        sampling=opts["sampling"],
        lambda_y=_key_values(opts["lam"], "lambda") or None,
        alpha_c=_scalar_or_map(opts["contractivity_alpha"], "contractivity-alpha"),
        beta_c=_scalar_or_map(opts["contractivity_beta"], "contractivity-beta"),
        delta_p=opts["delta_p"],
        f_sup=opts["f_sup"],
        two_sided=bool(opts["two_sided"]),
        strengthen=not opts["no_strengthen"],
        time_cap=opts["time_cap"],
    )


def _chain_report(verdict, formula, source_kind, states, config, extra=None) -> dict:
    report = {
        "kind": source_kind,
        "states": states,
        "formula": formula,
        "strengthened": formula,
        "config": config.to_json(),
        "psi_verdict": verdict.value,
        "verdict": verdict.to_json(),
    }
    report.update(extra or {})
    return report


def _run_check(opts, config, trace):
    """Dispatch on the input kind; returns ``(verdict, report, formula_for_automaton, flavor)``."""
    if trace is not None:
        config = replace(config, stats_trace=trace)
    path = opts["model"]
    text = opts["formula_text"]
    if _is_chain_file(path):
        try:
            chain, meta = red.read_chain(path)
        except (OSError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        flavor = "mitl" if chain.kind == "ct" else "iltl"
        f = parse_formula(text, flavor)
        weights = {k: np.asarray(v, dtype=float) for k, v in meta.get("observables", {}).items()}
        source = ExplicitSource(chain, weights, config.sampling)
        ystar = estimate_invariant(chain, config.params.delta_prime)
        run = check_mitl_ctmc if chain.kind == "ct" else check_iltl
        verdict = run(source, ystar, f, config)
        extra = {"error_budget": meta.get("error_budget"), "model": meta.get("model", "")}
        if config.two_sided and verdict.value != "Yes":
            dv = run(source, ystar, negate(f), replace(config, seed=config.seed + 1))
            extra["dual_formula"] = format_formula(negate(f))
            extra["dual_verdict"] = dv.value
        return verdict, _chain_report(verdict, format_formula(f), chain.kind, chain.state_count, config, extra), f, flavor
    doc = _load_json(path)
    if is_casestudy_doc(doc):
        cs = CaseStudy.from_dict(doc)
        f = parse_formula(text, "mitl")
        source = CaseStudySource(cs, opts.get("backend"))
        verdict = check_mitl_ctmc(source, None, f, config)
        extra = {
            "model": "casestudy",
            "state_count": str(cs.state_count),
            "events": int(source.events),
            "trajectories": int(source.trajectories),
            "events_per_sample": source.events / max(source.trajectories, 1),
        }
        return verdict, _chain_report(verdict, format_formula(f), "casestudy", float(cs.state_count), config,
                                      extra), f, "mitl"
    try:
        model = model_from_dict(doc)
    except ModelError as exc:
        raise InputError(f"{path}: {exc}") from exc
    problems = validate_model(model)
    if problems:
        raise InputError(f"{path}: " + "; ".join(problems))
    if opts["pitch"] is None:
        raise InputError("--pitch is required for hybrid models")
    pitch = _fraction(opts["pitch"])
    if isinstance(model, HybridModelCT):
        verdict, report = verify_shs_ct(model, text, pitch, config)
        flavor = "mitl"
    else:
        verdict, report = verify_shs_dt(model, text, pitch, config)
        flavor = "iltl"
    return verdict, report, parse_formula(report["strengthened"], flavor), flavor


def _dump_automaton(path, f, flavor):
    if flavor != "iltl":
        _write_json(path, {"note": "MITL formulas are monitored on signals; no Büchi automaton is built"})
        return
    props = propositions(f)
    _write_json(path, {
        "formula": ltl_to_buchi(f, props).to_json(),
        "negation": ltl_to_buchi(negate(f), props).to_json(),
    })


def cmd_check(args) -> int:
    if args.manifest:
        man = _load_json(args.manifest)
        if man.get("schema") != MANIFEST_SCHEMA or man.get("command") != "check":
            raise InputError(f"{args.manifest}: not a check manifest")
        opts = dict(man["options"])
        digest = man["inputs"].get("model_sha256")
        if digest and Path(opts["model"]).is_file() and _sha256(opts["model"]) != digest:
            raise InputError(f"{opts['model']}: input changed since the manifest was written")
        if args.report:
            opts["report"] = args.report
        manifest_out = None
    else:
        if args.model is None:
            raise InputError("an input model or chain file is required")
        text, fpath = _resolve_formula(args)
        seed = args.seed
        if seed is None:
            seed = secrets.randbits(32)
            print(f"seed: {seed}", file=sys.stderr)
        opts = {k: getattr(args, k, None) for k in _CHECK_OPTIONS}
        opts.update(model=str(Path(args.model).resolve()), formula_text=text, formula_path=fpath, seed=seed,
                    workers=args.workers if args.workers else (os.cpu_count() or 1))
        opts["report"] = args.report or "shyver-report.json"
        manifest_out = args.write_manifest or str(Path(opts["report"]).with_suffix("")) + ".manifest.json"
    if not Path(opts["model"]).is_file():
        raise InputError(f"{opts['model']}: no such file")
    config = _config_from(opts)

    if manifest_out is not None:
        _write_json(manifest_out, {
            "schema": MANIFEST_SCHEMA,
            "command": "check",
            "tool_version": __version__,
            "inputs": {"model": opts["model"], "model_sha256": _sha256(opts["model"]),
                       "formula": opts["formula_text"], "formula_path": opts["formula_path"]},
            "config": config.to_json(),
            "seed": config.seed,
            "options": opts,
            "outputs": {k: opts[k] for k in ("report", "dump_signal", "dump_automaton", "stats_trace")},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        })
        log.info("manifest written to %s", manifest_out)

    t0 = time.monotonic()
    trace_fh = open(opts["stats_trace"], "w") if opts["stats_trace"] else None
    try:
        verdict, report, f, flavor = _run_check(opts, config, _LockedWriter(trace_fh) if trace_fh else None)
    finally:
        if trace_fh:
            trace_fh.close()
    report.update({
        "schema": REPORT_SCHEMA,
        "tool_version": __version__,
        "command": "check",
        "input": opts["model"],
        "seed": config.seed,
        "wall_time": time.monotonic() - t0,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    })
    _write_json(opts["report"], report)
    if opts["dump_signal"]:
        sig = verdict.signal
        _write_json(opts["dump_signal"], sig.to_json() if sig is not None else {"note": "no signal was built"})
    if opts["dump_automaton"]:
        _dump_automaton(opts["dump_automaton"], f, flavor)

    print(verdict.value.upper())
    print(f"formula: {verdict.formula}")
    if verdict.reason:
        print(f"reason: {verdict.reason}")
    print(f"samples: {verdict.total_samples}  segments: {verdict.segments}  report: {opts['report']}")
    if verdict.capped:
        return EXIT_CAP
    return EXIT_OF[verdict.value]


# --------------------------------------------------------------------------- bench


def _ci_halfwidth(xs) -> float | None:
    if len(xs) < 2:
        return None
    return float(sps.t.ppf(0.975, len(xs) - 1) * np.std(xs, ddof=1) / math.sqrt(len(xs)))


def cmd_bench(args) -> int:
    suite = _load_json(args.suite)
    try:
        ns = [int(v) for v in suite.get("n", [5])]
        thresholds = [float(v) for v in suite["thresholds"]]
        bounds = [float(v) for v in suite["bounds"]]
        reps = int(suite.get("reps", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.suite}: bad suite ({exc})") from exc
    eta = int(suite.get("eta", 10))
    params = StatParams(float(suite.get("alpha", 0.1)), float(suite.get("gamma", 0.1)),
                        float(suite.get("delta", 0.1)), float(suite.get("delta_prime", 0.1)))
    time_cap = suite.get("time_cap")
    h = suite.get("h")
    base_seed = int(suite.get("seed", 0))
    out = Path(args.out or suite.get("out", "bench.csv"))
    fields = ["n", "states", "threshold", "bound", "rep", "seed", "verdict", "wall_time", "samples",
              "events", "events_per_sample", "segments", "labeled", "capped"]
    rows = []
    over_cap = False
    for n in ns:
        cs = CaseStudy(n=n, eta=eta, seed=int(suite.get("matrix_seed", 0)))
        for thr in thresholds:
            for bound in bounds:
                f = parse_formula(f"true U[0,{bound:g}] (w > {thr:g})", "mitl")
                for rep in range(reps):
                    seed = base_seed + rep
                    source = CaseStudySource(cs, args.backend)
                    config = CheckerConfig(params=params, seed=seed, time_cap=time_cap, workers=args.workers or 1,
                                           h=None if h is None else float(h))
                    t0 = time.monotonic()
                    v = check_mitl_ctmc(source, None, f, config)
                    wall = time.monotonic() - t0
                    over_cap |= v.capped
                    rows.append({
                        "n": n, "states": cs.state_count, "threshold": thr, "bound": bound, "rep": rep,
                        "seed": seed, "verdict": v.value, "wall_time": f"{wall:.6f}", "samples": v.total_samples,
                        "events": source.events, "events_per_sample": f"{source.events / max(source.trajectories, 1):.4f}",
                        "segments": v.segments, "labeled": v.labeled, "capped": int(v.capped),
                    })
                    log.info("n=%d thr=%g T=%g rep=%d -> %s in %.2fs", n, thr, bound, rep, v.value, wall)
    with out.open("w", newline="") as fh:
        fh.write(f"# {BENCH_SCHEMA} runs\n")
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    summary = []
    for n in ns:
        for thr in thresholds:
            for bound in bounds:
                cell = [r for r in rows if r["n"] == n and r["threshold"] == thr and r["bound"] == bound]
                wt = [float(r["wall_time"]) for r in cell]
                ss = [float(r["samples"]) for r in cell]
                ci_t, ci_s = _ci_halfwidth(wt), _ci_halfwidth(ss)
                summary.append({
                    "n": n, "threshold": thr, "bound": bound, "reps": len(cell),
                    "mean_wall_time": f"{np.mean(wt):.6f}", "ci95_wall_time": "" if ci_t is None else f"{ci_t:.6f}",
                    "mean_samples": f"{np.mean(ss):.1f}", "ci95_samples": "" if ci_s is None else f"{ci_s:.1f}",
                    "yes": sum(r["verdict"] == "Yes" for r in cell), "no": sum(r["verdict"] == "No" for r in cell),
                    "unknown": sum(r["verdict"] == "Unknown" for r in cell),
                    "capped": sum(r["capped"] for r in cell),
                })
    summary_path = out.with_name(out.stem + "_summary.csv")
    with summary_path.open("w", newline="") as fh:
        fh.write(f"# {BENCH_SCHEMA} summary\n")
        w = csv.DictWriter(fh, fieldnames=list(summary[0]))
        w.writeheader()
        w.writerows(summary)
    # one block per bound, one row per threshold, mean/ci column pairs per n
    dat = out.with_suffix(".dat")
    with dat.open("w") as fh:
        fh.write("# threshold " + " ".join(f"mean_n{n} ci_n{n}" for n in ns) + "\n")
        for bound in bounds:
            fh.write(f"# bound {bound:g}\n")
            for thr in thresholds:
                cols = []
                for n in ns:
                    s = next(r for r in summary if r["n"] == n and r["threshold"] == thr and r["bound"] == bound)
                    cols += [s["mean_wall_time"], s["ci95_wall_time"] or "0"]
                fh.write(f"{thr:g} " + " ".join(cols) + "\n")
            fh.write("\n\n")
    print(f"{len(rows)} runs -> {out}, summary -> {summary_path}, plot data -> {dat}")
    return EXIT_CAP if over_cap else 0


# --------------------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(32)
        print(f"seed: {seed}", file=sys.stderr)
    try:
        times = [float(Fraction(t)) for t in args.times.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"--times: {exc}") from exc
    rng = spawn_rngs(seed, 1, 0)[0]
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if _is_chain_file(args.model):
            chain, meta = red.read_chain(args.model)
            weights = {k: np.asarray(v, dtype=float) for k, v in meta.get("observables", {}).items()}
            if chain.kind == "ct":
                states = ssa_samples(chain, times, args.samples, rng)
            else:
                states = dtmc_samples(chain, [int(t) for t in times], args.samples, rng)
            states = np.asarray(states)
            for k in range(args.samples):
                for i, t in enumerate(times):
                    s = int(states[k, i])
                    rec = {"replication": k, "t": t, "state": s, "seed": seed}
                    rec.update({name: float(w[s]) for name, w in weights.items()})
                    out.write(json.dumps(rec) + "\n")
        else:
            doc = _load_json(args.model)
            if not is_casestudy_doc(doc):
                raise InputError("simulate expects a chain file or a case-study descriptor")
            cs = CaseStudy.from_dict(doc)
            w, modes, events, _ = cs.simulate(times, args.samples, rng, args.backend)
            for k in range(args.samples):
                for i, t in enumerate(times):
                    out.write(json.dumps({"replication": k, "t": t, "w": int(w[k, i]), "mode": int(modes[k, i]),
                                          "seed": seed}) + "\n")
            print(f"events per sample: {float(np.sum(events)) / args.samples:.3f}", file=sys.stderr)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shyver", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"shyver {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reduce", help="grid-reduce a hybrid model to a Markov chain")
    r.add_argument("model")
    r.add_argument("--pitch", help="grid pitch, e.g. 1/30")
    r.add_argument("-o", "--out", required=True)
    r.set_defaults(func=cmd_reduce)

    c = sub.add_parser("check", help="verify a formula on a model, chain or case-study descriptor")
    c.add_argument("model", nargs="?")
    c.add_argument("formula", nargs="?", help="formula file, or the formula text itself")
    c.add_argument("--pitch")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--gamma", type=float, default=0.05)
    c.add_argument("--delta", type=float, default=0.05)
    c.add_argument("--delta-prime", type=float, default=0.05)
    c.add_argument("--horizon-cap", type=float, default=2.0 ** 20)
    c.add_argument("--max-segments", type=int, default=10 ** 7)
    c.add_argument("--seed", type=int)
    c.add_argument("--workers", type=int, help="sampling threads (default: available parallelism)")
    c.add_argument("--two-sided", action="store_true", help="also check the strengthened negation")
    c.add_argument("--h", type=float, help="bound on |d/dt E[y]| (default: derived from the generator)")
    c.add_argument("--horizon", help="time horizon for unbounded formulas, skipping the closeness search")
    c.add_argument("--sampling", choices=("exact", "ssa"), default="exact")
    c.add_argument("--lambda", dest="lam", action="append", metavar="NAME=VALUE",
                   help="reduction-error constant Lambda_y (default: estimated)")
    c.add_argument("--contractivity-alpha", action="append", metavar="[NAME=]VALUE")
    c.add_argument("--contractivity-beta", action="append", metavar="[NAME=]VALUE")
    c.add_argument("--delta-p", type=float)
    c.add_argument("--f-sup", type=float)
    c.add_argument("--no-strengthen", action="store_true")
    c.add_argument("--time-cap", type=float, help="wall-clock cap in seconds")
    c.add_argument("--backend", choices=("cython", "python"))
    c.add_argument("--report", help="report JSON path (default shyver-report.json)")
    c.add_argument("--write-manifest", help="manifest path (default <report>.manifest.json)")
    c.add_argument("--manifest", help="replay a manifest written by an earlier run")
    c.add_argument("--dump-signal")
    c.add_argument("--dump-automaton")
    c.add_argument("--stats-trace", help="NDJSON log of SPRT log-likelihood ratios")
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("bench", help="run the case-study benchmark grid")
    b.add_argument("suite")
    b.add_argument("-o", "--out")
    b.add_argument("--workers", type=int)
    b.add_argument("--backend", choices=("cython", "python"))
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("simulate", help="draw raw trajectories")
    s.add_argument("model")
    s.add_argument("--times", required=True, help="comma-separated observation times")
    s.add_argument("--samples", type=int, default=10)
    s.add_argument("--seed", type=int)
    s.add_argument("--backend", choices=("cython", "python"))
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FormulaError, ModelError, CheckerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except red.ReductionError as exc:
        print(f"reduction failed: {exc}", file=sys.stderr)
        return EXIT_REDUCTION
    except (StatsError, ChainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
