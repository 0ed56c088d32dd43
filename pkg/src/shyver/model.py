"""Stochastic hybrid system models (continuous and discrete time).

Models are plain frozen dataclasses built either programmatically or from the
JSON model format (:func:`load_model`).  Dynamics are restricted to polynomial
expressions plus ``norm_inf(x)``; jump targets and initial densities are
finite mixtures of uniform distributions over boxes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .expr import Expr, ExprError, constant, parse_expr

__all__ = [
    "Box",
    "DensityPiece",
    "KernelEntry",
    "WeightPiece",
    "HybridModelCT",
    "HybridModelDT",
    "ModelError",
    "PointOutsideDomain",
    "UndefinedKernel",
    "validate_model",
    "eval_dynamics",
    "sample_jump_target",
    "load_model",
    "model_from_dict",
    "density_mass",
]


class ModelError(ValueError):
    """Malformed model description."""


class PointOutsideDomain(ValueError):
    """A point lies outside the closed flow box of its mode."""


class UndefinedKernel(LookupError):
    """No jump-kernel entry applies at the requested source state."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]``; coordinates may be floats or Fractions."""

    lo: tuple
    hi: tuple

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self):
        v = 1
        for a, b in zip(self.lo, self.hi):
            v = v * (b - a)
        return v

    def contains(self, x, tol: float = 0.0) -> bool:
        return all(a - tol <= xi <= b + tol for a, xi, b in zip(self.lo, x, self.hi))

    def intersect(self, other: "Box") -> "Box | None":
        lo = tuple(max(a, c) for a, c in zip(self.lo, other.lo))
        hi = tuple(min(b, d) for b, d in zip(self.hi, other.hi))
        if any(h < l for l, h in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def overlap_volume(self, other: "Box"):
        v = 1
        for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi):
            w = min(b, d) - max(a, c)
            if w <= 0:
                return 0 * v
            v = v * w
        return v

    def as_dict(self) -> dict:
        return {"lo": [_num_out(v) for v in self.lo], "hi": [_num_out(v) for v in self.hi]}


@dataclass(frozen=True)
class DensityPiece:
    """Probability ``weight`` spread uniformly over ``box`` in ``mode``."""

    mode: str
    box: Box
    weight: Any


@dataclass(frozen=True)
class WeightPiece:
    """Observable weight ``coef`` on ``box`` in ``mode`` (the weight function is the sum of pieces)."""

    mode: str
    box: Box
    coef: Any


@dataclass(frozen=True)
class KernelEntry:
    """One branch of a jump kernel.

    ``region`` selects spontaneous-jump sources (``None`` means the whole flow
    box); ``boundary`` selects forced-jump sources as ``(axis, side)`` faces.
    Exactly one of the two is used.  The target is uniform over ``target_box``
    in ``to_mode``; a degenerate box is a point mass.
    """

    from_mode: str
    to_mode: str
    target_box: Box
    weight: float
    region: Box | None = None
    boundary: tuple[tuple[int, str], ...] | None = None

    @property
    def forced(self) -> bool:
        return self.boundary is not None


@dataclass(frozen=True)
class HybridModelCT:
    modes: tuple[str, ...]
    dimension: int
    flow_domains: dict[str, Box]
    drift: dict[str, tuple[Expr, ...]]
    diffusion: dict[str, tuple[tuple[Expr, ...], ...]]
    jump_rate: dict[str, Expr]
    jump_kernel: tuple[KernelEntry, ...]
    initial_density: tuple[DensityPiece, ...]
    observables: dict[str, tuple[WeightPiece, ...]] = field(default_factory=dict)
    name: str = ""

    kind = "ct"

    def mode_index(self, mode) -> int:
        return self.modes.index(str(mode))


@dataclass(frozen=True)
class HybridModelDT:
    """Discrete-time model.

    ``transition`` is ``("identity",)``, ``("uniform", entries)`` with region
    entries, or ``("euler", step, base)`` where ``base`` is a
    :class:`HybridModelCT` discretised by one Euler step.
    """

    modes: tuple[str, ...]
    dimension: int
    flow_domains: dict[str, Box]
    transition: tuple
    initial_density: tuple[DensityPiece, ...]
    contractivity: float | None = None
    observables: dict[str, tuple[WeightPiece, ...]] = field(default_factory=dict)
    name: str = ""

    kind = "dt"

    def mode_index(self, mode) -> int:
        return self.modes.index(str(mode))


# --------------------------------------------------------------------------- validation


def density_mass(pieces: Sequence[DensityPiece]):
    return sum((p.weight for p in pieces), 0)


def _kernel_weight_problems(model, entries, where: str) -> list[str]:
    problems = []
    for mode in model.modes:
        box = model.flow_domains[mode]
        spont = [e for e in entries if e.from_mode == mode and not e.forced]
        if spont:
            for pt in _probe_points(box):
                total = sum(e.weight for e in spont if e.region is None or e.region.contains(pt))
                if total and abs(total - 1) > 1e-9:
                    problems.append(f"{where} weights from mode {mode} sum to {total} at {tuple(pt)}, not 1")
                    break
        for axis in range(model.dimension):
            for side in ("lo", "hi"):
                total = sum(
                    e.weight for e in entries
                    if e.from_mode == mode and e.forced and (axis, side) in e.boundary
                )
                if total and abs(total - 1) > 1e-9:
                    problems.append(
                        f"{where} boundary weights for mode {mode} face {axis}/{side} sum to {total}, not 1"
                    )
    for e in entries:
        if e.weight < 0:
            problems.append(f"{where} entry {e.from_mode}->{e.to_mode} has negative weight")
        if e.to_mode not in model.flow_domains:
            problems.append(f"{where} entry targets unknown mode {e.to_mode}")
            continue
        dom = model.flow_domains[e.to_mode]
        if not dom.contains(e.target_box.lo, 1e-12) or not dom.contains(e.target_box.hi, 1e-12):
            problems.append(f"{where} target box of {e.from_mode}->{e.to_mode} leaves the flow domain")
    return problems


def _probe_points(box: Box, per_axis: int = 3) -> np.ndarray:
    axes = [np.linspace(float(a), float(b), per_axis + 2)[1:-1] for a, b in zip(box.lo, box.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def validate_model(model) -> list[str]:
    """Return the violated invariants of ``model``; an empty list means well formed."""
    problems: list[str] = []
    for mode in model.modes:
        box = model.flow_domains.get(mode)
        if box is None:
            problems.append(f"mode {mode} has no flow domain")
            continue
        if box.dim != model.dimension:
            problems.append(f"flow domain of mode {mode} has dimension {box.dim}, expected {model.dimension}")
        if any(not np.isfinite(float(v)) for v in box.lo + box.hi):
            problems.append(f"flow domain of mode {mode} is unbounded")
        if any(b <= a for a, b in zip(box.lo, box.hi)):
            problems.append(f"flow domain of mode {mode} is empty")
    if problems:
        return problems

    for p in model.initial_density:
        if p.mode not in model.flow_domains:
            problems.append(f"initial density piece in unknown mode {p.mode}")
        elif not model.flow_domains[p.mode].contains(p.box.lo, 1e-12) or not model.flow_domains[
            p.mode
        ].contains(p.box.hi, 1e-12):
            problems.append(f"initial density piece leaves the flow domain of mode {p.mode}")
        if p.weight < 0:
            problems.append("initial density has a negative piece")
        if p.box.volume <= 0 and p.weight > 0:
            problems.append("initial density piece has zero volume")
    mass = float(density_mass(model.initial_density))
    if abs(mass - 1.0) > 1e-9:
        problems.append(f"initial density not normalized (total mass {mass})")

    for name, pieces in model.observables.items():
        for wp in pieces:
            if wp.mode not in model.flow_domains:
                problems.append(f"observable {name} references unknown mode {wp.mode}")

    if isinstance(model, HybridModelCT):
        for mode in model.modes:
            box = model.flow_domains[mode]
            if len(model.drift.get(mode, ())) != model.dimension:
                problems.append(f"drift of mode {mode} must have {model.dimension} components")
            g = model.diffusion.get(mode, ())
            if len(g) != model.dimension or any(len(row) != model.dimension for row in g):
                problems.append(f"diffusion of mode {mode} must be {model.dimension}x{model.dimension}")
            rate = model.jump_rate.get(mode)
            if rate is not None:
                try:
                    vals = rate(_probe_points(box, 5))
                except ExprError as exc:
                    problems.append(f"jump rate of mode {mode}: {exc}")
                else:
                    if np.any(vals < 0):
                        problems.append(f"negative jump rate in mode {mode}")
        problems += _kernel_weight_problems(model, model.jump_kernel, "jump kernel")
    else:
        kind = model.transition[0]
        if kind == "uniform":
            entries = model.transition[1]
            problems += _kernel_weight_problems(model, entries, "transition kernel")
            for mode in model.modes:
                own = [e for e in entries if e.from_mode == mode]
                for pt in _probe_points(model.flow_domains[mode]):
                    total = sum(e.weight for e in own if e.region is None or e.region.contains(pt))
                    if abs(total - 1) > 1e-9:
                        problems.append(f"transition kernel from mode {mode} does not integrate to 1")
                        break
        elif kind == "euler":
            problems += validate_model(model.transition[2])
        elif kind != "identity":
            problems.append(f"unsupported transition kernel {kind!r}")
        if model.contractivity is not None and not 0 < model.contractivity < 1:
            problems.append("contractivity must lie strictly inside (0, 1)")
    return problems


# --------------------------------------------------------------------------- evaluation


def eval_dynamics(model: HybridModelCT, mode, x):
    """Pointwise drift vector, diffusion matrix and spontaneous jump rate."""
    mode = str(mode)
    box = model.flow_domains[mode]
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.dimension or not box.contains(x):
        raise PointOutsideDomain(f"point {tuple(x)} is outside the flow box of mode {mode}")
    pt = x[None, :]
    f = np.array([e(pt)[0] for e in model.drift[mode]])
    g = np.array([[e(pt)[0] for e in row] for row in model.diffusion[mode]])
    rate = model.jump_rate.get(mode)
    r = float(rate(pt)[0]) if rate is not None else 0.0
    return f, g, r


def _on_faces(box: Box, x, tol: float) -> list[tuple[int, str]]:
    faces = []
    for k, (a, b) in enumerate(zip(box.lo, box.hi)):
        if abs(x[k] - float(a)) <= tol:
            faces.append((k, "lo"))
        if abs(x[k] - float(b)) <= tol:
            faces.append((k, "hi"))
    return faces


def sample_jump_target(model, mode, x, rng: np.random.Generator, tol: float = 1e-12):
    """Draw a jump target ``(mode', x')`` for a jump taken at ``(mode, x)``.

    Points on the flow-box boundary use forced-jump entries; interior points use
    spontaneous-jump entries.  Consumes exactly two uniforms plus one per axis.
    """
    mode = str(mode)
    x = np.asarray(x, dtype=float).reshape(-1)
    entries = model.jump_kernel if isinstance(model, HybridModelCT) else model.transition[1]
    box = model.flow_domains[mode]
    faces = _on_faces(box, x, tol)
    if faces:
        cands = [e for e in entries if e.from_mode == mode and e.forced and set(faces) & set(e.boundary)]
    else:
        cands = [
            e for e in entries
            if e.from_mode == mode and not e.forced and (e.region is None or e.region.contains(x))
        ]
    if not cands:
        raise UndefinedKernel(f"no jump kernel entry applies at mode {mode}, x={tuple(x)}")
    w = np.array([e.weight for e in cands], dtype=float)
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(w) / w.sum(), u, side="right"))
    e = cands[min(idx, len(cands) - 1)]
    lo = np.array(e.target_box.lo, dtype=float)
    hi = np.array(e.target_box.hi, dtype=float)
    return e.to_mode, lo + (hi - lo) * rng.random(lo.size)


# --------------------------------------------------------------------------- JSON format


def _num(v):
    """Parse a JSON number or a rational string such as ``"1/3"`` (kept exact)."""
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return v


def _num_out(v):
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else str(v)
    return v


def _box(d, fallback: Box | None = None) -> Box | None:
    if d in (None, "all"):
        return fallback
    lo = tuple(_num(v) for v in d["lo"])
    hi = tuple(_num(v) for v in d["hi"])
    if len(lo) != len(hi):
        raise ModelError("box lo/hi lengths differ")
    return Box(lo, hi)


def _faces(spec, dim: int):
    if spec == "all":
        return tuple((k, s) for k in range(dim) for s in ("lo", "hi"))
    if isinstance(spec, dict):
        spec = [spec]
    return tuple((int(f["axis"]), str(f["side"])) for f in spec)


def _kernel_entries(items, dim) -> tuple[KernelEntry, ...]:
    out = []
    for it in items:
        boundary = _faces(it["boundary"], dim) if "boundary" in it else None
        out.append(
            KernelEntry(
                from_mode=str(it["from_mode"]),
                to_mode=str(it["to_mode"]),
                target_box=_box(it["target_box"]),
                weight=float(_num(it.get("weight", 1.0))),
                region=None if boundary is not None else _box(it.get("region", "all")),
                boundary=boundary,
            )
        )
    return tuple(out)


def _per_mode_vector(spec, modes, dim):
    out = {}
    for m in modes:
        v = spec.get(m, ["0"] * dim) if isinstance(spec, dict) else spec
        if not isinstance(v, list):
            v = [v]
        out[m] = tuple(parse_expr(e) for e in v)
    return out


def _per_mode_matrix(spec, modes, dim):
    out = {}
    for m in modes:
        v = spec.get(m, "0") if isinstance(spec, dict) else spec
        if not isinstance(v, list):
            rows = [[v if i == j else "0" for j in range(dim)] for i in range(dim)]
        elif v and not isinstance(v[0], list):
            rows = [[v[i] if i == j else "0" for j in range(dim)] for i in range(dim)]
        else:
            rows = v
        out[m] = tuple(tuple(parse_expr(e) for e in row) for row in rows)
    return out


def model_from_dict(doc: dict):
    """Build a model from the JSON document structure."""
    try:
        modes = tuple(str(m) for m in doc["modes"])
        dim = int(doc["dimension"])
        domains = {str(k): _box(v) for k, v in doc["flow_domains"].items()}
        init = tuple(
            DensityPiece(str(p["mode"]), _box(p.get("box", "all"), domains.get(str(p["mode"]))), _num(p["weight"]))
            for p in doc["initial_density"]
        )
        observables = {
            name: tuple(
                WeightPiece(str(p["mode"]), _box(p.get("box", "all"), domains.get(str(p["mode"]))),
                            _num(p.get("weight", 1)))
                for p in pieces
            )
            for name, pieces in doc.get("observables", {}).items()
        }
        kind = doc.get("kind", "ct")
        if kind == "ct":
            return HybridModelCT(
                modes=modes,
                dimension=dim,
                flow_domains=domains,
                drift=_per_mode_vector(doc.get("drift", {}), modes, dim),
                diffusion=_per_mode_matrix(doc.get("diffusion", {}), modes, dim),
                jump_rate={m: parse_expr(doc.get("jump_rate", {}).get(m, "0")) for m in modes},
                jump_kernel=_kernel_entries(doc.get("jump_kernel", []), dim),
                initial_density=init,
                observables=observables,
                name=doc.get("name", ""),
            )
        if kind == "dt":
            tk = doc["transition_kernel"]
            ttype = tk["type"]
            if ttype == "identity":
                transition = ("identity",)
            elif ttype == "uniform":
                transition = ("uniform", _kernel_entries(tk["entries"], dim))
            elif ttype == "euler":
                base = dict(doc, kind="ct")
                transition = ("euler", float(tk["step"]), model_from_dict(base))
            else:
                raise ModelError(f"unknown transition kernel type {ttype!r}")
            alpha = doc.get("contractivity")
            return HybridModelDT(
                modes=modes,
                dimension=dim,
                flow_domains=domains,
                transition=transition,
                initial_density=init,
                contractivity=None if alpha is None else float(alpha),
                observables=observables,
                name=doc.get("name", ""),
            )
        raise ModelError(f"unknown model kind {kind!r}")
    except KeyError as exc:
        raise ModelError(f"missing key {exc.args[0]!r}") from exc
    except ExprError as exc:
        raise ModelError(str(exc)) from exc


def load_model(path):
    """Load a model JSON file.  Malformed JSON raises :class:`json.JSONDecodeError`."""
    text = Path(path).read_text()
    return model_from_dict(json.loads(text))
