"""Model builders and closed-form references shared by the tests."""

import json

import numpy as np

from shyver import data_path
from shyver.model import model_from_dict


def heat_doc(drift="0", diffusion="1"):
    doc = json.loads(data_path("heat.json").read_text())
    doc["drift"] = {"1": [drift]}
    doc["diffusion"] = {"1": diffusion}
    return doc


def heat_model(**kw):
    return model_from_dict(heat_doc(**kw))


def analytic_heat_masses(edges, t, terms=400):
    """Cell masses of the reflected heat solution started uniform on [0, 1/2].

    The density is ``F = Σ a_k e^{-(kπ)² t/2} cos(kπx)`` with ``a_0 = 1`` and
    ``a_k = 4 sin(kπ/2)/(kπ)``; integrating each cosine term over a cell is exact.
    """
    edges = np.asarray(edges, dtype=float)
    k = np.arange(1, terms + 1)[:, None]
    a = 4 * np.sin(k * np.pi / 2) / (k * np.pi)
    decay = np.exp(-((k * np.pi) ** 2) * t / 2)
    prim = (a * decay * np.sin(k * np.pi * edges[None, :]) / (k * np.pi)).sum(axis=0)
    return np.diff(edges) + np.diff(prim)


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def casestudy_model_doc(cs) -> dict:
    """The case-study system written in the model-file format (drift only, no diffusion)."""
    n, m = cs.n, cs.m
    modes = [str(j) for j in range(m)]
    box = {"lo": [-cs.K] * n, "hi": [cs.K] * n}
    drift = {}
    for j in range(m):
        rows = []
        for k in range(n):
            terms = [f"({float(cs.A[j, k, l])!r})*x[{l}]" for l in range(n)]
            terms.append(f"({float(cs.c[j])!r})*norm_inf(x)*x[{k}]")
            rows.append(" + ".join(terms))
        drift[str(j)] = rows
    kernel, rates = [], {}
    for j in range(m):
        moves = []
        if j > 0:
            moves.append((j - 1, cs.lam_down))
        if j < m - 1:
            moves.append((j + 1, cs.lam_up))
        total = sum(r for _, r in moves)
        rates[str(j)] = repr(float(total))
        for to, r in moves:
            kernel.append({"from_mode": str(j), "region": "all", "to_mode": str(to), "target_box": box,
                           "weight": r / total})
    return {
        "kind": "ct",
        "modes": modes,
        "dimension": n,
        "flow_domains": {q: box for q in modes},
        "drift": drift,
        "diffusion": {q: "0" for q in modes},
        "jump_rate": rates,
        "jump_kernel": kernel,
        "initial_density": [{"mode": q, "box": box, "weight": f"1/{m}"} for q in modes],
    }


def box_doc(lo, hi):
    return {"lo": list(lo), "hi": list(hi)}


def plane_model(modes=2):
    """Drift-diffusion on unit squares (one per mode) with uniform jumps between modes."""
    names = [str(q) for q in range(1, modes + 1)]
    sq = box_doc(["0", "0"], ["1", "1"])
    return model_from_dict({
        "kind": "ct",
        "modes": names,
        "dimension": 2,
        "flow_domains": {q: box_doc([f"{i}", "0"], [f"{i + 1}", "1"]) for i, q in enumerate(names)},
        "drift": {q: ["x[1]", "-1/2"] for q in names},
        "diffusion": {q: [["1/2", "0"], ["0", "1/4"]] for q in names},
        "jump_rate": {q: "1" for q in names},
        "jump_kernel": [{"from_mode": q, "region": "all", "to_mode": names[(i + 1) % modes],
                         "target_box": box_doc([f"{(i + 1) % modes}", "0"], [f"{(i + 1) % modes + 1}", "1"]),
                         "weight": 1} for i, q in enumerate(names)],
        "initial_density": [{"mode": names[0], "box": sq, "weight": 1}],
    })


def partition_zoo():
    """Ten partitions of differing dimension, mode count and pitch."""
    from fractions import Fraction

    from shyver.model import load_model
    from shyver.reduction import build_grid_partition

    two_mode = load_model(data_path("two_mode.json"))
    heat = load_model(data_path("heat.json"))
    cases = [
        (two_mode, Fraction(1, 30)), (two_mode, Fraction(1, 7)), (two_mode, Fraction(1, 1)),
        (heat, Fraction(1, 20)), (heat, Fraction(1, 64)), (heat, Fraction(1, 3)),
        (plane_model(1), Fraction(1, 4)), (plane_model(2), Fraction(1, 5)),
        (plane_model(3), Fraction(1, 8)), (plane_model(2), Fraction(1, 2)),
    ]
    return [build_grid_partition(m, pitch) for m, pitch in cases]
