"""Piecewise-linear jump system under a nonlinear perturbation.

Mode ``j`` (0-based) has continuous dynamics ``dx/dt = (A_j + c_j ‖x‖∞) x`` on
``[-K, K]^n``; the mode drops to ``j-1`` at rate ``λ1`` and rises to ``j+1``
at rate ``λ2``.  The grid reduction with pitch ``1/η`` gives ``m (2ηK)^n``
states, far too many to store, so the reduced chain is implicit: states are
integer tuples ``(i_1, ..., i_n, j)`` and transitions are enumerated on demand.
The observable ``w`` indicates that exactly two coordinates lie at distance
at least ``K/2`` from the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .markov import ImplicitChain, MarkovChain, stationary_birth_death

__all__ = ["CaseStudy", "random_hurwitz", "load_casestudy", "is_casestudy_doc"]


def random_hurwitz(n: int, m: int, seed: int = 0, off_scale: float = 0.2) -> np.ndarray:
    """``m`` matrices ``-(D + E)`` with ``D = diag U[0.6, 1.4]`` and small ``E >= 0``.

    Off-diagonal row sums stay below 0.2, so every matrix is strictly
    diagonally dominant with negative diagonal, hence Hurwitz, and all entries
    are non-positive.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    out = np.empty((m, n, n))
    for j in range(m):
        d = rng.uniform(0.6, 1.4, size=n)
        e = rng.uniform(0.0, off_scale / max(n - 1, 1), size=(n, n))
        np.fill_diagonal(e, 0.0)
        out[j] = -(np.diag(d) + e)
    return out


@dataclass
class CaseStudy:
    n: int
    eta: int = 10
    m: int = 4
    K: int = 1
    lam_down: float = 0.03
    lam_up: float = 0.02
    c: tuple = (0.1, 0.2, 0.3, 0.4)
    seed: int = 0
    A: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.c) != self.m:
            raise ValueError(f"need {self.m} perturbation coefficients, got {len(self.c)}")
        if self.A is None:
            self.A = random_hurwitz(self.n, self.m, self.seed)
        self.A = np.ascontiguousarray(self.A, dtype=float)
        if self.A.shape != (self.m, self.n, self.n):
            raise ValueError("A must have shape (m, n, n)")
        if np.any(self.A > 0):
            raise ValueError("dynamics matrices must be entrywise non-positive")

    # ------------------------------------------------------------------ geometry
    @property
    def ncell(self) -> int:
        return 2 * self.eta * self.K

    @property
    def width(self) -> float:
        return 1.0 / self.eta

    @property
    def state_count(self) -> int:
        return self.m * self.ncell ** self.n

    def far_cells(self) -> np.ndarray:
        """Per-axis cell flags: 1 where every point has ``|x| >= K/2``."""
        lo = -self.K + np.arange(self.ncell) * self.width
        hi = lo + self.width
        tol = 1e-12
        return ((lo >= self.K / 2 - tol) | (hi <= -self.K / 2 + tol)).astype(np.int8)

    def drift(self, j: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.A[j] @ x + self.c[j] * np.max(np.abs(x)) * x

    # ------------------------------------------------------------------ chain
    def face_rates(self, cell, j: int) -> list[float]:
        """Rates ``[down_0, up_0, down_1, up_1, ...]`` of the coordinate moves."""
        cell = [int(v) for v in cell]
        y = [-self.K + (v + 0.5) * self.width for v in cell]
        from ._pycore import _face_rates

        return _face_rates(self.A, list(self.c), j, self.n, cell, y, self.width, self.ncell)

    def transitions(self, state) -> list:
        *cell, j = (int(v) for v in state)
        out = []
        if j > 0:
            out.append((tuple(cell) + (j - 1,), self.lam_down))
        if j < self.m - 1:
            out.append((tuple(cell) + (j + 1,), self.lam_up))
        for idx, rate in enumerate(self.face_rates(cell, j)):
            if rate > 0:
                k, up = divmod(idx, 2)
                nxt = list(cell)
                nxt[k] += 1 if up else -1
                out.append((tuple(nxt) + (j,), rate))
        return out

    def sample_initial(self, rng: np.random.Generator, size: int | None = None):
        cells = rng.integers(0, self.ncell, size=(1 if size is None else size, self.n))
        modes = rng.integers(0, self.m, size=1 if size is None else size)
        if size is None:
            return tuple(int(v) for v in cells[0]) + (int(modes[0]),)
        return cells.astype(np.int64), modes.astype(np.int64)

    def rate_bound(self) -> float:
        """Upper bound on the total exit rate of any state."""
        drift = np.abs(self.A).sum(axis=2) + np.asarray(self.c)[:, None]
        return float(self.n * 2 * drift.max() * self.K / self.width + self.lam_down + self.lam_up)

    def h_bound(self) -> float:
        """Bound on ``|d/dt E[w]|``: at most ``n`` coordinates can cross a ``±K/2`` face at once."""
        drift = np.abs(self.A).sum(axis=2) + np.asarray(self.c)[:, None]
        return float(self.n * drift.max() * self.K / self.width)

    def chain(self) -> MarkovChain:
        imp = ImplicitChain(
            radices=(self.ncell,) * self.n + (self.m,),
            transitions=self.transitions,
            sample_initial=lambda rng: self.sample_initial(rng),
            lambda_max=self.rate_bound(),
        )
        return MarkovChain("ct", implicit=imp, meta=self.descriptor())

    def mode_invariant(self) -> np.ndarray:
        """Stationary mode marginal of the birth-death mode process, ``∝ (λ2/λ1)^j``."""
        return stationary_birth_death(self.lam_up, self.lam_down, self.m)

    def initial_w(self) -> float:
        """``E[w]`` at time 0 under the uniform initial cell distribution."""
        q = float(self.far_cells().mean())
        return float(self.n * (self.n - 1) / 2 * q * q * (1 - q) ** (self.n - 2))

    # ------------------------------------------------------------------ sampling
    def simulate(self, times, size: int, rng: np.random.Generator, backend: str | None = None):
        """Trajectories from the uniform initial law observed at ``times``.

        Returns ``(w, modes, events, rate_evaluations)`` from the simulation kernel.
        """
        cells, modes = self.sample_initial(rng, size)
        return kernels.get(backend).casestudy_run(
            self.A, np.asarray(self.c, dtype=float), float(self.lam_down), float(self.lam_up),
            int(self.ncell), float(self.width), np.ascontiguousarray(cells), np.ascontiguousarray(modes),
            np.ascontiguousarray(np.asarray(times, dtype=float)), self.far_cells(), rng,
        )

    # ------------------------------------------------------------------ files
    def descriptor(self) -> dict:
        return {
            "kind": "casestudy",
            "n": self.n,
            "eta": self.eta,
            "m": self.m,
            "K": self.K,
            "lambda1": self.lam_down,
            "lambda2": self.lam_up,
            "c": list(self.c),
            "seed": self.seed,
            "state_count": str(self.state_count),
            "state_count_float": float(self.state_count),
            "implicit": True,
            "matrices": self.A.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CaseStudy":
        a = doc.get("matrices")
        return cls(
            n=int(doc["n"]),
            eta=int(doc.get("eta", 10)),
            m=int(doc.get("m", 4)),
            K=int(doc.get("K", 1)),
            lam_down=float(doc.get("lambda1", 0.03)),
            lam_up=float(doc.get("lambda2", 0.02)),
            c=tuple(float(v) for v in doc.get("c", (0.1, 0.2, 0.3, 0.4))),
            seed=int(doc.get("seed", 0)),
            A=None if a is None else np.asarray(a, dtype=float),
        )


def is_casestudy_doc(doc) -> bool:
    return isinstance(doc, dict) and doc.get("kind") == "casestudy"


def load_casestudy(path) -> CaseStudy:
    return CaseStudy.from_dict(json.loads(Path(path).read_text()))
