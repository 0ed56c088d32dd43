import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from shyver import reduction as red
from shyver.casestudy import CaseStudy
from shyver.markov import (
    ChainError,
    ImplicitChain,
    MarkovChain,
    dtmc_sample,
    dtmc_samples,
    estimate_invariant,
    exact_samples,
    spawn_rngs,
    ssa_sample,
    ssa_samples,
    stationary_birth_death,
    transient_distribution,
)
from tests.helpers import tv
from tests.oracles import two_mode_steady

SYM = MarkovChain("ct", [[-1.0, 1.0], [1.0, -1.0]], [1.0, 0.0])


def random_ct(n, rng, density=0.3):
    a = rng.exponential(1.0, (n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(a, 0.0)
    a[np.arange(n), (np.arange(n) + 1) % n] += 0.5  # keep it irreducible
    np.fill_diagonal(a, -a.sum(axis=1))
    return MarkovChain("ct", a, rng.dirichlet(np.ones(n)))


def hist(states, n):
    return np.bincount(np.asarray(states, dtype=np.int64).ravel(), minlength=n) / np.size(states)


# --------------------------------------------------------------------------- transient analysis


def test_two_state_closed_form():
    p = transient_distribution(SYM, 1.0)
    e = math.exp(-2)
    np.testing.assert_allclose(p, [0.5 * (1 + e), 0.5 * (1 - e)], atol=1e-9)
    assert p[0] == pytest.approx(0.5677, abs=1e-4)


def test_two_state_long_run():
    np.testing.assert_allclose(transient_distribution(SYM, 200.0), [0.5, 0.5], atol=1e-9)


def test_time_zero_returns_initial(rng):
    chain = random_ct(7, rng)
    np.testing.assert_allclose(transient_distribution(chain, 0.0), chain.initial)


def test_transient_output_is_a_distribution(rng):
    chain = random_ct(30, rng)
    for t in (0.01, 0.7, 30.0):
        p = transient_distribution(chain, t)
        assert p.min() >= 0 and abs(p.sum() - 1) < 1e-9


# --------------------------------------------------------------------------- SSA


def test_absorbing_state():
    chain = MarkovChain("ct", [[0.0]], [1.0])
    g = spawn_rngs(0, 1)[0]
    assert all(ssa_sample(chain, t, g) == 0 for t in (0.0, 1.0, 1e6))


def test_symmetric_chain_balances():
    g = spawn_rngs(1, 1)[0]
    x = ssa_samples(SYM, [50.0], 10_000, g)
    assert abs(x.mean() - 0.5) < 0.02


def test_three_state_ssa_matches_uniformisation():
    a = np.array([[-2.0, 1.5, 0.5], [0.3, -0.8, 0.5], [1.0, 2.0, -3.0]])
    chain = MarkovChain("ct", a, [1.0, 0.0, 0.0])
    g = spawn_rngs(2, 1)[0]
    x = ssa_samples(chain, [0.7], 100_000, g)
    assert tv(hist(x, 3), transient_distribution(chain, 0.7)) < 0.01


@pytest.mark.parametrize("n", [20, 100])
def test_sampler_consistency(n):
    g = np.random.default_rng(n)
    chain = random_ct(n, g)
    times = [0.0, 0.5, 1.0, 5.0]
    x = ssa_samples(chain, times, 100_000, spawn_rngs(n, 1)[0])
    for k, t in enumerate(times):
        assert tv(hist(x[:, k], n), transient_distribution(chain, t)) < 0.02


def test_exact_samples_follow_transient(rng):
    chain = random_ct(10, rng)
    x = exact_samples(chain, [0.3, 2.0], 100_000, rng)
    for k, t in enumerate((0.3, 2.0)):
        assert tv(hist(x[:, k], 10), transient_distribution(chain, t)) < 0.02


def test_seed_determinism(rng):
    chain = random_ct(12, rng)
    a = ssa_samples(chain, [0.5, 1.0], 500, spawn_rngs(9, 1, 3)[0])
    b = ssa_samples(chain, [0.5, 1.0], 500, spawn_rngs(9, 1, 3)[0])
    c = ssa_samples(chain, [0.5, 1.0], 500, spawn_rngs(9, 1, 4)[0])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_unsorted_times_rejected():
    with pytest.raises(ChainError):
        ssa_samples(SYM, [1.0, 0.5], 3, spawn_rngs(0, 1)[0])


# --------------------------------------------------------------------------- DT sampling


def test_identity_dtmc_keeps_initial_law():
    p0 = np.array([0.2, 0.5, 0.3])
    chain = MarkovChain("dt", np.eye(3), p0)
    x = dtmc_samples(chain, [0, 3, 10], 50_000, spawn_rngs(4, 1)[0])
    for k in range(3):
        assert tv(hist(x[:, k], 3), p0) < 0.01


def test_swap_chain_alternates():
    chain = MarkovChain("dt", [[0.0, 1.0], [1.0, 0.0]], [1.0, 0.0])
    g = spawn_rngs(5, 1)[0]
    assert all(dtmc_sample(chain, t, g) == 1 for t in (1, 3, 7))
    assert all(dtmc_sample(chain, t, g) == 0 for t in (0, 2, 8))


def test_dtmc_matches_matrix_power():
    g = np.random.default_rng(11)
    p = g.dirichlet(np.ones(5), size=5)
    chain = MarkovChain("dt", p, np.eye(5)[0])
    x = dtmc_samples(chain, [8], 100_000, spawn_rngs(6, 1)[0])
    exact = np.linalg.matrix_power(p, 8)[0]
    assert tv(hist(x, 5), exact) < 0.01
    np.testing.assert_allclose(transient_distribution(chain, 8), exact, atol=1e-12)


# --------------------------------------------------------------------------- invariants


def test_two_mode_invariant_matches_steady_state(two_mode):
    gaps = []
    for n in (30, 60):
        chain = red.reduce_ct(two_mode, red.build_grid_partition(two_mode, Fraction(1, n)))
        est = estimate_invariant(chain, 0.05)
        assert abs(est.vector.sum() - 1) < 1e-12
        gaps.append(tv(est.vector, two_mode_steady.cell_masses(n)))
    assert gaps[0] < 0.005 and gaps[1] < gaps[0]


def test_doubly_stochastic_invariant_is_uniform():
    g = np.random.default_rng(3)
    perms = [np.eye(6)[g.permutation(6)] for _ in range(4)]
    w = g.dirichlet(np.ones(4))
    chain = MarkovChain("dt", sum(wi * pm for wi, pm in zip(w, perms)), np.eye(6)[0])
    for method in ("solve", "power"):
        est = estimate_invariant(chain, 0.01, method=method)
        assert np.abs(est.vector - 1 / 6).sum() < 0.01 / 3


def test_casestudy_mode_marginal_is_birth_death():
    cs = CaseStudy(n=2)
    m = cs.m
    gen = sp.lil_matrix((m, m))
    for j in range(m):
        for (*_, k), rate in cs.transitions((0, 0, j)):
            if k != j:
                gen[j, k] += rate
                gen[j, j] -= rate
    est = estimate_invariant(MarkovChain("ct", gen.tocsr(), np.eye(m)[0]))
    ratio = cs.lam_up / cs.lam_down
    expect = ratio ** np.arange(m) / (ratio ** np.arange(m)).sum()
    np.testing.assert_allclose(est.vector, expect, atol=1e-12)
    np.testing.assert_allclose(stationary_birth_death(cs.lam_up, cs.lam_down, m), expect)
    np.testing.assert_allclose(cs.mode_invariant(), expect)


def test_implicit_chain_needs_analytic_invariant():
    chain = CaseStudy(n=2, eta=2).chain()
    with pytest.raises(ChainError):
        estimate_invariant(chain)


# --------------------------------------------------------------------------- implicit chains


def test_codec_handles_huge_state_spaces():
    imp = ImplicitChain(radices=(20,) * 40 + (4,), transitions=lambda s: [], sample_initial=lambda g: (0,) * 41)
    assert imp.state_count == 4 * 20 ** 40 > 4.39e52
    state = tuple(range(20)) * 2 + (3,)
    assert imp.decode(imp.encode(state)) == state
    with pytest.raises(ChainError):
        imp.encode((20,) + (0,) * 40)


def test_implicit_rates_below_declared_bound():
    cs = CaseStudy(n=3, eta=3)
    bound = cs.rate_bound()
    g = np.random.default_rng(0)
    for _ in range(500):
        state = tuple(int(v) for v in g.integers(0, cs.ncell, cs.n)) + (int(g.integers(cs.m)),)
        assert sum(r for _, r in cs.transitions(state)) <= bound


def test_implicit_ssa_trajectory():
    chain = CaseStudy(n=2, eta=2).chain()
    x = ssa_samples(chain, [0.0, 1.0, 10.0], 5, spawn_rngs(0, 1)[0])
    assert x.shape == (5, 3)
    assert all(len(s) == 3 for s in x.ravel())
