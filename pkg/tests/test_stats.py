import io
import json
from collections import Counter

import numpy as np
import pytest

from shyver.markov import MarkovChain, transient_distribution
from shyver.stats import (
    DistributionSampler,
    HorizonCapExceeded,
    StatParams,
    StatsError,
    UnboundedSample,
    alg0,
    closeness_sample_size,
    closeness_test,
    duration_of_simulation,
    sequential_mean_test,
    sprt_bernoulli,
)

TRIALS = 500


def bernoulli(theta):
    return lambda rng, size: rng.random(size) < theta


def signed(mean):
    # ±1 samples with the given mean
    p = (1 + mean) / 2
    return lambda rng, size: np.where(rng.random(size) < p, 1.0, -1.0)


def tally(test, sampler, c, params, seed):
    rng = np.random.default_rng(seed)
    return Counter(test(sampler, c, params, rng)[0] for _ in range(TRIALS))


# --------------------------------------------------------------------------- SPRT


def test_sprt_constant_true():
    v, cert = sprt_bernoulli(lambda r, s: np.ones(s, bool), 0.5, StatParams(delta=0.05), np.random.default_rng(0))
    assert v == "Yes" and cert.samples >= 1


def test_sprt_clear_yes():
    out = tally(sprt_bernoulli, bernoulli(0.6), 0.5, StatParams(0.01, 0.01, 0.05), 1)
    assert out["Yes"] >= 0.99 * TRIALS


def test_sprt_inside_indifference_terminates():
    v, cert = sprt_bernoulli(bernoulli(0.525), 0.5, StatParams(0.05, 0.05, 0.05), np.random.default_rng(2))
    assert v in ("Yes", "No", "Unknown") and 0 < cert.samples < 10 ** 6


@pytest.mark.parametrize("c", [0.2, 0.5, 0.8])
def test_sprt_calibration(c):
    a = g = d = 0.05
    params = StatParams(a, g, d)
    at_c = tally(sprt_bernoulli, bernoulli(c), c, params, 10)  # θ = c: Yes is wrong
    assert at_c["Yes"] <= (a + 0.02) * TRIALS
    above = tally(sprt_bernoulli, bernoulli(c + 1.2 * d), c, params, 11)
    assert above["No"] <= (a + 0.02) * TRIALS and above["Unknown"] <= (g + 0.02) * TRIALS
    below = tally(sprt_bernoulli, bernoulli(c - 1.2 * d), c, params, 12)
    assert below["Yes"] <= (a + 0.02) * TRIALS and below["Unknown"] <= (g + 0.02) * TRIALS


def test_sprt_thresholds_outside_unit_interval():
    rng = np.random.default_rng(0)
    assert sprt_bernoulli(bernoulli(0.5), 1.0, StatParams(), rng)[0] == "No"
    assert sprt_bernoulli(bernoulli(0.5), -0.1, StatParams(), rng)[0] == "Yes"
    v, cert = sprt_bernoulli(bernoulli(0.99), 0.97, StatParams(delta=0.05), rng)
    assert any("clip" in n for n in cert.notes)


def test_sprt_trace_is_ndjson():
    buf = io.StringIO()
    sprt_bernoulli(bernoulli(0.9), 0.5, StatParams(delta=0.1), np.random.default_rng(0), trace=buf)
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert rows and {"test", "n", "llr"} <= set(rows[0])


# --------------------------------------------------------------------------- Chow-Robbins


def test_mean_test_constant():
    v, _ = sequential_mean_test(lambda r, s: np.full(s, 0.8), 0.5, StatParams(), np.random.default_rng(0))
    assert v == "Yes"


def test_mean_test_symmetric_signs():
    out = tally(sequential_mean_test, signed(0.0), 0.5, StatParams(0.01, 0.01, 0.1), 3)
    assert out["No"] >= 0.99 * TRIALS


def test_mean_test_straddle_terminates():
    v, cert = sequential_mean_test(signed(0.5), 0.5, StatParams(delta=0.1), np.random.default_rng(4))
    assert cert.samples >= 30


@pytest.mark.parametrize("c", [-0.4, 0.0, 0.4])
def test_mean_test_calibration(c):
    a = g = 0.05
    d = 0.1
    params = StatParams(a, g, d)
    at_c = tally(sequential_mean_test, signed(c), c, params, 20)
    assert at_c["Yes"] <= (a + 0.02) * TRIALS and at_c["No"] <= (a + 0.02) * TRIALS
    above = tally(sequential_mean_test, signed(c + 1.2 * d), c, params, 21)
    assert above["No"] <= (a + 0.02) * TRIALS and above["Unknown"] <= (g + 0.02) * TRIALS
    below = tally(sequential_mean_test, signed(c - 1.2 * d), c, params, 22)
    assert below["Yes"] <= (a + 0.02) * TRIALS and below["Unknown"] <= (g + 0.02) * TRIALS


def test_mean_test_rejects_unbounded_samples():
    with pytest.raises(UnboundedSample):
        sequential_mean_test(lambda r, s: np.full(s, 1.5), 0.5, StatParams(), np.random.default_rng(0))


def test_alg0_dispatch():
    rng = np.random.default_rng(0)
    assert alg0(bernoulli(1.0), 0.5, StatParams(), rng)[1].test == "sprt"
    assert alg0(signed(1.0), 0.5, StatParams(), rng, binary=False)[1].test == "chow-robbins"


# --------------------------------------------------------------------------- closeness


def test_closeness_identical_accepts():
    rng = np.random.default_rng(5)
    u = DistributionSampler(np.full(100, 0.01))
    acc = sum(closeness_test(u, u, 100, 0.1, 0.3, rng)[0] == "Accept" for _ in range(200))
    assert acc >= 0.9 * 200


def test_closeness_point_masses_reject():
    rng = np.random.default_rng(6)
    e0, e1 = DistributionSampler(np.eye(100)[0]), DistributionSampler(np.eye(100)[1])
    rej = sum(closeness_test(e0, e1, 100, 0.1, 0.3, rng)[0] == "Reject" for _ in range(200))
    assert rej >= 0.9 * 200


def test_closeness_small_perturbation_accepts():
    rng = np.random.default_rng(7)
    p = np.full(100, 0.01)
    q = p.copy()
    q[0] += 0.0005
    q[1] -= 0.0005
    assert np.abs(p - q).sum() == pytest.approx(0.001)
    sp, sq = DistributionSampler(p), DistributionSampler(q)
    acc = sum(closeness_test(sp, sq, 100, 0.1, 0.3, rng)[0] == "Accept" for _ in range(200))
    assert acc >= 0.9 * 200


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_closeness_calibration_across_sizes(n):
    rng = np.random.default_rng(n)
    alpha, delta = 0.1, 0.3
    p = rng.dirichlet(np.ones(n))
    far = rng.dirichlet(np.ones(n))
    while np.abs(p - far).sum() <= 1.2 * delta:
        far = rng.dirichlet(np.ones(n))
    same, other = DistributionSampler(p), DistributionSampler(far)
    runs = 50
    acc = sum(closeness_test(same, same, n, alpha, delta, rng)[0] == "Accept" for _ in range(runs))
    rej = sum(closeness_test(same, other, n, alpha, delta, rng)[0] == "Reject" for _ in range(runs))
    assert acc >= (1 - alpha) * runs and rej >= (1 - alpha) * runs


def test_closeness_sample_count_matches_formula():
    m = closeness_sample_size(100, 0.1, 0.3)
    expect = 16 * 100 ** (2 / 3) * 0.3 ** (-8 / 3) * np.log(100 / 0.1)
    assert m == int(np.ceil(expect))
    u = DistributionSampler(np.full(100, 0.01))
    _, cert = closeness_test(u, u, 100, 0.1, 0.3, np.random.default_rng(0))
    assert cert.samples == 4 * m and cert.stages["m"] == m


def test_closeness_raw_samplers_and_support_check():
    rng = np.random.default_rng(0)
    uni = lambda r, s: r.integers(0, 10, s)  # noqa: E731
    assert closeness_test(uni, uni, 10, 0.1, 0.3, rng)[0] == "Accept"
    with pytest.raises(StatsError):
        closeness_test(DistributionSampler(np.ones(5)), uni, 10, 0.1, 0.3, rng)
    with pytest.raises(StatsError):
        closeness_test(lambda r, s: np.full(s, 12), uni, 10, 0.1, 0.3, rng)


# --------------------------------------------------------------------------- horizon truncation

SYM = MarkovChain("ct", [[-1.0, 1.0], [1.0, -1.0]], [1.0, 0.0])
HALF = DistributionSampler([0.5, 0.5])


def at_time(chain):
    return lambda t: DistributionSampler(transient_distribution(chain, t))


def test_duration_starting_at_invariant():
    rng = np.random.default_rng(8)
    chain = MarkovChain("ct", [[-1.0, 1.0], [1.0, -1.0]], [0.5, 0.5])
    hits = sum(duration_of_simulation(at_time(chain), HALF, 2, 0.1, 0.3, rng)[0] == 2 for _ in range(50))
    assert hits >= 0.9 * 50


def test_duration_doubling_schedule_and_accuracy():
    T, cert = duration_of_simulation(at_time(SYM), HALF, 2, 0.1, 0.3, np.random.default_rng(9))
    ts = [row["t"] for row in cert.stages["tested"]]
    assert ts == [2.0 ** k for k in range(len(ts))]
    assert [row["alpha"] for row in cert.stages["tested"]] == [0.05 / 2 ** k for k in range(len(ts))]
    assert T == ts[-1] + 1
    assert np.abs(transient_distribution(SYM, T) - 0.5).sum() < 0.3 / 3


def test_duration_slow_chain_records_sequence():
    slow = MarkovChain("ct", [[-0.05, 0.05], [0.05, -0.05]], [1.0, 0.0])
    T, cert = duration_of_simulation(at_time(slow), HALF, 2, 0.1, 0.3, np.random.default_rng(10))
    ts = [row["t"] for row in cert.stages["tested"]]
    assert ts[:3] == [1.0, 2.0, 4.0] and len(ts) >= 4
    assert np.abs(transient_distribution(slow, T) - 0.5).sum() < 0.1
    assert cert.stages["achieved_alpha"] < 0.1


def test_duration_cap():
    frozen = MarkovChain("ct", [[0.0, 0.0], [0.0, 0.0]], [1.0, 0.0])
    with pytest.raises(HorizonCapExceeded) as info:
        duration_of_simulation(at_time(frozen), HALF, 2, 0.1, 0.3, np.random.default_rng(0), horizon_cap=8)
    assert [row["t"] for row in info.value.certificate.stages["tested"]] == [1.0, 2.0, 4.0, 8.0]


# --------------------------------------------------------------------------- bookkeeping


def test_determinism():
    for test, sampler in ((sprt_bernoulli, bernoulli(0.55)), (sequential_mean_test, signed(0.3))):
        a = test(sampler, 0.5, StatParams(), np.random.default_rng(42))
        b = test(sampler, 0.5, StatParams(), np.random.default_rng(42))
        assert a[0] == b[0] and a[1].samples == b[1].samples


def test_budget_split_multiplies_back():
    p = StatParams(0.05, 0.03, 0.1, 0.2)
    for k in (1, 3, 7, 12):
        q = p.split(k)
        assert abs(q.alpha * k - p.alpha) < 1e-12 and abs(q.gamma * k - p.gamma) < 1e-12
        assert q.delta == p.delta and q.delta_prime == p.delta_prime


@pytest.mark.parametrize("field", ["alpha", "gamma", "delta", "delta_prime"])
def test_params_must_lie_in_unit_interval(field):
    with pytest.raises(StatsError):
        StatParams(**{field: 1.0})


def test_certificate_ndjson():
    _, cert = sprt_bernoulli(bernoulli(0.9), 0.5, StatParams(), np.random.default_rng(0), seed=7)
    row = json.loads(cert.ndjson())
    assert row["verdict"] == "Yes" and row["seed"] == 7 and row["samples"] == cert.samples
