import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpprocure.agents import Population, draw_population
from dpprocure.contracts import build_contract
from dpprocure.distributions import DiscreteDist, Exponential, Uniform
from dpprocure.mechanism import (
    InfeasibleError,
    MechanismParams,
    accuracy_bound,
    c_for_epsilon,
    expected_total_payment,
    flatten_multiattr,
    params_for_accuracy,
    params_for_budget,
    run_mechanism,
    simulate_batch,
)

TWO_TYPES = [Uniform(0, 1), Uniform(0, 2)]


def _setup(c=0.5, eps=0.5, dists=TWO_TYPES):
    return build_contract(dists, c, eps), MechanismParams(eps, c)


def test_noiseless_full_sample_is_exact():
    dists = [DiscreteDist.degenerate(0.0), DiscreteDist.degenerate(0.0)]
    ct, params = build_contract(dists, 1.0, 0.8), MechanismParams(0.8, 1.0, noise_off=True)
    pop = draw_population([1] * 7 + [2] * 5, dists, 0)
    out = run_mechanism(pop, ct, params, seed=3)
    assert out.estimate_s_hat == 7.0 and out.m == 7
    assert np.all(out.accepted)
    assert np.allclose(out.payments, 0.8 * 0.0)


def test_noiseless_payments_equal_eps_alpha():
    ct = build_contract([Uniform(0, 1), Uniform(0, 1)], 1.0, 0.5)
    params = MechanismParams(0.5, 1.0, noise_off=True)
    pop = Population(np.array([1, 1, 2]), np.zeros(3), 2)
    out = run_mechanism(pop, ct, params, seed=1)
    assert np.allclose(out.payments, 0.5 * 1.0)
    assert out.estimate_s_hat == 2.0


def test_outcome_invariants_and_determinism():
    ct, params = _setup()
    pop = draw_population([1] * 30 + [2] * 30, TWO_TYPES, 2)
    a = run_mechanism(pop, ct, params, seed=99)
    b = run_mechanism(pop, ct, params, seed=99)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert a.estimate_s_hat == min(max(a.raw_s, 0.0), 60)
    assert np.all(a.payments[~a.accepted] == 0.0)
    assert a.m == int(np.sum(a.accepted & (pop.database == 1))) <= a.accepted.sum() <= 60
    assert run_mechanism(pop, ct, params, seed=100).raw_s != a.raw_s


def test_compatibility_errors():
    ct, params = _setup()
    pop = draw_population([1, 1, 1], [Uniform(0, 1)], 0)
    with pytest.raises(ValueError):
        run_mechanism(pop, ct, params, 0)
    pop2 = draw_population([1, 2], TWO_TYPES, 0)
    with pytest.raises(ValueError):
        run_mechanism(pop2, ct, MechanismParams(0.7, 0.5), 0)
    with pytest.raises(ValueError):
        MechanismParams(0.0, 0.5)
    with pytest.raises(ValueError):
        MechanismParams(1.0, 0.0)


def test_truncation_holds_for_small_populations():
    ct, params = _setup(c=0.2, eps=0.1)
    res = simulate_batch([1, 2, 2], TWO_TYPES, ct, params, 5000, 4)
    assert np.all((res.s_hat >= 0) & (res.s_hat <= 3))
    assert np.any(res.raw_s < 0) and np.any(res.raw_s > 3)
    assert np.array_equal(res.s_hat, np.clip(res.raw_s, 0, 3))


def test_zero_span_payments_are_noiseless():
    ct, params = _setup(dists=[Uniform(0, 1), Uniform(0, 1)])
    assert ct.gamma == 0
    res = simulate_batch([1, 2, 1, 2], [Uniform(0, 1), Uniform(0, 1)], ct, params, 500, 3, track="all")
    paid = np.concatenate([res.tracked[i]["payment"][res.tracked[i]["accepted"]] for i in range(4)])
    assert np.allclose(paid, 0.5 * 0.5)


def test_raw_estimate_is_unbiased():
    ct, params = _setup()
    n1, R = 100, 4000
    res = simulate_batch([1] * n1 + [2] * 100, TWO_TYPES, ct, params, R, 12)
    sigma = math.sqrt(n1 * 0.25 + 2 / 0.25) / 0.5
    assert abs(res.raw_s.mean() - n1) <= 3 * sigma / math.sqrt(R)


def test_accepted_payment_mean():
    dists = [Uniform(0, 1), DiscreteDist((1, 3), (0.4, 0.6))]
    ct, params = build_contract(dists, 0.5, 1.0), MechanismParams(1.0, 0.5)
    res = simulate_batch([1, 2], dists, ct, params, 40_000, 6, track=[0, 1])
    offer = ct.offers[2]
    # given acceptance, each price branch is weighted by how often it is accepted
    w_hi, w_lo = offer.beta * offer.c_hi, (1 - offer.beta) * offer.c_lo
    targets = {0: ct.offers[1].alpha, 1: (w_hi * offer.alpha_hi + w_lo * offer.alpha_lo) / (w_hi + w_lo)}
    for i, target in targets.items():
        col = res.tracked[i]
        paid = col["payment"][col["accepted"]]
        ci = 3 * paid.std(ddof=1) / math.sqrt(len(paid))
        assert abs(paid.mean() - params.epsilon * target) <= ci


def test_unconditional_payment_is_c_eps_mean_alpha_for_randomized_offer():
    dist = DiscreteDist((1, 3), (0.4, 0.6))
    ct, params = build_contract([dist], 0.5, 1.0), MechanismParams(1.0, 0.5)
    res = simulate_batch([1, 1], [dist], ct, params, 40_000, 7, track=[0])
    p = res.tracked[0]["payment"]
    offer = ct.offers[1]
    expected = (1 - offer.beta) * offer.c_lo * offer.alpha_lo + offer.beta * offer.c_hi * offer.alpha_hi
    assert abs(p.mean() - expected) <= 3 * p.std() / math.sqrt(len(p))


def test_batch_strategy_coupling_leaves_other_streams_alone():
    ct, params = _setup()
    from dpprocure.agents import Strategy

    a = simulate_batch([1, 2, 1], TWO_TYPES, ct, params, 100, 5, track=[0, 1])
    b = simulate_batch([1, 2, 1], TWO_TYPES, ct, params, 100, 5, track=[0, 1], strategies={0: Strategy.always_reject()})
    assert np.array_equal(a.tracked[1]["payment"], b.tracked[1]["payment"])
    assert not np.any(b.tracked[0]["accepted"])


def test_accuracy_bound_examples():
    assert accuracy_bound(100, 0.5, 1.0) == pytest.approx(18.0, abs=1e-12)
    assert accuracy_bound(400, 0.5, 0.5) == pytest.approx(36.0, abs=1e-12)
    assert accuracy_bound(1000, 1.0, 1e9) < 1e-6
    with pytest.raises(ValueError):
        accuracy_bound(10, 0.0, 1.0)


def test_params_for_accuracy_examples():
    c, eps = params_for_accuracy(60, 600)
    assert c == pytest.approx(0.5, abs=1e-12)
    assert eps == pytest.approx(4 * math.sqrt(3) / 60, abs=1e-12)
    c_small, _ = params_for_accuracy(1e-3, 10**6)
    assert c_small == pytest.approx(1.0, abs=1e-9)


@given(k=st.floats(0.5, 500), n=st.integers(1, 10**6))
@settings(max_examples=400, deadline=None)
def test_params_for_accuracy_meets_k(k, n):
    c, eps = params_for_accuracy(k, n)
    assert 0 < c <= 1
    for n1 in (0, n // 2, n):
        assert accuracy_bound(n1, c, eps) <= k


def test_budget_formula_examples():
    assert c_for_epsilon(1.0, 100) == pytest.approx((1 + math.sqrt(0.92)) / 2, abs=1e-12)
    assert c_for_epsilon(1.0, 100) == pytest.approx(0.97958, abs=1e-5)
    budget = 1.0 * 100 * (1 + math.sqrt(1 - 8 / 100)) / 2
    c, eps = params_for_budget(budget, 100, 1.0)
    assert eps == pytest.approx(1.0, abs=1e-6)
    assert abs(expected_total_payment(eps, 100, 1.0) - budget) <= 1e-6 * budget
    assert c_for_epsilon(1.0, 10**12) == pytest.approx(1.0, abs=1e-9)


@given(eps=st.floats(0.3, 20), n=st.integers(100, 10**6), alpha=st.floats(0.01, 100))
@settings(max_examples=100, deadline=None)
def test_budget_round_trip(eps, n, alpha):
    budget = alpha * n * (eps + math.sqrt(eps**2 - 8 / n)) / 2
    c, got = params_for_budget(budget, n, alpha)
    assert got == pytest.approx(eps, rel=1e-6)
    assert abs(got * alpha * c * n - budget) <= 1e-6 * budget


def test_budget_infeasible():
    with pytest.raises(InfeasibleError):
        params_for_budget(1.0 * math.sqrt(200), 100, 1.0)
    with pytest.raises(InfeasibleError):
        c_for_epsilon(0.1, 100)


def test_flatten_examples():
    assert flatten_multiattr((1, 1), 3) == 1
    assert flatten_multiattr((2, 3), 3) == 8
    with pytest.raises(ValueError):
        flatten_multiattr((0, 1), 3)
    with pytest.raises(ValueError):
        flatten_multiattr((4, 1), 3)


def test_flatten_bijection_brute_force():
    for h in range(1, 5):
        for d in range(1, 5):
            codes = [flatten_multiattr(r, h) for r in itertools.product(range(1, h + 1), repeat=d)]
            assert sorted(codes) == list(range(1, h**d + 1))


@given(h=st.integers(2, 9), record=st.lists(st.integers(1, 9), min_size=1, max_size=6))
def test_flatten_decodes_back(h, record):
    record = [min(a, h) for a in record]
    code = flatten_multiattr(record, h) - 1
    decoded = []
    for _ in record:
        decoded.append(code % h + 1)
        code //= h
    assert decoded == record and code == 0


def test_batch_exposes_type_counts():
    dists = [Uniform(0, 1), Exponential(1.0)]
    ct, params = build_contract(dists, 0.3, 1.0), MechanismParams(1.0, 0.3)
    res = simulate_batch([1] * 20 + [2] * 20, dists, ct, params, 300, 8)
    assert res.accepted_by_type.shape == (300, 2)
    assert np.array_equal(res.accepted_by_type[:, 0], res.m)
    assert np.array_equal(res.accepted_by_type.sum(axis=1), res.n_accepted)
