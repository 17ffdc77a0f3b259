import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpprocure.agents import Strategy, decide, draw_costs
from dpprocure.contracts import (
    Contract,
    Deterministic,
    Randomized,
    build_contract,
    realize_offer,
    realize_offers,
)
from dpprocure.distributions import DiscreteDist, Exponential, OracleDist, PiecewiseDensity, Uniform


def test_identical_types_have_zero_span():
    ct = build_contract([Uniform(0, 1), Uniform(0, 1)], 0.5, 1.0)
    assert ct.offers[1] == Deterministic(0.5)
    assert ct.offers[2] == Deterministic(0.5)
    assert ct.gamma == 0.0


def test_discrete_randomized_offer():
    ct = build_contract([DiscreteDist((1, 3), (0.4, 0.6))], 0.5, 1.0)
    offer = ct.offers[1]
    assert isinstance(offer, Randomized)
    assert (offer.alpha_lo, offer.alpha_hi) == (1.0, 3.0)
    assert offer.beta == pytest.approx(1 / 6, abs=1e-12)
    assert offer.acceptance == pytest.approx(0.5, abs=1e-9)
    assert ct.gamma == pytest.approx(2.0)


def test_heterogeneous_uniforms():
    ct = build_contract([Uniform(0, 1), Uniform(0, 2)], 0.5, 1.0)
    assert ct.offers[1].alpha == pytest.approx(0.5)
    assert ct.offers[2].alpha == pytest.approx(1.0)
    assert ct.gamma == pytest.approx(0.5)


def test_deterministic_offers_hit_c():
    dists = [Uniform(0, 1), Exponential(2.0), PiecewiseDensity((0, 0.5, 1), (0.2, 1.8))]
    for c in (0.1, 0.37, 0.5, 0.9):
        ct = build_contract(dists, c, 1.0)
        for j, dist in enumerate(dists, start=1):
            assert abs(dist.cdf(ct.offers[j].alpha) - c) <= 1e-9


def test_oracle_offers_are_randomized():
    ct = build_contract([OracleDist(Uniform(0, 2), 0.0, 2.0, delta=1e-3)], 0.25, 1.0)
    offer = ct.offers[1]
    assert isinstance(offer, Randomized)
    assert offer.alpha_hi - offer.alpha_lo < 1e-3
    assert offer.acceptance == pytest.approx(0.25, abs=1e-9)


def test_null_lower_offer_for_single_atom():
    ct = build_contract([DiscreteDist.degenerate(2.0), Uniform(0, 4)], 0.5, 1.0)
    offer = ct.offers[1]
    assert offer.alpha_lo is None and offer.alpha_hi == 2.0
    assert offer.beta == pytest.approx(0.5)
    # the null branch never pays, so the span uses the real offers only
    assert ct.gamma == pytest.approx(0.0)
    lo, hi, beta = ct.arrays()
    assert math.isnan(lo[0]) and hi[0] == 2.0


def test_contract_validation():
    with pytest.raises(ValueError):
        build_contract([Uniform(0, 1)], 0.0, 1.0)
    with pytest.raises(ValueError):
        build_contract([Uniform(0, 1)], 1.2, 1.0)
    with pytest.raises(ValueError):
        build_contract([Uniform(0, 1)], 0.5, 0.0)
    with pytest.raises(ValueError):
        Contract({1: Deterministic(0.2), 2: Deterministic(0.8)}, 0.5, 0.1, 1.0)
    with pytest.raises(ValueError):
        Contract({2: Deterministic(0.2)}, 0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        Randomized(None, 1.0, 0.5, 0.2, 0.8)


def test_full_sample_contract():
    ct = build_contract([DiscreteDist.degenerate(0.0)], 1.0, 1.0)
    assert ct.offers[1] == Deterministic(0.0)


def test_realize_offer_examples():
    rng = np.random.default_rng(0)
    assert realize_offer(Deterministic(0.5), rng) == 0.5
    zero_beta = Randomized(1.0, 3.0, 0.0, 0.4, 1.0)
    assert all(realize_offer(zero_beta, rng) == 1.0 for _ in range(100))
    offer = Randomized(1.0, 3.0, 1 / 6, 0.4, 1.0)
    ct = Contract({1: offer}, 0.5, 2.0, 1.0)
    draws = realize_offers(ct, np.ones(600_000, dtype=int), rng)
    assert abs(np.mean(draws == 3.0) - 1 / 6) < 0.003


def test_realize_offers_uses_one_uniform_per_entry():
    ct_a = build_contract([Uniform(0, 1)], 0.5, 1.0)
    ct_b = build_contract([DiscreteDist((1, 3), (0.4, 0.6))], 0.5, 1.0)
    g1, g2 = np.random.default_rng(4), np.random.default_rng(4)
    realize_offers(ct_a, np.ones(10, int), g1)
    realize_offers(ct_b, np.ones(10, int), g2)
    assert g1.random() == g2.random()


@given(
    atoms=st.lists(st.floats(0, 10), min_size=1, max_size=5, unique=True),
    weights=st.lists(st.floats(0.05, 1.0), min_size=5, max_size=5),
    c=st.floats(0.01, 0.99),
)
@settings(max_examples=80, deadline=None)
def test_randomized_offer_acceptance_is_exact(atoms, weights, c):
    atoms = sorted(atoms)
    w = np.array(weights[: len(atoms)])
    dist = DiscreteDist(tuple(atoms), tuple(w / w.sum()))
    ct = build_contract([dist], c, 1.0)
    offer = ct.offers[1]
    if isinstance(offer, Randomized):
        assert offer.c_lo < c < offer.c_hi
        assert abs(offer.c_lo + offer.beta * (offer.c_hi - offer.c_lo) - c) <= 1e-9
    else:
        assert abs(dist.cdf(offer.alpha) - c) <= 1e-9
    assert ct.gamma >= 0


def test_acceptance_rate_per_type_matches_c():
    dists = [Uniform(0, 1), DiscreteDist((1, 3), (0.4, 0.6)), DiscreteDist.degenerate(2.0)]
    ct = build_contract(dists, 0.5, 1.0)
    rng = np.random.default_rng(21)
    n = 100_000
    database = np.repeat([1, 2, 3], n)
    costs = draw_costs(database, dists, rng)
    offers = realize_offers(ct, database, rng)
    acc = decide(Strategy.truthful(), offers, costs)
    for j in (1, 2, 3):
        assert abs(acc[database == j].mean() - 0.5) <= 0.005


def test_to_dict_is_json_ready():
    import json

    ct = build_contract([DiscreteDist.degenerate(2.0), Uniform(0, 4)], 0.5, 1.0)
    blob = json.loads(json.dumps(ct.to_dict()))
    assert blob["offers"]["1"]["alpha_lo"] is None
    assert blob["c"] == 0.5
