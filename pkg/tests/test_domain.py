import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortfall import (
    Allocation,
    DomainError,
    FeasibilityError,
    InvalidInstanceError,
    KnownInstance,
    Linear,
    Log1p,
    PiecewiseConstantPrior,
    PiecewiseLinearConcave,
    Sqrt,
    TruncatedExponentialPrior,
    UniformPrior,
    UnknownInstance,
    eval_cost,
    validate_instance,
)
from shortfall.domain import ensure_valid, cost_from_dict, prior_from_dict
from shortfall.quadrature import integrate

PL = PiecewiseLinearConcave(((0, 0), (1, 1), (3, 2)))
COSTS = [Linear(2.0), Sqrt(1.5), Log1p(0.7), PL]
PRIORS = [
    UniformPrior(1.0, 2.0),
    UniformPrior(0.0, 1.0),
    TruncatedExponentialPrior(1.0, 3.0, 1.3),
    TruncatedExponentialPrior(0.0, 2.0, 0.01),
    PiecewiseConstantPrior((0.5, 1.0, 2.0), (1.2, 0.4)),
]


def test_eval_cost_examples():
    assert eval_cost(Linear(2.0), 0.0) == 0.0
    assert eval_cost(Sqrt(1.0), 4.0) == 2.0
    assert eval_cost(PL, 2.0) == pytest.approx(1.5, abs=1e-15)


def test_cost_families_evaluate_as_documented():
    x = np.array([0.0, 0.5, 2.0, 7.0])
    np.testing.assert_allclose(Log1p(2.0)(x), 2.0 * np.log1p(x))
    np.testing.assert_allclose(Sqrt(3.0)(x), 3.0 * np.sqrt(x))
    # beyond the last breakpoint the last slope continues
    assert PL(5.0) == pytest.approx(3.0)


def test_negative_shortfall_rejected():
    with pytest.raises(DomainError):
        eval_cost(Linear(1.0), -0.1)


@pytest.mark.parametrize("cost", COSTS, ids=lambda c: c.kind)
@given(x=st.floats(0, 50), y=st.floats(0, 50), lam=st.floats(0, 1))
def test_concavity_on_sampled_triples(cost, x, y, lam):
    lhs = cost(lam * x + (1 - lam) * y)
    rhs = lam * cost(x) + (1 - lam) * cost(y)
    assert lhs >= rhs - 1e-12 * max(1.0, abs(rhs))


@pytest.mark.parametrize("cost", COSTS, ids=lambda c: c.kind)
@given(x=st.floats(0, 50), y=st.floats(0, 50))
def test_monotone_and_zero_at_origin(cost, x, y):
    assert cost(0.0) == 0.0
    lo, hi = min(x, y), max(x, y)
    assert cost(lo) <= cost(hi)


@pytest.mark.parametrize("prior", PRIORS, ids=repr)
def test_priors_integrate_to_one(prior):
    assert integrate(prior.pdf, prior.lo, prior.hi, points=prior.kinks()) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("prior", PRIORS, ids=repr)
def test_prior_pdf_non_increasing_and_sampler_in_support(prior):
    f = np.linspace(prior.lo, prior.hi, 500)
    assert np.all(np.diff(prior.pdf(f)) <= 1e-12)
    draws = prior.sample(np.random.default_rng(1), 10_000)
    assert draws.min() >= prior.lo and draws.max() <= prior.hi
    assert abs(draws.mean() - prior.mean()) < 0.05


def test_prior_means_against_quadrature():
    for prior in PRIORS:
        m = integrate(lambda f: f * prior.pdf(f), prior.lo, prior.hi, points=prior.kinks())
        assert prior.mean() == pytest.approx(m, abs=1e-9)


def test_valid_instance_has_empty_report():
    inst = KnownInstance((Linear(1.0), Sqrt(1.0)), [1.0, 2.0], 2.0)
    assert validate_instance(inst) == []


def test_nonzero_origin_reported():
    bad = PiecewiseLinearConcave(((0, 0.5), (1, 1)))
    inst = KnownInstance((bad,), [1.0], 1.0)
    assert any("V(0) != 0" in p for p in validate_instance(inst))


def test_degenerate_support_reported():
    inst = UnknownInstance((Linear(1.0),), (UniformPrior(1.0, 1.0),), 1.0)
    assert any("support must satisfy a < b" in p for p in validate_instance(inst))


def test_convex_piecewise_cost_rejected():
    convex = PiecewiseLinearConcave(((0, 0), (1, 1), (2, 3)))
    inst = KnownInstance((convex,), [1.0], 1.0)
    report = validate_instance(inst)
    assert any("non-increasing" in p for p in report)
    with pytest.raises(InvalidInstanceError):
        ensure_valid(inst)


def test_increasing_prior_rejected():
    inst = UnknownInstance((Linear(1.0),), (PiecewiseConstantPrior((0.0, 1.0, 2.0), (0.2, 0.8)),), 1.0)
    assert any("non-increasing" in p for p in validate_instance(inst))


def test_known_instance_checks_budget_and_rates():
    report = validate_instance(KnownInstance((Linear(1.0), Linear(1.0)), [0.0, 1.0], -1.0))
    assert "budget must be positive" in report
    assert any(p.startswith("users[0].mean_rate") for p in report)


def test_symmetric_instance_with_different_priors_rejected():
    inst = UnknownInstance((Linear(1.0),) * 2, (UniformPrior(1, 2), UniformPrior(1, 3)), 2.0, symmetric=True)
    assert any("identical priors" in p for p in validate_instance(inst))


def test_thorough_and_fast_validation_agree_on_families():
    bad = KnownInstance((Linear(-1.0), Sqrt(2.0)), [1.0, 1.0], 1.0)
    assert validate_instance(bad, thorough=False)
    assert validate_instance(bad, thorough=True)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.floats(0, 100))
def test_accepted_allocation_is_feasible(rates, budget):
    alloc = Allocation(rates, budget)
    if not alloc.problems():
        assert np.all(alloc.rates >= 0)
        assert math.fsum(rates) <= budget + 1e-9
    else:
        with pytest.raises(FeasibilityError):
            alloc.check()


@pytest.mark.parametrize("cost", COSTS, ids=lambda c: c.kind)
def test_cost_dict_round_trip(cost):
    assert cost_from_dict(cost.to_dict()) == cost


@pytest.mark.parametrize("prior", PRIORS, ids=repr)
def test_prior_dict_round_trip(prior):
    assert prior_from_dict(prior.to_dict()) == prior


def test_unknown_kind_and_keys_rejected():
    with pytest.raises(ValueError, match="unknown cost kind"):
        cost_from_dict({"kind": "cubic", "scale": 1})
    with pytest.raises(ValueError):
        cost_from_dict({"kind": "linear", "slope": 1, "scale": 2})
    with pytest.raises(ValueError, match="unknown prior kind"):
        prior_from_dict({"kind": "normal"})
