import numpy as np
import pytest

from shortfall import Allocation, DomainError, FeasibilityError, PreconditionError, run, stability_trace, step
from shortfall.simulator import (
    BernoulliConsumption,
    ConstantAvailability,
    CyclostationaryAvailability,
    DeterministicConsumption,
    IidUniformAvailability,
    UniformConsumption,
    batch_stderr,
)


def test_step_examples():
    assert step(0.0, 1.0, 2.0) == (0.0, 1.0)
    assert step(3.0, 0.0, 1.0) == (2.0, 0.0)
    assert step(4.0, 3.0, 1.0, B=5.0) == (5.0, 0.0)


def test_step_cap_discards_excess_supply():
    q, k = step(1.0, 3.0, 1.0, B=2.0)
    assert (q, k) == (2.0, 0.0)
    # the discarded unit is not available in the next slot
    assert step(q, 0.0, 2.5, B=2.0) == (0.0, 0.5)


def test_step_rejects_negative_inputs():
    with pytest.raises(DomainError):
        step(-1.0, 0.0, 0.0)


def test_step_matches_kernel_path():
    rng = np.random.default_rng(3)
    S, F = rng.uniform(0, 2, 200), rng.uniform(0, 2, 200)
    users = [DeterministicConsumption(1.0)]
    q = 0.0
    ks = []
    for s, f in zip(S, F):
        q, k = step(q, s, f, B=1.5)
        ks.append(k)
    from shortfall._backend import get_kernels
    qp, kp = np.empty(200), np.empty(200)
    final = get_kernels().queue_path(S, F, 1.5, 0.0, qp, kp)
    assert final == q
    np.testing.assert_array_equal(kp, ks)
    assert users[0].mean == 1.0


def test_deterministic_steady_state():
    res = run([DeterministicConsumption(1.0), DeterministicConsumption(2.0)], ConstantAvailability(2.0),
              Allocation([1.0, 0.5], 2.0), 1000)
    np.testing.assert_array_equal(res.mean_shortfall, [0.0, 1.5])
    np.testing.assert_array_equal(res.shortfall_stderr, [0.0, 0.0])


def test_exact_service_keeps_queue_empty():
    res = run([DeterministicConsumption(1.0)], ConstantAvailability(1.0), Allocation([1.0], 1.0), 500)
    assert res.mean_shortfall[0] == 0.0 and res.max_queue[0] == 0.0


def test_bernoulli_shortfall_law():
    res = run([BernoulliConsumption(2.0, 0.5)], ConstantAvailability(0.5), Allocation([0.5], 0.5),
              1_000_000, seed=7)
    assert abs(res.mean_shortfall[0] - 0.5) <= 3 * res.shortfall_stderr[0]


def test_reproducible_and_streams_independent():
    users = [BernoulliConsumption(2.0, 0.5), UniformConsumption(0.0, 2.0)]
    avail = IidUniformAvailability(1.0, 3.0)
    pol = Allocation([0.8, 1.0], 2.0)
    a = run(users, avail, pol, 20_000, seed=3)
    b = run(users, avail, pol, 20_000, seed=3)
    for k, v in a.to_dict().items():
        assert v == b.to_dict()[k]
    # adding a third user does not change the first two users' consumption draws
    c = run(users + [DeterministicConsumption(1.0)], avail, Allocation([0.8, 1.0, 0.0], 2.0), 20_000, seed=3)
    np.testing.assert_array_equal(a.mean_consumption, c.mean_consumption[:2])


def test_per_slot_feasibility_under_random_availability():
    users = [UniformConsumption(0.0, 2.0)] * 3
    res = run(users, CyclostationaryAvailability((1.0, 4.0, 2.5), 0.5), Allocation([0.7, 0.9, 0.9], 2.5),
              50_000, seed=1)
    assert res.max_overallocation <= 0.0


def test_oversupply_drives_shortfall_to_zero_and_queue_up():
    res = run([UniformConsumption(0.0, 2.0)], ConstantAvailability(1.5), Allocation([1.5], 1.5), 200_000)
    assert res.mean_shortfall[0] < 1e-3
    assert res.final_queue[0] > 0.4 * 200_000 * 0.5


def test_finite_buffer_keeps_shortfall_positive_with_oversupply():
    res = run([BernoulliConsumption(4.0, 0.25)], ConstantAvailability(1.2), Allocation([1.2], 1.2),
              200_000, B=2.0, seed=2)
    assert res.mean_shortfall[0] > 0.0
    assert res.max_queue[0] <= 2.0


def test_run_errors():
    users = [DeterministicConsumption(1.0)]
    with pytest.raises(PreconditionError):
        run(users, ConstantAvailability(1.0), Allocation([1.0], 1.0), 0)
    with pytest.raises(FeasibilityError):
        run(users, ConstantAvailability(1.0), Allocation([2.0], 2.0), 10)


def test_trace_file(tmp_path):
    path = tmp_path / "trace.csv"
    run([DeterministicConsumption(1.0)], ConstantAvailability(2.0), Allocation([0.5], 2.0), 5, trace_path=path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,c,S_0,F_0,Q_0,kappa_0"
    assert lines[1] == "1,2,0.5,1,0,0.5"
    assert len(lines) == 6


def test_dissatisfaction_reported_with_costs():
    from shortfall import Linear
    res = run([DeterministicConsumption(2.0)], ConstantAvailability(1.0), Allocation([1.0], 1.0), 10,
              costs=[Linear(3.0)])
    assert res.dissatisfaction[0] == 3.0 and res.normalized_dissatisfaction == 3.0


def test_stability_examples():
    det = stability_trace(DeterministicConsumption(1.0), 0.5, 10_000)
    assert np.all(det.queue_ratio == 0.0)
    bern = stability_trace(BernoulliConsumption(2.0, 0.5), 0.5, 1_000_000, seed=4)
    assert bern.final_ratio <= 0.01
    close = stability_trace(BernoulliConsumption(2.0, 0.5), 0.9, 1_000_000, seed=4)
    assert close.zero_queue_slots >= 1 and close.final_ratio <= 0.01


def test_stability_preconditions():
    with pytest.raises(PreconditionError):
        stability_trace(DeterministicConsumption(1.0), 1.0, 10_000)
    with pytest.raises(PreconditionError):
        stability_trace(DeterministicConsumption(1.0), 0.5, 10)


def test_batch_stderr_of_constant_is_zero():
    assert batch_stderr(np.ones(1000)) == 0.0
    x = np.random.default_rng(0).normal(size=100_000)
    assert batch_stderr(x) == pytest.approx(1 / np.sqrt(100_000), rel=0.3)


def test_full_service_bias_shrinks_like_inverse_sqrt_horizon():
    # s = f: the reflected driftless walk leaves an average shortfall of order sd/sqrt(T)
    proc = UniformConsumption(0.0, 2.0)
    means = {}
    for T in (10_000, 1_000_000):
        vals = [run([proc], ConstantAvailability(1.0), Allocation([1.0], 1.0), T, seed=s).mean_shortfall[0]
                for s in range(8)]
        means[T] = float(np.mean(vals))
        sd = 2 / np.sqrt(12)
        assert means[T] <= 4 * sd / np.sqrt(T)
    assert 5 < means[10_000] / means[1_000_000] < 20
