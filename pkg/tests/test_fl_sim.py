import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from defl.delay_model import stepsize
from defl.errors import DomainError, SimulationDiverged, UnsupportedTaskError
from defl.fl_sim import (
    LogisticTask,
    QuadraticTask,
    SimConfig,
    aggregate,
    bound_check,
    default_threads,
    initial_model,
    local_sgd,
    run_defl,
    sample_stochastic_gradient,
    time_to_target,
)
from defl.system_model import DeviceProfile, Fleet, WirelessSystem, fleet_comm_time, fleet_compute_time


def make_fleet(M, samples=100):
    system = WirelessSystem(bandwidth=1e6, noise_power=1e-9, update_bits=1e4)
    devices = tuple(
        DeviceProfile(id=f"d{m}", cycles_per_sample=1e6, samples=samples, tx_power=0.1, channel_gain=1e-6,
                      frequency=1e9)
        for m in range(M)
    )
    return Fleet(devices, system)


def scalar_task(M=1, sigma_sq=0.0, a=1.0, u=0.0):
    A = np.array([[a]])
    return QuadraticTask(A=A, u=np.array([u]), u_dev=np.full((M, 1), u), weights=np.full(M, 1 / M),
                         noise_sigma_sq=sigma_sq)


def test_quadratic_gradient_noise_free():
    task = QuadraticTask.make(d=5, M=2, seed=1, noise_sigma_sq=0.0)
    w = np.arange(5.0)
    g = sample_stochastic_gradient(task, 1, w, 8, np.random.default_rng(0))
    np.testing.assert_allclose(g, task.A @ w - task.u, rtol=0, atol=1e-14)


def test_quadratic_task_spectrum():
    task = QuadraticTask.make(d=6, M=1, seed=3, L=2.0, mu=0.5)
    np.testing.assert_allclose(np.linalg.eigvalsh(task.A), np.linspace(0.5, 2.0, 6), atol=1e-12)
    assert task.L == pytest.approx(2.0)
    np.testing.assert_allclose(task.gradient(task.w_star, 0), 0.0, atol=1e-12)


def test_heterogeneous_task_keeps_global_minimizer():
    task = QuadraticTask.make(d=4, M=5, seed=2, identical=False, weights=[1, 2, 3, 4, 5])
    assert not task.identical
    g = sum(p * task.gradient(task.w_star, m) for m, p in enumerate(task.weights))
    np.testing.assert_allclose(g, 0.0, atol=1e-12)


def test_local_sgd_hand_iteration():
    # F(w) = w^2 / 2, w0 = 1, eta = 0.5: 1 -> 0.5 -> 0.25
    task = scalar_task()
    out = local_sgd(task, 0, np.array([1.0]), V=2, b=1, eta=0.5, rng=np.random.default_rng(0))
    assert out[0] == 0.25


def test_local_sgd_zero_step_is_frozen():
    task = QuadraticTask.make(d=3, M=1, seed=0, noise_sigma_sq=5.0)
    w0 = np.array([0.3, -0.2, 0.9])
    out = local_sgd(task, 0, w0, V=7, b=4, eta=0.0, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(out, w0)


def test_local_sgd_returns_path():
    task = scalar_task()
    w, path = local_sgd(task, 0, np.array([1.0]), V=3, b=1, eta=0.5, rng=np.random.default_rng(0),
                        return_path=True)
    np.testing.assert_array_equal(path[:, 0], [0.5, 0.25, 0.125])
    assert w[0] == path[-1, 0]


def test_aggregate_examples():
    np.testing.assert_array_equal(aggregate([np.array([1.0]), np.array([3.0])], [1, 3]), [2.5])
    same = np.array([0.1, 0.7, 1 / 3])
    out = aggregate([same, same.copy(), same.copy()], [1, 5, 9])
    np.testing.assert_array_equal(out, same)
    assert out is not same
    with pytest.raises(ValueError):
        aggregate([], [])
    with pytest.raises(ValueError):
        aggregate([np.zeros(2), np.zeros(3)], [1, 1])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.integers(1, 1000))
def test_aggregate_of_equal_states_is_exact(values, weight):
    states = [np.array(values) for _ in range(4)]
    np.testing.assert_array_equal(aggregate(states, [weight, 1, 2, 3]), np.array(values))


def test_noise_variance_scales_with_batch():
    task = QuadraticTask.make(d=10, M=1, seed=0, noise_sigma_sq=2.0)
    w = np.zeros(10)
    rng = np.random.default_rng(5)
    for b in (1, 4, 16):
        g = np.array([sample_stochastic_gradient(task, 0, w, b, rng) for _ in range(4000)])
        total_var = np.sum(np.var(g, axis=0))
        assert total_var == pytest.approx(2.0 / b, rel=0.1)


def test_single_round_is_one_gradient_step():
    fleet = make_fleet(1)
    task = QuadraticTask.make(d=4, M=1, seed=0, noise_sigma_sq=0.0)
    cfg = SimConfig(fleet=fleet, V=1, H=1, b=1, seed=3, eta=0.2)
    trace = run_defl(task, cfg)
    w0 = initial_model(3, 4)
    np.testing.assert_allclose(trace.w_final, w0 - 0.2 * (task.A @ w0 - task.u), rtol=0, atol=1e-15)
    assert len(trace) == 1


def test_seed_determinism_and_thread_independence():
    fleet = make_fleet(4)
    task = QuadraticTask.make(d=6, M=4, seed=1, noise_sigma_sq=1.0)
    base = dict(fleet=fleet, V=3, H=20, b=2, seed=9)
    a = run_defl(task, SimConfig(**base, threads=1))
    b = run_defl(task, SimConfig(**base, threads=1))
    c = run_defl(task, SimConfig(**base, threads=4))
    assert a.rows == b.rows == c.rows
    np.testing.assert_array_equal(a.w_final, c.w_final)
    d = run_defl(task, SimConfig(**{**base, "seed": 10}, threads=1))
    assert d.rows != a.rows


def test_redundant_devices_match_single_device():
    """M devices with identical data and no noise behave exactly like one device."""
    one = run_defl(QuadraticTask.make(d=5, M=1, seed=4, noise_sigma_sq=0.0),
                   SimConfig(fleet=make_fleet(1), V=4, H=10, b=3, seed=2, eta=0.3))
    many = run_defl(QuadraticTask.make(d=5, M=6, seed=4, noise_sigma_sq=0.0),
                    SimConfig(fleet=make_fleet(6), V=4, H=10, b=3, seed=2, eta=0.3, threads=3))
    assert one.rows == many.rows
    np.testing.assert_array_equal(one.w_final, many.w_final)
    np.testing.assert_array_equal(one.w_bar, many.w_bar)


def test_wall_clock_follows_round_time():
    fleet = make_fleet(3)
    task = QuadraticTask.make(d=3, M=3, seed=0)
    cfg = SimConfig(fleet=fleet, V=5, H=7, b=8, seed=0)
    dt = fleet_comm_time(fleet) + 5 * fleet_compute_time(fleet, 8)
    assert cfg.round_seconds() == pytest.approx(dt, rel=1e-15)
    trace = run_defl(task, cfg)
    for rec in trace:
        assert rec.wall_clock_s == pytest.approx(rec.round * dt, rel=1e-12)
    assert trace.overall_time == pytest.approx(7 * dt, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), eta=st.floats(0.01, 1.0), V=st.integers(1, 5))
def test_noise_free_loss_never_increases(seed, eta, V):
    task = QuadraticTask.make(d=4, M=2, seed=seed, noise_sigma_sq=0.0, identical=False)
    trace = run_defl(task, SimConfig(fleet=make_fleet(2), V=V, H=15, b=1, seed=seed, eta=eta / task.L,
                                     identical_data=False, threads=1))
    losses = [r.global_loss for r in trace]
    if task.identical or V == 1:
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert all(math.isfinite(x) for x in losses)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), eta=st.floats(0.01, 1.0), V=st.integers(1, 5))
def test_identical_noise_free_loss_never_increases(seed, eta, V):
    task = QuadraticTask.make(d=4, M=2, seed=seed, noise_sigma_sq=0.0)
    trace = run_defl(task, SimConfig(fleet=make_fleet(2), V=V, H=15, b=1, seed=seed, eta=eta / task.L, threads=1))
    losses = [trace.f_star] + [r.global_loss for r in trace]
    gaps = [r.global_loss - trace.f_star for r in trace]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert min(losses) >= trace.f_star - 1e-12


def test_divergence_reports_round():
    task = scalar_task(sigma_sq=0.0, u=1.0)
    seen = []
    with pytest.raises(SimulationDiverged) as info:
        run_defl(task, SimConfig(fleet=make_fleet(1), V=50, H=100, b=1, eta=100.0, threads=1),
                 on_round=seen.append)
    assert info.value.round_index == len(seen) + 1
    assert len(seen) >= 1


def test_early_stop_and_time_to_target():
    task = QuadraticTask.make(d=3, M=2, seed=0, noise_sigma_sq=0.0)
    cfg = SimConfig(fleet=make_fleet(2), V=2, H=500, b=1, eta=0.5, threads=1)
    t = time_to_target(task, cfg, 1e-6)
    full = run_defl(task, cfg)
    first = next(r for r in full if r.global_loss - full.f_star <= 1e-6)
    assert t == first.wall_clock_s
    assert time_to_target(task, cfg, 1e-6, horizon=t / 2) == math.inf


def test_step_size_default_is_bound_step():
    cfg = SimConfig(fleet=make_fleet(10), V=2, H=100, b=4)
    task = QuadraticTask.make(d=2, M=10, seed=0)
    assert cfg.step_size(task) == stepsize(task.L, 10, 200) == pytest.approx(math.sqrt(10) / (4 * math.sqrt(200)))


def test_mismatched_task_rejected():
    with pytest.raises(DomainError):
        run_defl(QuadraticTask.make(d=2, M=3, seed=0), SimConfig(fleet=make_fleet(2), V=1, H=1, b=1))
    with pytest.raises(DomainError):
        SimConfig(fleet=make_fleet(2), V=0, H=1, b=1)


def test_bound_noise_free_has_only_initial_term():
    task = QuadraticTask.make(d=10, M=10, seed=0, noise_sigma_sq=0.0)
    rep = bound_check(task, SimConfig(fleet=make_fleet(10), V=2, H=100, b=4, threads=1), n_seeds=3)
    init = 8 * rep.params.dist0_sq / math.sqrt(10 * 200)
    assert rep.bound == pytest.approx(init, rel=1e-12)
    assert rep.passed


def test_bound_holds_with_noise():
    task = QuadraticTask.make(d=10, M=10, seed=0, noise_sigma_sq=1.0)
    rep = bound_check(task, SimConfig(fleet=make_fleet(10), V=2, H=100, b=4, threads=1), n_seeds=30)
    assert rep.passed, (rep.mean_gap, rep.bound)
    assert len(rep.gaps) == 30


def test_larger_batch_lowers_noise_floor():
    task = QuadraticTask.make(d=10, M=2, seed=0, noise_sigma_sq=100.0)
    floors = {}
    for b in (1, 16):
        trace = run_defl(task, SimConfig(fleet=make_fleet(2), V=1, H=400, b=b, eta=0.5, threads=1))
        floors[b] = float(np.mean(trace.global_gaps()[200:]))
    # stationary gap of SGD on a quadratic is proportional to sigma^2 / b
    assert floors[1] / floors[16] == pytest.approx(16, rel=0.5)


def test_bound_check_rejects_custom_eta():
    task = QuadraticTask.make(d=2, M=10, seed=0)
    with pytest.raises(DomainError):
        bound_check(task, SimConfig(fleet=make_fleet(10), V=1, H=20, b=1, eta=0.5), n_seeds=2)


def test_logistic_task_runs_but_has_no_gap():
    task = LogisticTask.make(d=4, sizes=[50, 80, 30], seed=1)
    trace = run_defl(task, SimConfig(fleet=make_fleet(3), V=2, H=30, b=8, eta=0.5, identical_data=False, threads=2))
    assert trace.rows[-1].global_loss < task.loss(trace.w0)
    assert math.isnan(trace.final_gap)
    with pytest.raises(UnsupportedTaskError):
        bound_check(task, SimConfig(fleet=make_fleet(3), V=1, H=5, b=1, identical_data=False), n_seeds=1)


def test_logistic_gradient_matches_finite_difference():
    task = LogisticTask.make(d=3, sizes=[40], seed=2)
    w = np.array([0.2, -0.4, 0.1])
    g = task.gradient(w, 0)
    h = 1e-6
    fd = [(task.device_loss(w + h * e, 0) - task.device_loss(w - h * e, 0)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_default_threads(monkeypatch):
    monkeypatch.setenv("DEFL_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("DEFL_THREADS", "0")
    assert default_threads() >= 1
    monkeypatch.setenv("DEFL_THREADS", "-1")
    with pytest.raises(ValueError):
        default_threads()


def test_batch_16_not_worse_than_batch_1_beyond_bound_gap():
    task = QuadraticTask.make(d=10, M=10, seed=0, noise_sigma_sq=1.0)
    reps = {b: bound_check(task, SimConfig(fleet=make_fleet(10), V=2, H=100, b=b, threads=1), n_seeds=30)
            for b in (1, 16)}
    predicted = reps[1].bound - reps[16].bound
    assert predicted > 0
    assert reps[16].mean_gap <= reps[1].mean_gap + predicted
