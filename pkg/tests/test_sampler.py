import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shus.bias import BiasSpec, OccupationState, Rho, shus_update, wl_update
from shus.kernel import sample_fixed
from shus.model import ContinuousTarget, DomainError, Partition, ToyTarget, reference_weights
from shus.sampler import (SamplerConfig, field_H, mean_field_h, read_theta_bytes, run,
                          sa_decompose)

TOY = ToyTarget(0.1)
ID3 = Partition.identity(3)
THETA_STAR = TOY.probabilities
GRID = Partition.uniform(1.2, 24)


def toy_config(**kw):
    base = dict(n_steps=10_000, seed=3, bias=BiasSpec(Rho("power", 0.5)))
    base.update(kw)
    return SamplerConfig(TOY, ID3, **base)


def test_config_validation():
    with pytest.raises(DomainError):
        toy_config(n_steps=0)
    with pytest.raises(DomainError):
        toy_config(schedule="cosine")
    with pytest.raises(DomainError):
        toy_config(schedule="power", schedule_c=0.0)
    with pytest.raises(DomainError):
        toy_config(init_occupation=(1.0, 0.0, 1.0))
    with pytest.raises(DomainError):
        toy_config(x0=4)
    with pytest.raises(DomainError):
        SamplerConfig(TOY, GRID, BiasSpec(), n_steps=10)
    with pytest.raises(DomainError):
        SamplerConfig(ContinuousTarget(1.0), GRID, BiasSpec(), n_steps=10, x0=(1.5, 0.0))


def test_record_shapes_follow_strides():
    rec = run(toy_config(n_steps=10_000, stride=7, theta_stride=1000))
    assert rec.n_done == 10_000
    assert rec.gamma.shape == rec.hit.shape == rec.log_S.shape == (10_000 // 7,)
    np.testing.assert_array_equal(rec.n[:3], [7, 14, 21])
    assert rec.theta.shape == (10, 3)
    np.testing.assert_allclose(rec.theta[-1], rec.final_theta, rtol=1e-14)
    assert rec.visits.sum() == 10_000


def test_determinism():
    a, b = run(toy_config()), run(toy_config())
    for field in ("gamma", "hit", "log_S", "is_weight", "theta", "visits", "is_sums"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.to_csv() == b.to_csv()
    assert a.theta_bytes() == b.theta_bytes()


def test_csv_and_binary_formats():
    rec = run(toy_config(n_steps=1000, theta_stride=100))
    lines = rec.to_csv().split("\n")
    assert lines[0] == "n,gamma_n,hit,log_S"
    assert len(lines) == 1002 and lines[-1] == ""
    d, stride, rows = read_theta_bytes(rec.theta_bytes())
    assert (d, stride) == (3, 100)
    np.testing.assert_array_equal(rows, rec.theta)


def test_record_matches_python_updates():
    """The compiled loop agrees with shus_update applied to the recorded hits."""
    bias = BiasSpec(Rho("power", 0.5), alpha=0.7)
    rec = run(toy_config(bias=bias, n_steps=2000, theta_stride=1))
    s = OccupationState.uniform(3)
    for k, h in enumerate(rec.hit):
        s = shus_update(s, bias, int(h))
        assert s.log_S == pytest.approx(rec.log_S[k], rel=1e-12)
    np.testing.assert_allclose(s.theta, rec.final_theta, rtol=1e-10)


def test_unbiased_run_reproduces_plain_mh():
    t = ContinuousTarget(beta=3.0)
    cfg = SamplerConfig(t, GRID, BiasSpec(Rho("power", 0.0)), n_steps=20_000, seed=17)
    rec = run(cfg)
    _, path = sample_fixed(np.random.default_rng(17), t, GRID, np.full(24, 1 / 24),
                           Rho("power", 0.0), (-1.0, 0.0), 20_000, path=True)
    np.testing.assert_array_equal(rec.hit, path)


def test_power_schedule_stepsizes():
    rec = run(toy_config(schedule="power", schedule_c=0.5, bias=BiasSpec(Rho("power", 0.5),
                                                                        alpha=0.8)))
    np.testing.assert_allclose(rec.gamma, 0.5 / rec.n**0.8, rtol=1e-12)


def test_power_schedule_matches_wl_update():
    bias = BiasSpec(Rho("power", 0.5), alpha=0.8)
    rec = run(toy_config(schedule="power", schedule_c=0.5, bias=bias, n_steps=1000))
    s = OccupationState.uniform(3)
    for n, h in zip(rec.n, rec.hit):
        s = wl_update(s, 0.5 / n**0.8, bias.rho, int(h))
    np.testing.assert_allclose(s.theta, rec.final_theta, rtol=1e-10)


VERIFY_CASES = [
    (TOY, ID3, BiasSpec(Rho("power", 0.5)), "shus"),
    (TOY, ID3, BiasSpec(Rho("power", 0.5), alpha=0.6), "shus"),
    (TOY, ID3, BiasSpec(Rho("power", 1.0), mu=0.25), "shus"),
    (TOY, ID3, BiasSpec(Rho("floored-power", 0.5, t0=0.05), alpha=0.8), "power"),
    (ContinuousTarget(4.0), GRID, BiasSpec(Rho("power", 0.8)), "shus"),
    (ContinuousTarget(4.0), GRID, BiasSpec(Rho("power", 0.8), alpha=0.7), "shus"),
]


@pytest.mark.parametrize("target, part, bias, schedule", VERIFY_CASES)
def test_verification_mode_invariants(target, part, bias, schedule):
    cfg = SamplerConfig(target, part, bias, n_steps=50_000, seed=2, schedule=schedule,
                        verify=True, theta_stride=10)
    rec = run(cfg)  # raises InvariantViolation on a simplex, stepsize or remainder failure
    assert rec.n_done == 50_000
    assert np.all(np.diff(rec.log_S) > 0)
    assert np.all(np.diff(rec.gamma) <= 0)
    assert np.all(rec.theta > 0)
    np.testing.assert_allclose(rec.theta.sum(axis=1), 1.0, atol=1e-12)


def test_toy_weights_converge():
    rec = run(toy_config(n_steps=1_000_000, stride=0, theta_stride=0, track_is=False))
    assert np.max(np.abs(rec.final_theta - THETA_STAR)) < 0.02


def test_ergodic_average_of_stratum_three():
    rec = run(toy_config(n_steps=1_000_000, stride=0, theta_stride=0, track_is=False))
    rho = Rho("power", 0.5)
    z = np.sum(THETA_STAR / rho(THETA_STAR))
    limit = THETA_STAR[2] / rho(THETA_STAR[2]) / z
    assert rec.visits[2] / rec.n_done == pytest.approx(limit, rel=0.02)


def test_exit_state_stops_run():
    rec = run(toy_config(n_steps=10_000, stride=1), exit_state=3)
    k = rec.events["exit_step"]
    assert rec.n_done == k and rec.hit[-1] == 3 and np.all(rec.hit[:-1] != 3)


def test_field_H_examples():
    H = field_H(1, [0.5, 0.5], Rho("power", 1.0))
    np.testing.assert_allclose(H, [0.25, -0.25])


simplex = st.integers(2, 8).flatmap(
    lambda d: st.lists(st.floats(0.01, 1.0), min_size=d, max_size=d)).map(
    lambda v: np.asarray(v) / np.sum(v))


@given(simplex, st.data(), st.floats(0.0, 1.0))
def test_field_H_properties(theta, data, a):
    hit = data.draw(st.integers(1, theta.size))
    rho = Rho("power", a)
    H = field_H(hit, theta, rho)
    assert abs(H.sum()) < 1e-15
    assert np.linalg.norm(H) <= math.sqrt(2) * rho.sup


@given(simplex, st.floats(0.0, 1.0))
def test_mean_field_properties(theta, a):
    rho = Rho("power", a)
    star = np.roll(theta, 1)
    assert abs(mean_field_h(theta, star, rho).sum()) < 1e-14
    np.testing.assert_array_equal(mean_field_h(star, star, rho), np.zeros(theta.size))


def test_mean_field_is_average_of_H():
    theta, rho = np.array([0.5, 0.25, 0.25]), Rho("power", 0.5)
    _, path = sample_fixed(np.random.default_rng(31), TOY, ID3, theta, rho, 1, 1_000_000,
                           path=True)
    Hs = np.stack([field_H(i, theta, rho) for i in (1, 2, 3)])[path - 1]
    h = mean_field_h(theta, THETA_STAR, rho)
    # batch means absorb the chain's autocorrelation
    batches = Hs.reshape(1000, -1, 3).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(batches.shape[0])
    assert np.all(np.abs(Hs.mean(axis=0) - h) < 3 * se)


@given(simplex, st.data(), st.floats(0.0, 1.0), st.floats(0.0, 2.0))
def test_sa_decomposition(theta, data, a, gamma):
    hit = data.draw(st.integers(1, theta.size))
    rho = Rho("power", a)
    nxt, lam = sa_decompose(theta, hit, gamma, rho)
    H = field_H(hit, theta, rho)
    np.testing.assert_allclose(theta + gamma * H + gamma * lam, nxt, atol=1e-12)
    assert np.linalg.norm(lam) <= math.sqrt(2) * gamma * rho.sup**2 * (1 + 1e-12)
    assert abs(nxt.sum() - 1.0) < 1e-12
    s = OccupationState.from_occupation(theta)
    np.testing.assert_allclose(wl_update(s, gamma, rho, hit).theta, nxt, rtol=1e-10)


def test_sa_decomposition_zero_step():
    theta = np.array([0.2, 0.3, 0.5])
    nxt, lam = sa_decompose(theta, 2, 0.0, Rho("power", 0.5))
    np.testing.assert_array_equal(nxt, theta)
    np.testing.assert_array_equal(lam, np.zeros(3))


def test_plane_run_smoke():
    t = ContinuousTarget(4.0)
    ts = reference_weights(t, GRID)
    rec = run(SamplerConfig(t, GRID, BiasSpec(Rho("power", 0.8)), n_steps=200_000, seed=4))
    assert rec.visits.sum() == 200_000
    assert np.all(rec.visits > 0)
    assert rec.is_estimate(np.ones(24)) == pytest.approx(1.0, rel=0.2)
    assert np.max(np.abs(rec.final_theta - ts)) < 0.1
