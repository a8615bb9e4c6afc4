import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shus.bias import (BiasSpec, OccupationState, Rho, biased_logdensity, check_rho, g_alpha,
                       gamma_of_alpha, log_g_alpha, shus_update, stepsize, wl_update,
                       wt_param_map)
from shus.model import ContinuousTarget, DomainError, Partition, ToyTarget, target_logdensity


def test_rho_examples():
    assert Rho("power", 0.0)(0.37) == 1.0
    assert Rho("power", 1.0)(0.25) == pytest.approx(0.25)
    assert Rho("floored-power", 0.5, t0=0.04)(0.01) == pytest.approx(0.2)
    assert Rho("constant", value=0.5)(0.9) == 0.5


def test_rho_eval_domain():
    from shus.bias import rho_eval
    assert rho_eval(Rho("power", 0.5), 0.25) == pytest.approx(0.5)
    for t in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            rho_eval(Rho("power", 0.5), t)


def test_rho_validation():
    with pytest.raises(DomainError):
        Rho("exp")
    with pytest.raises(DomainError):
        Rho("power", 1.5)
    with pytest.raises(DomainError):
        Rho("constant", value=0.0)


@pytest.mark.parametrize("rho", [Rho("power", a) for a in (0.0, 0.2, 0.5, 0.8, 0.99)]
                         + [Rho("floored-power", 0.5, t0=0.04), Rho("floored-power", 0.9, t0=0.3),
                            Rho("constant", value=1.0)])
def test_builtin_families_conform(rho):
    assert check_rho(rho, n_grid=1000) == []
    assert rho.sup <= 1.0


def test_g_alpha_examples():
    assert g_alpha(1.0, 1.0, 5.0) == pytest.approx(5.0)
    assert g_alpha(1.0, 0.5, 4.0) == pytest.approx(2.0)
    assert g_alpha(2 / 3, 1.0, math.e - 1) == pytest.approx(1.0)


@given(st.floats(0.51, 0.99), st.floats(-50.0, 5e4))
def test_log_g_alpha_stable_for_huge_s(alpha, log_s):
    v = log_g_alpha(alpha, 1.0, log_s)
    assert math.isfinite(v)
    if log_s < 50:
        direct = alpha / (1 - alpha) * math.log(math.log1p(math.exp(log_s)))
        assert v == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_gamma_of_alpha_examples():
    assert gamma_of_alpha(1.0) == 1.0
    assert gamma_of_alpha(0.75) == pytest.approx(64.0)
    assert gamma_of_alpha(2 / 3) == pytest.approx(9.0)
    for bad in (0.5, 0.2, 1.1, 0.999):
        with pytest.raises(DomainError):
            gamma_of_alpha(bad)


def test_bias_spec_validation_and_defaults():
    b = BiasSpec(Rho("power", 0.5), alpha=0.75)
    assert b.gamma == pytest.approx(64.0)
    assert b.a == 0.5
    with pytest.raises(DomainError):
        BiasSpec(alpha=0.5)
    with pytest.raises(DomainError):
        BiasSpec(mu=0.0)
    with pytest.raises(DomainError):
        BiasSpec(gamma=-1.0)


def test_identity_rho_warns_but_is_allowed():
    with pytest.warns(UserWarning):
        b = BiasSpec(Rho("power", 1.0))
    assert b.a == 1.0


def test_stepsize_examples():
    s = OccupationState.from_occupation([1 / 3, 1 / 3, 1 / 3])
    b = BiasSpec(Rho("power", 0.5))
    assert stepsize(b, s) == pytest.approx(1.0)
    s2 = OccupationState.from_occupation([2.0, 3.0, 5.0])
    b2 = BiasSpec(Rho("power", 0.5), mu=0.7, gamma=2.5)
    assert stepsize(b2, s2) * 10.0**0.7 == pytest.approx(2.5, rel=1e-14)


def test_shus_update_hand_example():
    s = OccupationState.from_occupation([1 / 3, 1 / 3, 1 / 3])
    out = shus_update(s, BiasSpec(Rho("power", 0.0)), hit=1)
    np.testing.assert_allclose(np.exp(out.log_occ), [4 / 3, 1 / 3, 1 / 3], rtol=1e-14)
    assert out.n == 1


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=6), st.data())
def test_shus_update_touches_only_hit(occ, data):
    hit = data.draw(st.integers(1, len(occ)))
    s = OccupationState.from_occupation(occ)
    out = shus_update(s, BiasSpec(Rho("power", 0.5), alpha=0.8), hit)
    for j in range(len(occ)):
        if j == hit - 1:
            assert out.log_occ[j] > s.log_occ[j]
        else:
            assert out.log_occ[j] == s.log_occ[j]
    assert out.log_S > s.log_S


@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3), st.floats(0.1, 5.0),
       st.integers(1, 3))
def test_identity_rho_update_is_multiplicative(occ, gamma, hit):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = BiasSpec(Rho("power", 1.0), gamma=gamma)
    s = OccupationState.from_occupation(occ)
    out = shus_update(s, b, hit)
    # factor 1 + gamma_{n+1} with gamma_{n+1} = gamma / S_n; exactly 1 + gamma when S_n = 1
    factor = 1 + gamma / sum(occ)
    assert math.exp(out.log_occ[hit - 1]) == pytest.approx(factor * occ[hit - 1], rel=1e-12)
    unit = OccupationState.from_occupation(np.asarray(occ) / sum(occ))
    out = shus_update(unit, b, hit)
    assert math.exp(out.log_occ[hit - 1]) == pytest.approx((1 + gamma) * unit.theta[hit - 1],
                                                           rel=1e-12)


@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3), st.floats(0.51, 0.95) | st.just(1.0),
       st.floats(0.0, 0.99), st.integers(1, 3))
def test_wl_update_matches_shus_update(occ, alpha, a, hit):
    b = BiasSpec(Rho("power", a), alpha=alpha)
    s = OccupationState.from_occupation(occ)
    via_shus = shus_update(s, b, hit)
    via_wl = wl_update(s, stepsize(b, s), b.rho, hit)
    np.testing.assert_allclose(np.exp(via_wl.log_occ), np.exp(via_shus.log_occ), rtol=1e-12)


def test_wl_update_examples():
    s = OccupationState.from_occupation([0.2, 0.3, 0.5])
    out = wl_update(s, 0.3, Rho("power", 1.0), 2)
    assert math.exp(out.log_occ[1]) == pytest.approx(0.3 * 1.3)
    same = wl_update(s, 0.0, Rho("power", 0.5), 2)
    np.testing.assert_array_equal(same.log_occ, s.log_occ)


def test_occupation_state_invariants():
    s = OccupationState.uniform(4)
    b = BiasSpec(Rho("power", 0.5), alpha=0.6)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        prev = s
        s = shus_update(s, b, int(rng.integers(1, 5)))
        assert s.log_S > prev.log_S
        assert np.all(s.theta > 0)
        assert abs(s.theta.sum() - 1.0) < 1e-12
        assert math.exp(s.log_S) == pytest.approx(np.exp(s.log_occ).sum(), rel=1e-12)
        assert stepsize(b, s) <= stepsize(b, prev)
    with pytest.raises(DomainError):
        OccupationState.from_occupation([1.0, 0.0])


def _plain_arithmetic_run(occ, hits, alpha, mu, gamma, a):
    occ = np.array(occ, dtype=float)
    for h in hits:
        S = occ.sum()
        g = S**mu if alpha == 1.0 else math.log(1 + S) ** (alpha / (1 - alpha))
        occ[h - 1] += gamma / g * S * (occ[h - 1] / S) ** a
    return occ / occ.sum()


@pytest.mark.parametrize("alpha, a", [(1.0, 0.5), (0.8, 0.5), (0.6, 0.3)])
def test_log_domain_matches_plain_arithmetic(alpha, a):
    rng = np.random.default_rng(5)
    hits = rng.integers(1, 4, size=10_000)
    b = BiasSpec(Rho("power", a), alpha=alpha)
    s = OccupationState.uniform(3)
    for h in hits:
        s = shus_update(s, b, int(h))
    plain = _plain_arithmetic_run(np.full(3, 1 / 3), hits, alpha, 1.0, b.gamma, a)
    np.testing.assert_allclose(s.theta, plain, rtol=1e-9)


def test_wt_param_map_examples():
    m = wt_param_map(1.0, 3.0, 1.0, 0.1)
    assert m["gamma"] == pytest.approx(2 / 15)
    assert m["a"] == pytest.approx(0.75)
    assert m["mu"] == pytest.approx(0.25)
    assert m["alpha"] == 1.0
    sym = wt_param_map(2.0, 2.0, 1.0, 1.0)
    assert sym["a"] == pytest.approx(0.5) and sym["mu"] == pytest.approx(0.5)
    assert wt_param_map(1.0, 1e12, 1.0, 1.0)["a"] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        wt_param_map(0.0, 1.0, 1.0, 1.0)


def test_biased_logdensity_toy_example():
    toy, part = ToyTarget(0.1), Partition.identity(3)
    f = biased_logdensity(toy, part, [0.5, 0.25, 0.25], Rho("power", 1.0))
    mass = np.exp([f(i) for i in (1, 2, 3)])
    np.testing.assert_allclose(mass, np.array([2.0, 0.4, 4.0]) / 2.1, rtol=1e-14)
    np.testing.assert_allclose(mass / mass.sum(), np.array([2.0, 0.4, 4.0]) / 6.4, rtol=1e-14)


@settings(max_examples=30)
@given(st.floats(-1.2, 1.2), st.floats(-2.0, 2.0))
def test_biased_logdensity_plane_reductions(x1, x2):
    t, part = ContinuousTarget(beta=2.0), Partition.uniform(1.2, 24)
    uniform = biased_logdensity(t, part, np.full(24, 1 / 24), Rho("power", 0.5))
    flat = biased_logdensity(t, part, np.linspace(1, 2, 24) / np.linspace(1, 2, 24).sum(),
                             Rho("power", 0.0))
    lp = target_logdensity(t, (x1, x2))
    assert uniform((x1, x2)) - lp == pytest.approx(0.5 * math.log(24), abs=1e-9)
    assert flat((x1, x2)) == pytest.approx(lp, abs=1e-12)
    assert uniform((1.3, 0.0)) == -math.inf
