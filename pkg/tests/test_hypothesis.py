import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from emeel.channels import Depolarizing, Spiked, bell_pair_spam
from emeel.hypothesis import (
    DEPOLARIZING,
    SPIKED,
    GameConfig,
    GameError,
    GameInstance,
    alice_sample,
    bob_decide,
    efl_sample_lower_bound,
    efl_upper_bound,
    estimate_eigenvalue,
    play_trial,
    run_game,
)
from emeel.pauli import PauliLabel

L = PauliLabel.from_string


class TestAlice:
    def test_channels(self, rng):
        for _ in range(50):
            inst = alice_sample(3, rng)
            assert not inst.k.is_identity() and inst.sign in (1, -1)
            other = PauliLabel.from_packed(3, (inst.k.packed + 1) % 64 or 1)
            if inst.hypothesis == DEPOLARIZING:
                assert isinstance(inst.channel, Depolarizing)
                assert inst.channel.eigenvalue(inst.k) == 0
            else:
                assert inst.channel.eigenvalue(inst.k) == pytest.approx(inst.sign / 3)
                if other != inst.k:
                    assert inst.channel.eigenvalue(other) == 0

    def test_k_uniform(self):
        rng = np.random.default_rng(4)
        ks = [alice_sample(2, rng).k.packed for _ in range(15000)]
        counts = np.bincount(ks, minlength=16)
        assert counts[0] == 0
        assert stats.chisquare(counts[1:]).pvalue > 1e-3

    def test_coins_fair(self):
        rng = np.random.default_rng(5)
        draws = [alice_sample(4, rng) for _ in range(4000)]
        hyp = sum(d.hypothesis == SPIKED for d in draws)
        sgn = sum(d.sign == 1 for d in draws)
        assert stats.binomtest(hyp, 4000).pvalue > 1e-3
        assert stats.binomtest(sgn, 4000).pvalue > 1e-3

    def test_n_validation(self, rng):
        with pytest.raises(GameError):
            alice_sample(0, rng)


class TestBob:
    def test_examples(self):
        assert bob_decide(0.0) == DEPOLARIZING
        assert bob_decide(-0.3) == SPIKED
        assert bob_decide(1 / 6) == SPIKED and bob_decide(-1 / 6) == SPIKED
        assert bob_decide(0.1666) == DEPOLARIZING

    def test_non_finite(self):
        with pytest.raises(GameError):
            bob_decide(float("nan"))


class TestBounds:
    def test_examples(self):
        assert efl_upper_bound(0, 4) == 0.5
        assert efl_upper_bound(1000, 14) == pytest.approx(0.5 + 430 / 16384)
        assert efl_upper_bound(1e9, 10) == 1.0

    def test_domain(self):
        with pytest.raises(GameError):
            efl_upper_bound(10, 3)
        with pytest.raises(GameError):
            efl_upper_bound(-1, 5)

    @given(st.integers(4, 40), st.floats(0, 1e6), st.floats(0, 1e6))
    def test_monotone(self, n, m1, m2):
        lo, hi = sorted((m1, m2))
        assert efl_upper_bound(lo, n) <= efl_upper_bound(hi, n)
        assert efl_upper_bound(hi, n + 1) <= efl_upper_bound(hi, n)

    def test_sample_lower_bound(self):
        assert efl_sample_lower_bound(10, 0.1, 0.0) == pytest.approx((2**10 - 2**-10) / 0.6)
        with pytest.raises(GameError):
            efl_sample_lower_bound(4, 0.1, 0.5)


class TestConfig:
    def test_validation(self):
        for kw in ({"n": 0, "M": 1}, {"n": 2, "M": 0}, {"n": 2, "M": 1, "protocol": "x"},
                   {"n": 2, "M": 1, "mode": "x"}, {"n": 2, "M": 1, "trials": -1}):
            with pytest.raises(GameError):
                GameConfig(**kw)
        with pytest.raises(GameError):
            GameConfig(2, 10, spam=bell_pair_spam(3, 0.99))

    def test_default_spam_is_ideal(self):
        cfg = GameConfig(3, 10)
        assert cfg.spam.n == 6 and cfg.spam.state_prep.is_identity()


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------


def _instance(n, hyp, k="XZYI", sign=1):
    k = L(k[:n])
    ch = Depolarizing(n) if hyp == DEPOLARIZING else Spiked(n, k, sign)
    return GameInstance(n, k, sign, hyp, ch)


@pytest.mark.parametrize("mode", ["simulate", "inject"])
def test_depolarizing_estimate_is_centred(mode):
    cfg = GameConfig(4, 400, protocol="single-depth", mode=mode)
    inst = _instance(4, DEPOLARIZING)
    rng = np.random.default_rng(1)
    est = np.array([estimate_eigenvalue(cfg, inst, rng) for _ in range(200)])
    assert abs(est.mean()) < 3 / math.sqrt(400 * 200)


@pytest.mark.parametrize("mode", ["simulate", "inject"])
def test_spiked_estimate(mode):
    cfg = GameConfig(4, 400, protocol="single-depth", mode=mode)
    inst = _instance(4, SPIKED, sign=-1)
    rng = np.random.default_rng(2)
    est = np.array([estimate_eigenvalue(cfg, inst, rng) for _ in range(200)])
    assert abs(est.mean() + 1 / 3) < 3 * est.std(ddof=1) / math.sqrt(est.size)


def test_simulate_and_inject_agree():
    inst = _instance(4, SPIKED)
    a, b = [], []
    for mode, out in (("simulate", a), ("inject", b)):
        cfg = GameConfig.with_bell_spam(4, 300, 0.97, protocol="single-depth", mode=mode)
        rng = np.random.default_rng(3)
        out.extend(estimate_eigenvalue(cfg, inst, rng) for _ in range(300))
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_spam_robust_cancels_common_scaling():
    inst = _instance(4, SPIKED)
    means = []
    for f in (0.995, 0.97):
        cfg = GameConfig.with_bell_spam(4, 2000, f)
        rng = np.random.default_rng(6)
        est = np.array([estimate_eigenvalue(cfg, inst, rng) for _ in range(100)])
        means.append((est.mean(), est.std(ddof=1) / math.sqrt(est.size)))
    (m1, s1), (m2, s2) = means
    assert abs(m1 - m2) < 3 * math.hypot(s1, s2)
    assert abs(m2 - 1 / 3) < 3 * s2


def test_single_depth_shrinks_with_spam():
    inst = _instance(4, SPIKED)
    cfg = GameConfig.with_bell_spam(4, 2000, 0.9, protocol="single-depth")
    rng = np.random.default_rng(7)
    est = np.mean([estimate_eigenvalue(cfg, inst, rng) for _ in range(50)])
    xi = 0.9 ** (2 * 3)  # weight-3 query on both halves of the pair
    assert est == pytest.approx(xi / 3, abs=0.02)


# --------------------------------------------------------------------------
# Games
# --------------------------------------------------------------------------


def test_noiseless_game_is_perfect():
    res = run_game(GameConfig(8, 10_000, trials=40, seed=1))
    assert res.overall.success_rate == 1.0
    assert res.rows[DEPOLARIZING].trials + res.rows[SPIKED].trials == 40


def test_success_monotone_in_spam_infidelity():
    rates = []
    for f in (1.0, 0.98, 0.95, 0.9):
        cfg = GameConfig.with_bell_spam(6, 500, f, protocol="single-depth", trials=200, seed=2)
        rates.append(run_game(cfg).overall.success_rate)
    slack = 0.05
    assert all(b <= a + slack for a, b in zip(rates, rates[1:]))
    assert rates[-1] < rates[0]


def test_single_depth_decays_with_n():
    rates = []
    for n in (2, 8, 14):
        cfg = GameConfig.with_bell_spam(n, 1000, 0.95, protocol="single-depth", trials=150, seed=3)
        rates.append(run_game(cfg).overall.success_rate)
    # spiked trials fail once the SPAM factor pushes |lambda_k| below the threshold
    assert rates[0] > 0.95 and rates[0] > rates[1] > rates[2] - 0.05
    assert rates[2] < 0.6


def test_determinism_and_workers():
    cfg = GameConfig.with_bell_spam(5, 200, 0.98, trials=20, seed=9)
    a = run_game(cfg).records()
    b = run_game(GameConfig.with_bell_spam(5, 200, 0.98, trials=20, seed=9, workers=3)).records()
    assert a == b
    assert play_trial(cfg, 4) == play_trial(cfg, 4)


def test_records_layout():
    res = run_game(GameConfig(4, 50, trials=6, seed=0))
    rec = res.records()
    assert [r["hypothesis"] for r in rec] == [DEPOLARIZING, SPIKED, "all"]
    assert rec[-1]["efl_bound"] == pytest.approx(efl_upper_bound(50, 4))
    small = run_game(GameConfig(2, 50, trials=2)).records()
    assert math.isnan(small[0]["efl_bound"])
    empty = run_game(GameConfig(4, 50, trials=0)).records()
    assert all(r["trials"] == 0 and math.isnan(r["success_rate"]) for r in empty)
