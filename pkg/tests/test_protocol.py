import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e91sim.errors import ConfigError, InsufficientData
from e91sim.optics import IdealThreshold
from e91sim.presets import ALICE_SETTINGS, BOB_SETTINGS, CHSH_SETTINGS, KEY_SETTINGS, make_preset
from e91sim.protocol import (
    ALICE,
    BOB,
    FairSamplingConfig,
    SessionConfig,
    SessionStats,
    Verdict,
    brute_force_chsh,
    compute_qber,
    double_count_rate,
    estimate_chsh,
    fair_sampling_test,
    iter_rounds,
    run_session,
    two_proportion_z,
)
from e91sim.scenario import EntangledPairs, StationConfig

P8 = math.pi / 8
# standard-round patterns producing a clean bit: ch1+ alone is bit 1, ch0- alone is bit 0
PAT_FOR_BIT = {1: 1, 0: 8}


def _empty_stats(cfg=None):
    cfg = cfg or make_preset("attack-ideal-linear", rounds=0)
    shape = (len(cfg.alice.settings), len(cfg.bob.settings), 2, 2, 16, 16, 2, 2)
    return SessionStats(cfg, np.zeros(shape, dtype=np.int64))


def _put_tally(stats, a, b, counts):
    i, j = stats.config.alice.index_of(a), stats.config.bob.index_of(b)
    for ba in (0, 1):
        for bb in (0, 1):
            stats.hist[i, j, 0, 0, PAT_FOR_BIT[ba], PAT_FOR_BIT[bb], ba, bb] += counts[ba][bb]
    stats.rounds = int(stats.hist.sum())


def _tally_for(e, n=10**8):
    same = round(n * (1 + e) / 2)
    diff = n - same
    return [[same // 2, diff - diff // 2], [diff // 2, same - same // 2]]


class TestConfig:
    def test_chsh_setting_must_exist(self):
        cfg = make_preset("genuine", rounds=0)
        with pytest.raises(ConfigError):
            SessionConfig(0, 0, cfg.source, cfg.alice, cfg.bob,
                          ((0.0, 0.3),) + CHSH_SETTINGS[1:], KEY_SETTINGS)

    def test_key_setting_in_both_lists(self):
        cfg = make_preset("genuine", rounds=0)
        with pytest.raises(ConfigError):
            SessionConfig(0, 0, cfg.source, cfg.alice, cfg.bob, CHSH_SETTINGS, (0.0,))

    def test_four_chsh_pairs(self):
        cfg = make_preset("genuine", rounds=0)
        with pytest.raises(ConfigError):
            SessionConfig(0, 0, cfg.source, cfg.alice, cfg.bob, CHSH_SETTINGS[:3], KEY_SETTINGS)

    def test_entangled_needs_efficiency_detectors(self):
        st_ = StationConfig.uniform(ALICE_SETTINGS, 0.0, IdealThreshold())
        sb = StationConfig.uniform(BOB_SETTINGS, P8, IdealThreshold())
        with pytest.raises(ConfigError):
            SessionConfig(10, 0, EntangledPairs(), st_, sb, CHSH_SETTINGS, KEY_SETTINGS)

    @pytest.mark.parametrize("field,value", [("rounds", -1), ("seed", -1), ("seed", 2**64), ("chunk_size", 0)])
    def test_scalar_validation(self, field, value):
        kw = dict(rounds=10, seed=0, chunk_size=100)
        kw[field] = value
        cfg = make_preset("genuine", rounds=0)
        with pytest.raises(ConfigError):
            SessionConfig(kw["rounds"], kw["seed"], cfg.source, cfg.alice, cfg.bob, CHSH_SETTINGS,
                          KEY_SETTINGS, chunk_size=kw["chunk_size"])

    def test_pair_roles(self):
        roles = make_preset("genuine", rounds=0).pair_roles
        assert sorted(roles[roles >= 0].tolist()) == [0, 1, 2, 3, 4, 4]


class TestChshEstimator:
    def test_quantum_values(self):
        stats = _empty_stats()
        h = math.sqrt(2) / 2
        for (a, b), e in zip(CHSH_SETTINGS, (h, -h, h, h)):
            _put_tally(stats, a, b, _tally_for(e))
        s, se = estimate_chsh(stats)
        assert s == pytest.approx(2 * math.sqrt(2), abs=1e-6)
        assert se > 0

    def test_uniform_tallies(self):
        stats = _empty_stats()
        for a, b in CHSH_SETTINGS:
            _put_tally(stats, a, b, [[250, 250], [250, 250]])
        assert estimate_chsh(stats)[0] == 0.0

    def test_algebraic_maximum(self):
        stats = _empty_stats()
        for (a, b), e in zip(CHSH_SETTINGS, (1, -1, 1, 1)):
            _put_tally(stats, a, b, _tally_for(e, 1000))
        assert estimate_chsh(stats)[0] == 4.0

    def test_empty_raises(self):
        with pytest.raises(InsufficientData):
            estimate_chsh(_empty_stats())


class TestQber:
    def test_perfect_correlation(self):
        stats = _empty_stats()
        for k in KEY_SETTINGS:
            _put_tally(stats, k, k, [[500, 0], [0, 500]])
        assert compute_qber(stats) == 0.0

    def test_independent_bits(self, rng):
        stats = _empty_stats()
        n = 40_000
        for k in KEY_SETTINGS:
            c = rng.multinomial(n, [0.25] * 4).reshape(2, 2)
            _put_tally(stats, k, k, c.tolist())
        q = compute_qber(stats)
        assert abs(q - 0.5) < 3 * math.sqrt(0.25 / (2 * n))

    def test_empty_key(self):
        with pytest.raises(InsufficientData):
            compute_qber(_empty_stats())


class TestSession:
    @pytest.mark.parametrize("preset", ["attack-ideal-linear", "genuine"])
    def test_workers_do_not_change_results(self, preset):
        cfg = make_preset(preset, rounds=50_000, seed=7, chunk_size=4096)
        base = run_session(cfg, workers=1)
        for w in (2, 5):
            assert np.array_equal(run_session(cfg, workers=w).hist, base.hist)

    def test_backends_agree_on_sessions(self):
        from e91sim.kernels import available_backends
        cfg = make_preset("attack-high-energy", rounds=30_000, seed=3)
        hists = [run_session(cfg, backend=b).hist for b in available_backends()]
        for h in hists[1:]:
            assert np.array_equal(h, hists[0])

    def test_seed_changes_results(self):
        a = run_session(make_preset("genuine", rounds=20_000, seed=1)).hist
        b = run_session(make_preset("genuine", rounds=20_000, seed=2)).hist
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("preset", ["attack-ideal-linear", "genuine", "attack-high-energy"])
    def test_brute_force_chsh(self, preset):
        cfg = make_preset(preset, rounds=10_000, seed=11, chunk_size=3000)
        records = list(iter_rounds(cfg))
        assert len(records) == 10_000
        s, _ = estimate_chsh(run_session(cfg))
        assert brute_force_chsh(records, cfg) == pytest.approx(s, abs=1e-12)

    def test_records_use_configured_settings(self):
        cfg = make_preset("genuine", rounds=500, seed=4)
        for rec in iter_rounds(cfg):
            cfg.alice.index_of(rec.a_setting)
            cfg.bob.index_of(rec.b_setting)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 5000), st.integers(0, 2**32), st.sampled_from(
        ["genuine", "attack-ideal-linear", "attack-ideal-ideal", "attack-high-energy"]))
    def test_accounting(self, rounds, seed, preset):
        stats = run_session(make_preset(preset, rounds=rounds, seed=seed, chunk_size=997))
        cats = stats.round_categories()
        assert min(cats.values()) >= 0
        assert sum(cats.values()) == rounds == stats.rounds
        assert (stats.hist >= 0).all()

    def test_zero_rounds(self):
        stats = run_session(make_preset("genuine", rounds=0))
        assert stats.rounds == 0 and not stats.hist.any()
        assert all(v == 0 for v in stats.round_categories().values())
        for name in (ALICE, BOB):
            assert fair_sampling_test(stats, name).verdict is Verdict.INCONCLUSIVE
        summary = stats.summary()
        assert summary["chsh"]["S"] is None and summary["qber"] is None

    def test_ten_rounds_inconclusive(self):
        stats = run_session(make_preset("attack-ideal-ideal", rounds=10, seed=5))
        assert {fair_sampling_test(stats, n).verdict for n in (ALICE, BOB)} == {Verdict.INCONCLUSIVE}

    def test_genuine_perfect_detectors(self):
        stats = run_session(make_preset("genuine", rounds=1_000_000, seed=42, eta=1.0))
        s, se = estimate_chsh(stats)
        assert abs(s - 2 * math.sqrt(2)) < 0.01
        assert abs(s - 2 * math.sqrt(2)) < 3 * se
        assert compute_qber(stats) == 0.0

    def test_attack_key_is_error_free(self):
        stats = run_session(make_preset("attack-ideal-linear", rounds=200_000, seed=8))
        assert stats.sifted_key_length > 0
        assert compute_qber(stats) == 0.0


class TestFairSampling:
    def test_genuine_low_efficiency_passes(self):
        stats = run_session(make_preset("genuine", rounds=1_000_000, seed=42, eta=0.25))
        for name in (ALICE, BOB):
            v = fair_sampling_test(stats, name)
            assert v.verdict is Verdict.PASS
            assert v.rate_rel0 == pytest.approx(0.25, abs=0.01)
            assert v.rate_rel45 == pytest.approx(0.25, abs=0.01)

    def test_attack_all_ideal_fails_with_zero_rate(self):
        stats = run_session(make_preset("attack-ideal-ideal", rounds=300_000, seed=42))
        for name in (ALICE, BOB):
            v = fair_sampling_test(stats, name)
            assert v.singles_at_rel45 == 0 and v.ratio == 0.0
            assert v.verdict is Verdict.FAIL

    @settings(max_examples=200)
    @given(st.integers(0, 3000), st.integers(0, 3000), st.data())
    def test_inconclusive_iff_too_few_rounds(self, n0, n45, data):
        k0 = data.draw(st.integers(0, n0))
        k45 = data.draw(st.integers(0, n45))
        stats = _empty_stats()
        # Alice settings 0 and pi/4 sit at offsets 0 and pi/4 from her polarimeter axis
        for idx, n, k in ((0, n0, k0), (2, n45, k45)):
            stats.hist[idx, 0, 1, 0, 1, 0, 1, 0] = k
            stats.hist[idx, 0, 1, 0, 0, 0, 0, 0] = n - k
        v = fair_sampling_test(stats, ALICE, FairSamplingConfig(1000, 0.9, 5.0))
        assert (v.verdict is Verdict.INCONCLUSIVE) == (n0 < 1000 or n45 < 1000)
        assert v.ratio >= 0.0
        assert (v.singles_at_rel0, v.rounds_at_rel0, v.singles_at_rel45, v.rounds_at_rel45) == (k0, n0, k45, n45)

    def test_needs_both_offsets(self):
        cfg = make_preset("genuine", rounds=0)
        alice = StationConfig(ALICE_SETTINGS[:2], 0.0, 0.0, cfg.alice.detectors)
        bad = SessionConfig(0, 0, cfg.source, alice, cfg.bob,
                            ((0.0, P8), (0.0, 3 * P8), (P8, P8 * 2), (P8, 3 * P8)), (P8,))
        with pytest.raises(ConfigError):
            fair_sampling_test(_empty_stats(bad), ALICE)

    def test_mismatched_polarimeter_axes(self):
        cfg = make_preset("genuine", rounds=0)
        alice = StationConfig(ALICE_SETTINGS, 0.0, 0.1, cfg.alice.detectors)
        bad = SessionConfig(0, 0, cfg.source, alice, cfg.bob, CHSH_SETTINGS, KEY_SETTINGS)
        with pytest.raises(ConfigError):
            fair_sampling_test(_empty_stats(bad), ALICE)


class TestTwoProportion:
    def test_no_difference(self):
        assert two_proportion_z(100, 1000, 100, 1000) == 0.0

    def test_known_value(self):
        # p1=0.5, p2=0.4, pooled 0.45
        z = two_proportion_z(500, 1000, 400, 1000)
        assert z == pytest.approx(0.1 / math.sqrt(0.45 * 0.55 * 0.002))

    def test_perfect_separation_finite(self):
        z = two_proportion_z(0, 10_000, 0, 10_000)
        assert z == 0.0
        assert math.isfinite(two_proportion_z(5000, 10_000, 0, 10_000))

    def test_empty(self):
        assert two_proportion_z(0, 0, 1, 2) == 0.0


class TestDoubles:
    def test_zero_at_twice_threshold(self):
        stats = run_session(make_preset("attack-ideal-ideal", rounds=200_000, seed=9))
        for rates in double_count_rate(stats).values():
            assert rates == {"ch1": 0.0, "ch0": 0.0, "station": 0.0}

    def test_zero_for_quantum_source(self):
        stats = run_session(make_preset("genuine", rounds=100_000, seed=9, eta=1.0))
        for rates in double_count_rate(stats).values():
            assert rates == {"ch1": 0.0, "ch0": 0.0, "station": 0.0}

    def test_positive_at_high_energy(self):
        stats = run_session(make_preset("attack-high-energy", rounds=100_000, seed=9))
        for rates in double_count_rate(stats).values():
            assert rates["station"] > 0.0

    def test_doubles_still_counted_in_key(self):
        # cross-channel doubles get a fair random bit and still enter the tallies
        stats = run_session(make_preset("attack-high-energy", rounds=100_000, seed=9))
        assert compute_qber(stats) > 0.0


class TestDetectionReport:
    @pytest.mark.parametrize("eta,flag", [(0.25, True), (0.8, True), (0.83, False), (1.0, False)])
    def test_loophole_flag(self, eta, flag):
        stats = run_session(make_preset("genuine", rounds=1000, seed=1, eta=eta))
        rep = stats.summary()["detection"]
        assert rep["loophole_open"] is flag
        assert rep[ALICE]["efficiency"] == eta

    def test_attack_flagged_by_measured_rate(self):
        stats = run_session(make_preset("attack-ideal-linear", rounds=50_000, seed=1))
        rep = stats.summary()["detection"]
        assert rep["loophole_open"] is True
        # one channel of the ideal wing always exceeds the threshold; the linear wing clicks 2/pi of the time
        assert rep[ALICE]["efficiency"] == 1.0 and rep[ALICE]["loophole_open"] is False
        assert rep[BOB]["efficiency"] == pytest.approx(2 / math.pi, abs=0.02)
        assert rep[BOB]["loophole_open"] is True


def test_summary_is_json_ready():
    import json
    stats = run_session(make_preset("attack-ideal-linear", rounds=20_000, seed=2))
    text = json.dumps(stats.summary(), allow_nan=False)
    assert "correlations_deg" in text
