import itertools
import warnings

import numpy as np
import pytest

from lbmimo.bd import build_precoder_set
from lbmimo.channel import ChannelSet, SystemConfig, _complex_gaussian, draw_channel_batch, substream
from lbmimo.errors import ConfigurationError
from lbmimo.lattice import QAM4, perturb, qam_demodulate, qam_modulate
from lbmimo.link import (
    BerCurve,
    BerPoint,
    SchemeId,
    StoppingRule,
    broadcast,
    diversity_slope,
    plain_scale,
    propagate,
    receive_lb,
    receive_ml,
    receive_zf,
    run_ber,
    simulate_block,
    snr_at_ber,
    transmit_bd_plain,
    transmit_lb,
    transmit_zf,
    worker_count,
)

from conftest import SCENARIOS, random_complex, random_precoders


def _curve(snr, ber):
    pts = tuple(BerPoint(float(s), int(round(b * 1e9)), 10**9, 1000, 0) for s, b in zip(snr, ber))
    return BerCurve("test", 0, pts)


def _bits(rng, cfg):
    return rng.integers(0, 2, (cfg.n_users, 2 * cfg.streams_per_user), dtype=np.int8)


def single_chain(cfg, scheme, channels, bits, noise, radius=None):
    """Per-realization reference chain built from the public building blocks."""
    scheme = SchemeId.parse(scheme)
    pre = build_precoder_set(channels, cfg)
    symbols = [qam_modulate(b) for b in bits]
    p = cfg.per_user_power
    if scheme is SchemeId.LB_MU_SM:
        xs, gammas = transmit_lb(pre, symbols, radius=radius)
    elif scheme is SchemeId.ZF_MU_SM:
        xs, gammas = transmit_zf(pre, symbols)
    else:
        xs = transmit_bd_plain(pre, symbols)
    ys = propagate(channels, broadcast(pre, xs, p), noise)
    out = []
    for k, (user, y) in enumerate(zip(pre, ys)):
        if scheme.precoded:
            out.append(receive_lb(y, gammas[k], np.sqrt(p)))
        elif scheme is SchemeId.ZF_RX:
            out.append(receive_zf(y, user.h_eff, scale=plain_scale(user.streams, p)))
        else:
            out.append(receive_ml(y, user.h_eff, scale=plain_scale(user.streams, p)))
    return np.array(out), xs


class TestSchemeId:
    def test_parse(self):
        assert SchemeId.parse("lb") is SchemeId.LB_MU_SM
        assert SchemeId.parse("ML-RX") is SchemeId.ML_RX
        assert SchemeId.parse(SchemeId.ZF_RX) is SchemeId.ZF_RX
        with pytest.raises(ConfigurationError):
            SchemeId.parse("mmse")

    def test_closed(self):
        assert [s.value for s in SchemeId] == ["LB-MU-SM", "ZF-MU-SM", "ZF-RX", "ML-RX"]


class TestTransmit:
    def test_identity_channel(self, rng):
        class Eye:
            h_eff_inv = np.eye(2, dtype=complex)

        s = qam_modulate(rng.integers(0, 2, 4))
        (x,), (g,) = transmit_lb([Eye()], [s])
        np.testing.assert_allclose(x, s / np.linalg.norm(s))
        assert g == pytest.approx(1.0)

    def test_unit_norm(self, rng):
        for _ in range(50):
            cfg, ch, pre = random_precoders(rng, 3, 2)
            xs, _ = transmit_lb(pre, [qam_modulate(b) for b in _bits(rng, cfg)])
            for x in xs:
                assert np.linalg.norm(x) == pytest.approx(1.0, abs=1e-12)

    def test_zf_is_radius_zero(self, rng):
        cfg, ch, pre = random_precoders(rng)
        s = [qam_modulate(b) for b in _bits(rng, cfg)]
        a, ga = transmit_zf(pre, s)
        b, gb = transmit_lb(pre, s, radius=0)
        assert ga == gb
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_perturbation_saves_power(self):
        rng = np.random.default_rng(77)
        cfg = SystemConfig.scenario(2, 2)
        for h in draw_channel_batch(rng, cfg, 5000):
            pre = build_precoder_set(ChannelSet(h), cfg)
            s = [qam_modulate(b) for b in _bits(rng, cfg)]
            _, g_zf = transmit_zf(pre, s)
            _, g_lb = transmit_lb(pre, s)
            assert all(lb <= zf * (1 + 1e-12) for lb, zf in zip(g_lb, g_zf))

    def test_zero_symbol_rejected(self, rng):
        _, _, pre = random_precoders(rng)
        with pytest.raises(ValueError):
            transmit_lb(pre[:1], [np.zeros(2)])

    def test_plain_power(self, rng):
        bits = rng.integers(0, 2, (20000, 6))
        x = transmit_bd_plain(None, qam_modulate(bits))
        assert np.mean(np.sum(np.abs(np.array(x)) ** 2, axis=-1)) == pytest.approx(1.0, rel=1e-12)

    def test_plain_interference_free(self, rng):
        cfg, ch, pre = random_precoders(rng, 2, 3)
        s = [qam_modulate(b) for b in _bits(rng, cfg)]
        xs = transmit_bd_plain(pre, s)
        ys = propagate(ch, broadcast(pre, xs))
        for user, x, y in zip(pre, xs, ys):
            np.testing.assert_allclose(y, user.h_eff @ x, atol=1e-8)


class TestReceive:
    def test_lb_noiseless(self, rng):
        _, _, pre = random_precoders(rng)
        s = qam_modulate(rng.integers(0, 2, 4))
        sol = perturb(s, pre[0].h_eff_inv)
        y = sol.s_tilde / np.sqrt(sol.gamma)
        np.testing.assert_array_equal(receive_lb(y, sol.gamma), qam_demodulate(s))

    def test_lb_folds_every_offset(self):
        for point, (a, b) in itertools.product(QAM4.points, itertools.product(range(-3, 4), repeat=2)):
            s_tilde = np.array([point + 2.0 * (a + 1j * b)])
            gamma = 2.7
            got = receive_lb(s_tilde / np.sqrt(gamma) * 1.3, gamma, scale=1.3)
            np.testing.assert_array_equal(got, qam_demodulate([point]))

    def test_lb_pure_noise(self, rng):
        bits = rng.integers(0, 2, (25000, 4))
        y = _complex_gaussian(rng, (25000, 2))
        est = receive_lb(y, np.ones(25000))
        assert np.mean(est != bits) == pytest.approx(0.5, abs=0.05)

    def test_lb_requires_positive_gamma(self):
        with pytest.raises(ValueError):
            receive_lb(np.ones(2), 0.0)

    def test_zf_identity_and_noise(self, rng):
        s = qam_modulate(rng.integers(0, 2, 6))
        np.testing.assert_array_equal(receive_zf(s, np.eye(3)), qam_demodulate(s))
        bits = rng.integers(0, 2, (25000, 4))
        h = random_complex(rng, 25000, 2, 2)
        y = h @ qam_modulate(bits)[..., None]
        y = y[..., 0] + 100 * _complex_gaussian(rng, (25000, 2))
        assert np.mean(receive_zf(y, h) != bits) == pytest.approx(0.5, abs=0.05)

    def test_ml_single_stream_is_slicer(self, rng):
        y = random_complex(rng, 500, 1)
        np.testing.assert_array_equal(receive_ml(y, np.ones((1, 1))), qam_demodulate(y))

    def test_ml_matches_brute_force(self, rng):
        h = random_complex(rng, 2, 2)
        cands = list(itertools.product((0, 1), repeat=4))
        for y in random_complex(rng, 50, 2):
            metrics = [np.linalg.norm(y - h @ qam_modulate(c)) for c in cands]
            np.testing.assert_array_equal(receive_ml(y, h), cands[int(np.argmin(metrics))])

    def test_ml_agrees_with_zf_at_high_snr(self, rng):
        n = 1000
        h = random_complex(rng, n, 2, 2)
        bits = rng.integers(0, 2, (n, 4))
        y = (h @ qam_modulate(bits)[..., None])[..., 0] + 1e-3 * _complex_gaussian(rng, (n, 2))
        ml, zf = receive_ml(y, h), receive_zf(y, h)
        agree = np.mean(np.all(ml.reshape(n, 2, 2) == zf.reshape(n, 2, 2), axis=-1))
        assert agree >= 0.999


class TestEndToEnd:
    @pytest.mark.parametrize("scheme", list(SchemeId))
    @pytest.mark.parametrize("n_rx,n_users", SCENARIOS)
    def test_noiseless_single_chain(self, scheme, n_rx, n_users):
        rng = np.random.default_rng(n_rx * 10 + n_users)
        cfg = SystemConfig.scenario(n_rx, n_users, per_user_power=2.0)
        for h in draw_channel_batch(rng, cfg, 30):
            bits = _bits(rng, cfg)
            est, _ = single_chain(cfg, scheme, ChannelSet(h), bits, None)
            np.testing.assert_array_equal(est, bits)

    @pytest.mark.parametrize("n_rx,n_users", SCENARIOS)
    def test_interference_free(self, n_rx, n_users, rng):
        cfg = SystemConfig.scenario(n_rx, n_users)
        ch = ChannelSet(draw_channel_batch(rng, cfg, 1)[0])
        pre = build_precoder_set(ch, cfg)
        xs, _ = transmit_lb(pre, [qam_modulate(b) for b in _bits(rng, cfg)])
        full = propagate(ch, broadcast(pre, xs))
        for k, user in enumerate(pre):
            alone = ch[k] @ (user.nulling @ xs[k])
            np.testing.assert_allclose(full[k], alone, atol=1e-8)

    @pytest.mark.parametrize("scheme", list(SchemeId))
    @pytest.mark.parametrize("n_rx,n_users", SCENARIOS)
    def test_batch_matches_single_chain(self, scheme, n_rx, n_users):
        cfg = SystemConfig.scenario(n_rx, n_users, snr_db=8.0)
        trials = 40
        errors, nbits, redraws = simulate_block(cfg, scheme, substream(5, 1), trials, radius=None)
        # replay the documented draw order
        rng = substream(5, 1)
        h = draw_channel_batch(rng, cfg, trials)
        bits = rng.integers(0, 2, size=(trials, n_users, 2 * n_rx), dtype=np.int8)
        noise = _complex_gaussian(rng, (trials, n_users, n_rx)) * np.sqrt(cfg.noise_var)
        expected = 0
        for t in range(trials):
            est, _ = single_chain(cfg, scheme, ChannelSet(h[t]), bits[t], noise[t])
            expected += int(np.count_nonzero(est != bits[t]))
        assert redraws == 0
        assert nbits == bits.size
        assert errors == expected
        assert errors > 0

    @pytest.mark.parametrize("n_rx,n_users", SCENARIOS)
    def test_noiseless_run_ber(self, n_rx, n_users):
        cfg = SystemConfig.scenario(n_rx, n_users)
        for scheme in SchemeId:
            curve = run_ber(cfg, scheme, [250.0], StoppingRule(0, 1000, 1000), master_seed=3, workers=1)
            assert curve.points[0].trials == 1000
            assert curve.points[0].bit_errors == 0


class TestRunBer:
    def test_stopping_rule(self):
        stop = StoppingRule(100, 1000, 5000)
        assert not stop.done(99, 5000 - 1)
        assert stop.done(0, 5000)
        assert not stop.done(100, 999)
        assert stop.done(100, 1000)
        with pytest.raises(ConfigurationError):
            StoppingRule(-1, 0, 10)

    def test_point_fields(self):
        curve = run_ber(SystemConfig.scenario(2, 2), "zf", [0.0, 10.0], StoppingRule(50, 500, 2000), master_seed=4, workers=1, block_size=250)
        for p in curve.points:
            assert p.bits_simulated == p.trials * 8
            assert p.ber == p.bit_errors / p.bits_simulated
            assert p.seed == 4
            assert p.trials % 250 == 0
        assert curve.ber[0] > curve.ber[1]
        assert curve.config["radius"] is None

    @pytest.mark.parametrize("workers", [2, 3, 8])
    def test_worker_invariance(self, workers):
        cfg = SystemConfig.scenario(2, 2)
        stop = StoppingRule(300, 400, 6000)
        base = run_ber(cfg, "lb", [4.0, 12.0], stop, master_seed=21, workers=1, block_size=200)
        other = run_ber(cfg, "lb", [4.0, 12.0], stop, master_seed=21, workers=workers, block_size=200)
        assert base == other

    def test_tail_truncation(self):
        cfg = SystemConfig.scenario(2, 2)
        stop = StoppingRule(100, 500, 1000)
        full = run_ber(cfg, "ml", [0.0, 20.0, 30.0, 40.0], stop, master_seed=2, workers=1)
        cut = run_ber(cfg, "ml", [0.0, 20.0, 30.0, 40.0], stop, master_seed=2, workers=1, tail_min_errors=50)
        assert full.points[1].bit_errors < 50
        assert cut.points == full.points[:2]

    def test_seed_changes_result(self):
        cfg = SystemConfig.scenario(2, 2)
        stop = StoppingRule(0, 1000, 1000)
        a = run_ber(cfg, "ml", [6.0], stop, master_seed=1, workers=1)
        b = run_ber(cfg, "ml", [6.0], stop, master_seed=2, workers=1)
        assert a.points[0].bit_errors != b.points[0].bit_errors

    def test_common_random_numbers_ordering(self):
        # same streams for every scheme: ML never loses to ZF by more than noise
        cfg = SystemConfig.scenario(2, 2)
        stop = StoppingRule(500, 2000, 20000)
        curves = {s: run_ber(cfg, s, [6.0, 12.0], stop, master_seed=8, workers=1) for s in SchemeId}
        for i in range(2):
            pts = {s: c.points[i] for s, c in curves.items()}
            if pts[SchemeId.ML_RX].bit_errors >= 500 and pts[SchemeId.ZF_RX].bit_errors >= 500:
                assert pts[SchemeId.ML_RX].ber <= pts[SchemeId.ZF_RX].ber
            if pts[SchemeId.LB_MU_SM].bit_errors >= 500 and pts[SchemeId.ZF_MU_SM].bit_errors >= 500:
                assert pts[SchemeId.LB_MU_SM].ber <= pts[SchemeId.ZF_MU_SM].ber

    @pytest.mark.parametrize(
        "kwargs",
        [dict(snr_db_list=[]), dict(block_size=0), dict(radius=-1), dict(workers=0)],
    )
    def test_config_errors(self, kwargs):
        args = dict(cfg=SystemConfig.scenario(2, 2), scheme="lb", snr_db_list=[0.0], stop=StoppingRule(0, 10, 10))
        args.update(kwargs)
        with pytest.raises(ConfigurationError):
            run_ber(**args)

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.setenv("MIMO_SIM_THREADS", "3")
        assert worker_count() == 3
        assert worker_count(5) == 5
        monkeypatch.delenv("MIMO_SIM_THREADS")
        assert worker_count() >= 1


class TestCurveAnalysis:
    def test_slope_order_one(self):
        snr = np.arange(0, 31, 5.0)
        assert diversity_slope(_curve(snr, 10 ** (-snr / 10))) == pytest.approx(-1.0, abs=1e-6)

    def test_slope_order_two(self):
        snr = np.arange(0, 31, 5.0)
        assert diversity_slope(_curve(snr, 10 ** (-snr / 5))) == pytest.approx(-2.0, abs=1e-6)

    def test_slope_drops_zero_error_tail(self):
        pts = (
            BerPoint(0.0, 1000, 10**4, 1, 0),
            BerPoint(10.0, 100, 10**4, 1, 0),
            BerPoint(20.0, 10, 10**4, 1, 0),
            BerPoint(30.0, 0, 10**4, 1, 0),
        )
        with pytest.warns(UserWarning):
            assert diversity_slope(BerCurve("x", 0, pts)) == pytest.approx(-1.0)

    def test_slope_min_errors(self):
        pts = tuple(BerPoint(float(s), e, 10**6, 1, 0) for s, e in [(0, 10**5), (10, 10**4), (20, 10**3), (30, 5)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert diversity_slope(BerCurve("x", 0, pts), tail_points=3, min_errors=50) == pytest.approx(-1.0)

    def test_slope_needs_two_points(self):
        pts = (BerPoint(0.0, 10, 100, 1, 0), BerPoint(10.0, 0, 100, 1, 0))
        with pytest.raises(ValueError), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            diversity_slope(BerCurve("x", 0, pts))

    def test_snr_at_ber(self):
        snr = np.arange(0, 31, 5.0)
        assert snr_at_ber(_curve(snr, 10 ** (-snr / 10)), 1e-2) == pytest.approx(20.0)
        assert snr_at_ber(_curve(snr, 10 ** (-snr / 10)), 10**-1.5) == pytest.approx(15.0)
        assert np.isnan(snr_at_ber(_curve(snr, 10 ** (-snr / 10)), 1e-9))
