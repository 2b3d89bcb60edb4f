import csv
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import los_cfg
from uavppo import env as E
from uavppo.channel import RadioConfig
from uavppo.env import EnvConfig


# -- allocation codec -------------------------------------------------------

def test_encode_examples():
    assert E.encode_allocation((0, 0, 0, 0), 3) == 0
    assert E.encode_allocation((2, 0), 3) == 2
    assert E.encode_allocation((3, 3, 3, 3, 3), 3) == 1023


def test_decode_examples():
    np.testing.assert_array_equal(E.decode_allocation(0, 5, 3), [0] * 5)
    np.testing.assert_array_equal(E.decode_allocation(2, 2, 3), [2, 0])
    np.testing.assert_array_equal(E.decode_allocation(1023, 5, 3), [3] * 5)


def test_codec_rejects_out_of_range():
    with pytest.raises(ValueError):
        E.encode_allocation((4, 0), 3)
    with pytest.raises(ValueError):
        E.decode_allocation(1024, 5, 3)
    with pytest.raises(ValueError):
        E.decode_allocation(-1, 5, 3)


@pytest.mark.parametrize("n,m", [(n, m) for n in range(1, 7) for m in range(1, 4)])
def test_codec_exhaustive(n, m):
    for code in range((m + 1) ** n):
        assert E.encode_allocation(E.decode_allocation(code, n, m), m) == code


def test_codec_matches_enumeration_order():
    # MDC 0 is the least significant digit
    codes = [E.encode_allocation(a[::-1], 2) for a in itertools.product(range(3), repeat=3)]
    assert codes == list(range(27))


@given(st.lists(st.integers(0, 3), min_size=7, max_size=10))
def test_codec_roundtrip_large_n(alloc):
    code = E.encode_allocation(alloc, 3)
    np.testing.assert_array_equal(E.decode_allocation(code, len(alloc), 3), alloc)


# -- rates --------------------------------------------------------------------

def _state(cfg, uav=None, u_res=None):
    return E.EnvState(
        u_res=np.full(cfg.n_mdcs, cfg.data_size_bits) if u_res is None else np.asarray(u_res, float),
        uav_xy=np.array(cfg.uav_start if uav is None else uav, float),
        fading_sq=np.ones((cfg.n_mdcs, cfg.n_channels)),
    )


def _p_gamma(cfg, mdc, uav):
    r = cfg.radio
    d2 = (mdc[0] - uav[0]) ** 2 + (mdc[1] - uav[1]) ** 2 + r.uav_height_m**2
    return r.tx_power_w * (r.beta0 / d2) / (r.bandwidth_hz * r.noise_power_w)


def test_slot_rates_all_unassigned(small_cfg):
    np.testing.assert_array_equal(E.slot_rates(_state(small_cfg), [0, 0, 0], small_cfg), 0.0)


def test_slot_rates_single_occupant():
    cfg = los_cfg(n_mdcs=3, n_channels=2, mdc_positions=[(10, 20), (50, 50), (90, 5)])
    rates = E.slot_rates(_state(cfg), [0, 2, 0], cfg)
    pg = _p_gamma(cfg, (50, 50), cfg.uav_start)
    assert rates[1] == pytest.approx(5e6 * math.log2(1 + pg))
    assert rates[0] == rates[2] == 0.0


def test_slot_rates_symmetric_sharing():
    cfg = los_cfg(n_mdcs=2, n_channels=1, mdc_positions=[(30, 40), (30, 40)], uav_start=(0, 0))
    # d^2 = 12500, beta = 0.04, Gamma = 0.16, p*Gamma = 0.8
    pg = 0.8
    rates = E.slot_rates(_state(cfg), [1, 1], cfg)
    expected = 5e6 * math.log2(1 + pg / (1 + pg))
    np.testing.assert_allclose(rates, [expected, expected], rtol=1e-12)


def test_slot_rates_separate_channels_do_not_interfere():
    cfg = los_cfg(n_mdcs=2, n_channels=2, mdc_positions=[(30, 40), (30, 40)], uav_start=(0, 0))
    rates = E.slot_rates(_state(cfg), [1, 2], cfg)
    np.testing.assert_allclose(rates, 5e6 * math.log2(1.8), rtol=1e-12)


def test_drained_mdc_is_silent():
    cfg = los_cfg(n_mdcs=2, n_channels=1, mdc_positions=[(30, 40), (30, 40)], uav_start=(0, 0))
    rates = E.slot_rates(_state(cfg, u_res=[0.0, 1e6]), [1, 1], cfg)
    assert rates[0] == 0.0
    assert rates[1] == pytest.approx(5e6 * math.log2(1.8))


# -- step ---------------------------------------------------------------------

def test_step_on_terminal_state_raises(small_cfg, rng):
    s = _state(small_cfg, u_res=[0, 0, 0])
    with pytest.raises(RuntimeError):
        E.step(s, 0, (0, 0), small_cfg, rng)


def test_zero_rate_slot_reward(small_cfg, rng):
    s = E.reset(small_cfg, rng)
    _, out = E.step(s, 0, (0, 0), small_cfg, rng)
    assert out.r_ch == small_cfg.r_time
    assert out.r_traj == out.r_ch
    assert not out.done

    literal = EnvConfig(**{**small_cfg.__dict__, "reward_mode": "literal"})
    _, out = E.step(E.reset(literal, rng), 0, (0, 0), literal, rng)
    assert out.r_ch == 0.0


def test_shaped_reward_counts_collected_bits(rng):
    cfg = los_cfg(n_mdcs=1, n_channels=1, mdc_positions=[(50, 50)], area_m=100.0,
                  data_size_bits=1e9)
    s = E.reset(cfg, rng)
    _, out = E.step(s, 1, (0, 0), cfg, rng)
    bits = 0.5 * 5e6 * math.log2(1 + _p_gamma(cfg, (50, 50), (50, 50)))
    assert out.collected_bits[0] == pytest.approx(bits)
    assert out.r_ch == pytest.approx(-1.0 + bits / 1e9)


def test_literal_reward_uses_rates(rng):
    cfg = los_cfg(n_mdcs=1, n_channels=1, mdc_positions=[(50, 50)], area_m=100.0,
                  data_size_bits=1e9, reward_mode="literal")
    _, out = E.step(E.reset(cfg, rng), 1, (0, 0), cfg, rng)
    bits = 0.5 * 5e6 * math.log2(1 + _p_gamma(cfg, (50, 50), (50, 50)))
    assert out.r_ch == pytest.approx(-bits / 1e9)


def test_leaving_region_is_penalised(rng):
    cfg = EnvConfig(n_mdcs=2, n_channels=1, area_m=100.0, uav_start=(1.0, 50.0))
    s = E.reset(cfg, rng)
    s2, out = E.step(s, 0, (-5.0, 0.0), cfg, rng)
    assert s2.uav_xy[0] == pytest.approx(-4.0)
    assert out.r_traj == pytest.approx(out.r_ch + cfg.r_penalty)


def test_movement_precedes_transmission(rng):
    cfg = los_cfg(n_mdcs=1, n_channels=1, mdc_positions=[(60, 50)], area_m=100.0,
                  data_size_bits=1e9)
    _, out = E.step(E.reset(cfg, rng), 1, (5.0, 0.0), cfg, rng)
    bits = 0.5 * 5e6 * math.log2(1 + _p_gamma(cfg, (60, 50), (55, 50)))
    assert out.collected_bits[0] == pytest.approx(bits)


def test_displacement_clamping():
    box = EnvConfig(n_mdcs=1, n_channels=1)
    np.testing.assert_allclose(E.clamp_displacement((12, -3), box), [5, -3])
    np.testing.assert_allclose(E.clamp_displacement((-9, 9), box), [-5, 5])
    norm = EnvConfig(n_mdcs=1, n_channels=1, clamp_mode="norm")
    a = E.clamp_displacement((30, 40), norm)
    np.testing.assert_allclose(a, [3, 4])
    np.testing.assert_allclose(E.clamp_displacement((1, 1), norm), [1, 1])


def test_timeout_flags_failure(rng):
    cfg = EnvConfig(n_mdcs=2, n_channels=1, t_max=5, data_size_bits=1e12)
    s = E.reset(cfg, rng)
    rewards = []
    while not E.is_terminal(s, cfg):
        s, out = E.step(s, 3, (0, 0), cfg, rng)
        rewards.append(out.r_ch)
    assert s.step == 6
    assert out.done and not out.success
    assert rewards[-1] == cfg.r_fail
    assert all(r > cfg.r_fail for r in rewards[:-1])


# -- state vectors ------------------------------------------------------------

def test_state_vector_discrete(small_cfg, rng):
    s = E.reset(small_cfg, rng)
    v = E.state_vector_discrete(s, small_cfg)
    assert v.shape == (small_cfg.discrete_state_dim,)
    np.testing.assert_array_equal(v[:3], 1.0)
    np.testing.assert_array_equal(v, E.state_vector_discrete(s, small_cfg))
    s.u_res[1] = 0.0
    assert E.state_vector_discrete(s, small_cfg)[1] == 0.0


def test_gain_features_are_normalised():
    cfg = los_cfg(n_mdcs=2, n_channels=1, mdc_positions=[(0, 0), (100, 100)], area_m=100.0,
                  uav_start=(0, 0))
    feat = E.state_vector_discrete(_state(cfg), cfg)[2:]
    # nearest possible gain maps to +1, farthest possible to -1
    np.testing.assert_allclose(feat, [1.0, -1.0], atol=1e-12)


@pytest.mark.parametrize("uav,expected", [((0, 0), (0, 0)), ((200, 200), (1, 1)), ((100, 100), (0.5, 0.5))])
def test_state_vector_continuous(uav, expected, rng):
    cfg = EnvConfig()
    s = E.reset(cfg, rng)
    s.uav_xy = np.array(uav, float)
    v = E.state_vector_continuous(s, cfg)
    assert v.shape == (cfg.continuous_state_dim,)
    np.testing.assert_allclose(v[-2:], expected)
    np.testing.assert_array_equal(v[:-2], E.state_vector_discrete(s, cfg))


# -- reset / episodes -----------------------------------------------------------

def test_reset(small_cfg):
    a = E.reset(small_cfg, np.random.default_rng(1))
    b = E.reset(small_cfg, np.random.default_rng(1))
    c = E.reset(small_cfg, np.random.default_rng(2))
    np.testing.assert_array_equal(a.u_res, [5e6] * 3)
    assert a.step == 0
    np.testing.assert_array_equal(a.uav_xy, small_cfg.uav_start)
    np.testing.assert_array_equal(a.fading_sq, b.fading_sq)
    np.testing.assert_array_equal(a.u_res, c.u_res)
    assert not np.array_equal(a.fading_sq, c.fading_sq)


def _random_episode(cfg, rng):
    s = E.reset(cfg, rng)
    total = np.zeros(cfg.n_mdcs)
    prev = s.u_res.copy()
    length = 0
    while not E.is_terminal(s, cfg):
        d = rng.uniform(-cfg.max_step, cfg.max_step, 2)
        before = s.uav_xy.copy()
        s, out = E.step(s, int(rng.integers(cfg.n_actions)), d, cfg, rng)
        assert np.all(np.abs(s.uav_xy - before) <= cfg.max_step + 1e-12)
        assert np.all(s.u_res <= prev) and np.all(s.u_res >= 0)
        if E.in_region(s.uav_xy, cfg):
            assert out.r_traj == out.r_ch
        prev = s.u_res.copy()
        total += out.collected_bits
        length += 1
    return s, total, length


def test_conservation_and_episode_length(small_cfg, rng):
    cfg = EnvConfig(**{**small_cfg.__dict__, "t_max": 60})
    for _ in range(20):
        s, total, length = _random_episode(cfg, rng)
        N_U = cfg.n_mdcs * cfg.data_size_bits
        assert abs(total.sum() + s.u_res.sum() - N_U) <= 1e-6 * N_U
        assert length <= cfg.t_max + 1


def test_silent_mdcs_get_time_penalty_every_step(small_cfg, rng):
    s = E.reset(small_cfg, rng)
    for _ in range(10):
        s, out = E.step(s, 0, (0, 0), small_cfg, rng)
        assert out.r_ch == small_cfg.r_time


# -- config / files -------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(r_fail=-0.5)
    with pytest.raises(ValueError):
        EnvConfig(n_mdcs=2, mdc_positions=[(0, 0), (300, 0)])
    with pytest.raises(ValueError):
        EnvConfig(reward_mode="bogus")
    with pytest.raises(KeyError, match="bogus_key"):
        EnvConfig.from_dict({"bogus_key": 1})
    with pytest.raises(KeyError, match="beta"):
        EnvConfig.from_dict({"radio": {"beta": 1}})


def test_placement_is_seeded():
    a, b, c = EnvConfig(placement_seed=7), EnvConfig(placement_seed=7), EnvConfig(placement_seed=8)
    assert a.mdc_positions == b.mdc_positions != c.mdc_positions


def test_scenario_roundtrip(tmp_path):
    cfg = EnvConfig(radio=RadioConfig(rician_k=3.0), n_mdcs=4, placement_seed=9, t_max=77)
    path = tmp_path / "scenario.yaml"
    E.save_scenario(cfg, path)
    assert E.load_scenario(path) == cfg
    text = path.read_text()
    for key in ("radio:", "rician_k:", "mdc_positions:", "data_size_bits:"):
        assert key in text


def test_trace_csv(tmp_path, small_cfg):
    rows = [{"step": 1, "x_uav": 1.0, "y_uav": 2.0, "alloc_encoded": 5, "r_ch": -1.0,
             "r_traj": -6.0, "collected_total": 0.0, "u_res": [1.0, 2.0, 3.0]}]
    path = tmp_path / "trace.csv"
    E.write_trace(path, rows, 3)
    with open(path) as f:
        header, first = list(csv.reader(f))
    assert header == E.TRACE_HEADER + ["u_res_0", "u_res_1", "u_res_2"]
    assert first[3] == "5" and first[-1] == "3.0"
