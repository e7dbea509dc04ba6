import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcnoma.channel import (
    AntennaConfig,
    ChannelSet,
    ScenarioConfig,
    SPEED_OF_LIGHT,
    dump_scenario,
    element_pattern,
    generate_channels,
    load_channels,
    load_scenario,
    rma_pathloss,
    save_channels,
)
from mcnoma.errors import InputError, ParseError, ValidationError


def test_pattern_boresight_is_peak_gain():
    cfg = AntennaConfig()
    assert element_pattern(90 + cfg.electric_downtilt, 0.0, cfg) == pytest.approx(cfg.boresight_gain, abs=1e-12)


@pytest.mark.parametrize("azimuth", [-180.0, 180.0])
@pytest.mark.parametrize("zenith", [0.0, 45.0, 102.0, 180.0])
def test_pattern_back_lobe_floor(azimuth, zenith):
    cfg = AntennaConfig()
    assert element_pattern(zenith, azimuth, cfg) == pytest.approx(cfg.boresight_gain - 30.0, abs=1e-12)


def test_pattern_vertical_beamwidth_point():
    cfg = AntennaConfig()
    gain = element_pattern(90 + cfg.electric_downtilt + 65.0, 0.0, cfg)
    assert gain == pytest.approx(cfg.boresight_gain - 12.0, abs=1e-12)


def test_pattern_rejects_out_of_range_angles():
    with pytest.raises(InputError):
        element_pattern(190.0, 0.0)


def test_pathloss_monotone_in_distance_and_frequency():
    assert rma_pathloss(1000, 30, 6, 3.5e9) > rma_pathloss(500, 30, 6, 3.5e9)
    assert rma_pathloss(500, 30, 6, 7.0e9) > rma_pathloss(500, 30, 6, 3.5e9)


def test_pathloss_golden_value():
    # closed form by hand: free space at 1 m plus 21 dB/decade of 3-D distance
    d3 = np.hypot(500.0, 24.0)
    expected = 20 * np.log10(4 * np.pi * 3.5e9 / SPEED_OF_LIGHT) + 21.0 * np.log10(d3)
    assert rma_pathloss(500, 30, 6, 3.5e9) == pytest.approx(expected, abs=1e-10)
    assert rma_pathloss(500, 30, 6, 3.5e9) == pytest.approx(100.018, abs=1e-3)


def test_default_scenario_dimensions():
    ch = generate_channels(ScenarioConfig())
    assert ch.matrices.shape == (64, 3, 2)
    assert ch.user_dims == (1, 1, 1)
    assert ch.side == "bc"


def test_same_seed_same_channels():
    cfg = ScenarioConfig(seed=7)
    assert generate_channels(cfg) == generate_channels(cfg)
    assert generate_channels(cfg) != generate_channels(cfg.with_(seed=8))


def test_doubling_distance_lowers_row_norms():
    near = far = 0.0
    for seed in range(100):
        cfg = ScenarioConfig(seed=seed)
        near += np.sum(np.abs(generate_channels(cfg).matrices) ** 2, axis=(0, 2))
        far += np.sum(np.abs(generate_channels(cfg.with_(distances=(1000.0,) * 3)).matrices) ** 2, axis=(0, 2))
    assert np.all(far < near)


def test_noise_power_matches_psd_times_subcarrier_bandwidth():
    cfg = ScenarioConfig()
    # -174 dBm/Hz over 100 MHz is -94 dBm; split over 64 subcarriers
    expected = 10 ** ((-94.0 - 30.0) / 10.0) / 64
    assert cfg.noise_power_per_subcarrier == pytest.approx(expected, rel=1e-12)


def test_save_load_round_trip(tmp_path):
    ch = generate_channels(ScenarioConfig(seed=3, num_subcarriers=8))
    path = tmp_path / "ch.bin"
    save_channels(ch, path)
    assert load_channels(path) == ch


def test_truncated_file_is_a_parse_error(tmp_path):
    ch = generate_channels(ScenarioConfig(num_subcarriers=4))
    path = tmp_path / "ch.bin"
    save_channels(ch, path)
    data = path.read_bytes()
    for cut in (3, 12, len(data) - 5):
        path.write_bytes(data[:cut])
        with pytest.raises(ParseError):
            load_channels(path)


def test_bad_magic_is_a_parse_error(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOTACHANNELFILE!")
    with pytest.raises(ParseError) as err:
        load_channels(path)
    assert err.value.offset == 0


def test_mismatched_partition_is_rejected():
    H = np.ones((2, 3, 2), dtype=complex)
    with pytest.raises(ValidationError):
        ChannelSet(H, ((0, 0, 1), (1, 1, 2)), np.eye(3))
    with pytest.raises(ValidationError):
        ChannelSet(H, ((0, 0, 2), (1, 1, 3)), np.eye(3))


def test_scenario_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig(num_users=2)  # per-user lists still have 3 entries
    with pytest.raises(ValidationError):
        ScenarioConfig(distances=(500.0, -1.0, 500.0))


def test_scenario_file_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=11, num_subcarriers=16, user_azimuths=(0.0, 10.0, -10.0))
    path = tmp_path / "s.yaml"
    dump_scenario(cfg, path)
    assert load_scenario(path) == cfg


def test_scenario_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("num_users: 3\nbogus: 1\n")
    with pytest.raises(InputError):
        load_scenario(path)


def test_colocated_users_share_line_of_sight_tap():
    cfg = ScenarioConfig(seed=2, user_azimuths=(5.0, 5.0, 5.0))
    ch = generate_channels(cfg)
    assert ch.matrices.shape == (64, 3, 2)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), U=st.integers(1, 4), nt=st.integers(1, 4), N=st.sampled_from([1, 4, 16]))
def test_generated_shapes_and_determinism(seed, U, nt, N):
    cfg = ScenarioConfig(seed=seed).with_(num_users=U, bs_antennas=nt, num_subcarriers=N)
    a, b = generate_channels(cfg), generate_channels(cfg)
    assert a.matrices.shape == (N, U, nt)
    assert a == b
    assert np.all(np.isfinite(a.matrices))
