import pytest
from hypothesis import given, settings, strategies as st

from heraldsim.config import (
    RunConfig,
    config_from_dict,
    dump_config,
    load_config,
    parse_config,
    save_config,
)
from heraldsim.errors import ConfigParseError, ConfigValidationError


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == RunConfig()
    assert cfg.pulse.duration_ns == 49.0
    assert cfg.pulse.rise_ns == 5.0
    assert cfg.pulse.extinction == 0.015
    assert cfg.timing.rep_rate_Hz == 50e3
    assert cfg.timing.window_ns == 500.0
    assert cfg.gate.length_ns == 40.0
    assert cfg.analysis.lowpass_MHz == 25.0
    assert cfg.analysis.fock_cutoff == 6
    assert cfg.apd.dark_rate_per_s == 0.4 and cfg.apd.cw_rate_per_s == 275.0
    assert [f.kappa_over_2pi_MHz for f in cfg.filters] == [2.2, 12.0]
    assert cfg.opo.name == "opo"


def test_negative_rep_rate_rejected():
    with pytest.raises(ConfigValidationError, match="rep_rate_Hz"):
        parse_config("[timing]\nrep_rate_Hz = -50000\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigValidationError, match="pulse.width"):
        parse_config("[pulse]\nwidth = 3\n")


def test_parse_error_reports_line():
    with pytest.raises(ConfigParseError, match="line 2"):
        parse_config("[pulse]\nduration_ns = = 3\n")


def test_cross_field_checks():
    with pytest.raises(ConfigValidationError, match="opo"):
        parse_config("[[filters]]\nname = 'fc'\nkappa_over_2pi_MHz = 12.0\n")
    with pytest.raises(ConfigValidationError, match="bin_ns"):
        parse_config("[clicks]\nbin_ns = 3.0\n")
    with pytest.raises(ConfigValidationError):
        parse_config("[analysis]\nfock_cutoff = 7\n")
    with pytest.raises(ConfigValidationError):
        parse_config("[homodyne]\npopulations = [0.5, -0.1]\n")


def test_round_trip(tmp_path):
    cfg = RunConfig().updated({"pulse.duration_ns": 20.0, "gate.center_ns": 45.0, "seed": 9,
                               "apd.leakage": "field"})
    path = tmp_path / "run.toml"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert load_config(path).digest() == cfg.digest()


def test_updated_rejects_unknown_keys():
    with pytest.raises(ConfigValidationError, match="unknown"):
        RunConfig().updated({"pulse.bogus": 1})
    with pytest.raises(ConfigValidationError, match="unknown"):
        RunConfig().updated({"nosection.x": 1})


def test_digest_changes_with_content():
    assert RunConfig().digest() != RunConfig(seed=1).digest()
    assert len(RunConfig().digest()) == 32


@settings(max_examples=30, deadline=None)
@given(duration=st.floats(1.0, 400.0), extinction=st.floats(0.0, 0.5),
       seed=st.integers(0, 2**62), lowpass=st.floats(0.5, 200.0))
def test_round_trip_property(duration, extinction, seed, lowpass):
    cfg = config_from_dict({"seed": seed, "pulse": {"duration_ns": duration,
                                                    "extinction": extinction},
                            "analysis": {"lowpass_MHz": lowpass}})
    assert parse_config(dump_config(cfg)) == cfg
