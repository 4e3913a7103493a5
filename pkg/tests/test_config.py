import json

import pytest

from rotorfdi.config import (
    ConfigError,
    FaultSpec,
    RunConfig,
    load_run_config,
    run_config_from_dict,
)


def test_defaults_are_the_stock_chipping_scenario():
    cfg = RunConfig()
    assert cfg.trajectory.kind == "helicoid"
    assert cfg.fault == FaultSpec(rotor=2, depth=0.10, onset=10.0)
    assert cfg.imu.damping == 0.05
    assert cfg.residual.rho_fd == 0.005
    assert cfg.duration == 55.0
    assert cfg.seed == 0


def test_empty_dict_equals_defaults():
    assert run_config_from_dict({}) == RunConfig()


def test_section_overrides_leave_the_rest_alone():
    cfg = run_config_from_dict({"controller": {"kp": 5.0},
                                "fault": {"rotor": 7, "depth": 0.2},
                                "seed": 11})
    assert cfg.ctrl.kp == 5.0
    assert cfg.ctrl.kd == RunConfig().ctrl.kd
    assert cfg.fault.rotor == 7
    assert cfg.fault.onset == 10.0
    assert cfg.seed == 11


def test_list_values_become_tuples():
    cfg = run_config_from_dict({"residual": {"band_fd": [540, 600]}})
    assert cfg.residual.band_fd == (540.0, 600.0)


@pytest.mark.parametrize("data, fragment", [
    ({"bogus": 1}, "bogus"),
    ({"controller": {"k_rr": 1.0}}, "controller.k_rr"),
    ({"fault": {"motor": 2}}, "fault.motor"),
])
def test_unknown_keys_are_rejected_with_their_path(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        run_config_from_dict(data)


@pytest.mark.parametrize("data", [
    {"seed": 1.5},
    {"seed": True},
    {"duration": "long"},
    {"controller": {"kp": "big"}},
    {"trajectory": {"kind": 3}},
    {"residual": {"band_fd": 550.0}},
    {"controller": 7},
    [1, 2],
])
def test_type_mismatches_are_rejected(data):
    with pytest.raises(ConfigError):
        run_config_from_dict(data)


def test_dataclass_validation_errors_carry_the_section():
    with pytest.raises(ConfigError, match="residual"):
        run_config_from_dict({"residual": {"band_fd": [350.0, 370.0]}})
    with pytest.raises(ConfigError):
        run_config_from_dict({"fault": {"rotor": 9}})  # only 8 rotors


def test_round_trip_through_plain_dict():
    cfg = run_config_from_dict({"imu": {"damping": 0.01},
                                "trajectory": {"kind": "square"}})
    assert run_config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_load_empty_file_means_defaults(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("  \n")
    assert load_run_config(path) == RunConfig()


def test_load_reports_the_offending_line(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{\n "seed": 1,\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_run_config(path)


def test_load_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(tmp_path / "nope.json")


def test_fault_spec_validation():
    with pytest.raises(ValueError):
        FaultSpec(rotor=-1)
    with pytest.raises(ValueError):
        FaultSpec(rotor=3, depth=1.0)
    with pytest.raises(ValueError):
        FaultSpec(rotor=3, onset=-1.0)
    FaultSpec(rotor=0, depth=0.0)  # healthy ignores depth


def test_fly_runs_the_configured_flight():
    cfg = run_config_from_dict({"duration": 0.5, "fault": {"rotor": 0},
                                "seed": 4})
    res = cfg.fly(rho_live=float("inf"))
    assert res.t.size == 100
    assert not res.detected
