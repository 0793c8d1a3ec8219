"""Unit conversion exactness, domain-type validation, scenario parsing."""
import json

import pytest

from nanoflow.params import (ApplicationSpec, DimensioningResult, EnergyParams,
                             LinkProbabilities, NetworkParams, ValidationError,
                             VolumeSet, frame_time_from_bitrate, load_scenario,
                             parse_quantity, si_convert, validate)

from conftest import SCENARIOS


# --- units ---

def test_si_convert_exact_division():
    # integer-scale division keeps decimal literals single-rounded
    assert si_convert(6, "mm") == 0.006
    assert si_convert(1, "mm") == 0.001
    assert si_convert(5, "L") == 0.005
    assert si_convert(10.9, "cm/s") == 0.109
    assert si_convert(64, "us") == 6.4e-5
    assert si_convert(64, "µs") == 6.4e-5
    assert si_convert(2.4, "fW") == 2.4e-15
    assert si_convert(6, "pC") == 6e-12
    assert si_convert(10, "pF") == 1e-11
    assert si_convert(5, "ml") == 5e-6


def test_si_convert_time_multipliers():
    assert si_convert(1, "min") == 60.0
    assert si_convert(2, "min") == 120.0
    assert si_convert(1, "h") == 3600.0
    assert si_convert(24, "h") == 86400.0


def test_si_convert_unknown_unit():
    with pytest.raises(ValidationError):
        si_convert(1.0, "furlong")


def test_frame_time_from_bitrate():
    assert frame_time_from_bitrate(64, 1e6) == 6.4e-5
    with pytest.raises(ValidationError):
        frame_time_from_bitrate(0, 1e6)
    with pytest.raises(ValidationError):
        frame_time_from_bitrate(64, 0.0)


def test_parse_quantity_forms():
    assert parse_quantity(3.5, "x") == 3.5
    assert parse_quantity({"value": 6, "unit": "mm"}, "x") == 0.006
    assert parse_quantity({"value": 7}, "x") == 7  # bare value object = SI
    with pytest.raises(ValidationError):
        parse_quantity("6 mm", "x")
    with pytest.raises(ValidationError):
        parse_quantity({"value": True}, "x")
    with pytest.raises(ValidationError):
        parse_quantity({"unit": "mm"}, "x")


# --- NetworkParams ---

def test_defaults_accepted(defaults):
    assert defaults.n == 10_000 and defaults.k == 2
    assert defaults.D == 0.006 and defaults.r == 0.001
    assert validate(defaults) is defaults


def test_integral_float_counts_coerced():
    p = NetworkParams(n=100.0, k=3.0)
    assert p.n == 100 and isinstance(p.n, int)
    assert p.k == 3 and isinstance(p.k, int)
    with pytest.raises(ValidationError):
        NetworkParams(n=100.5)


@pytest.mark.parametrize("kwargs", [
    {"n": 0},
    {"k": 1},
    {"k": 10_001},
    {"eta": 0.0},
    {"eta": 1.2},
    {"T": 0.0},
    {"V_t": -1.0},
    {"D": 0.0},
    {"r": 0.0},
    {"v": 0.0},
    {"t_f": 0.0},
    {"f": 0.0},
    # coverage pass 2r/v must fit inside one charge cycle 1/f
    {"r": 0.06},
    {"f": 500.0},
])
def test_network_params_rejections(kwargs):
    with pytest.raises(ValidationError):
        NetworkParams(**kwargs)


def test_charge_cycle_fits_pass_boundary():
    # 2r/v = 0.01835 s << 1/f = 1 s at defaults; a faster f still inside is ok
    NetworkParams(f=50.0)  # 1/f = 0.02 > 0.01835


# --- VolumeSet / LinkProbabilities ---

def test_volume_set_nesting_enforced():
    VolumeSet(v_cv=2.0, v_tx=1.0, v_cx=3.0)
    with pytest.raises(ValidationError):
        VolumeSet(v_cv=1.0, v_tx=2.0, v_cx=3.0)  # tx > cv
    with pytest.raises(ValidationError):
        VolumeSet(v_cv=2.0, v_tx=1.0, v_cx=1.5)  # cx < cv
    # quadrature error slack tolerates tiny inversions
    VolumeSet(v_cv=1.0, v_tx=1.0 + 1e-12, v_cx=1.0, err_tx=1e-11)


def test_link_probabilities_invariants():
    pi = (0.8, 0.1, 0.1)
    LinkProbabilities(p_tx=0.01, p_cx=0.02, p_rx=0.1, p_frame=0.2,
                      p_empty=0.8, p_s=0.009, p_s_rnd=0.05, pi=pi)
    with pytest.raises(ValidationError):  # p_tx > p_cx
        LinkProbabilities(p_tx=0.03, p_cx=0.02, p_rx=0.1, p_frame=0.2,
                          p_empty=0.8, p_s=0.009, p_s_rnd=0.05, pi=pi)
    with pytest.raises(ValidationError):  # p_frame != 1 - p_empty
        LinkProbabilities(p_tx=0.01, p_cx=0.02, p_rx=0.1, p_frame=0.3,
                          p_empty=0.8, p_s=0.009, p_s_rnd=0.05, pi=pi)
    with pytest.raises(ValidationError):  # pi does not sum to 1
        LinkProbabilities(p_tx=0.01, p_cx=0.02, p_rx=0.1, p_frame=0.2,
                          p_empty=0.8, p_s=0.009, p_s_rnd=0.05, pi=(0.8, 0.1))


# --- EnergyParams ---

def test_energy_params_defaults():
    ep = EnergyParams()
    assert ep.e_max == 2e-13  # C V_g^2 / 2 exactly
    assert ep.P_bit == 2.4e-15


def test_energy_params_validation():
    EnergyParams(E_p=0.0, P_bit=0.0)  # zero-consumption limits allowed
    with pytest.raises(ValidationError):
        EnergyParams(W=1.5)
    with pytest.raises(ValidationError):
        EnergyParams(W=-0.1)
    with pytest.raises(ValidationError):
        EnergyParams(E_p=-1e-18)
    with pytest.raises(ValidationError):
        EnergyParams(C=0.0)
    with pytest.raises(ValidationError):
        EnergyParams(L_f=0)


# --- ApplicationSpec / DimensioningResult ---

def test_application_spec_variants():
    ApplicationSpec(name="a", eta=0.1, tau_target=3600.0, qod_target=0.99)
    ApplicationSpec(name="b", eta=0.03, throughput_target=5.5e-4,
                    tau_av_target=1800.0)
    # qod_target = 0.0 is a legal degenerate target
    ApplicationSpec(name="c", eta=0.1, tau_target=3600.0, qod_target=0.0)
    with pytest.raises(ValidationError):  # both variants
        ApplicationSpec(name="d", eta=0.1, tau_target=3600.0, qod_target=0.9,
                        throughput_target=1e-3, tau_av_target=60.0)
    with pytest.raises(ValidationError):  # neither variant
        ApplicationSpec(name="e", eta=0.1)
    with pytest.raises(ValidationError):  # half a variant
        ApplicationSpec(name="f", eta=0.1, tau_target=3600.0)
    with pytest.raises(ValidationError):  # qod_target = 1 unreachable
        ApplicationSpec(name="g", eta=0.1, tau_target=3600.0, qod_target=1.0)
    with pytest.raises(ValidationError):
        ApplicationSpec(name="h", eta=0.0, tau_target=3600.0, qod_target=0.9)


def test_dimensioning_result_bounds():
    DimensioningResult(k_opt=5, n_min=10, throughput=1.0, tau_av=60.0,
                       m_target=10)
    with pytest.raises(ValidationError):
        DimensioningResult(k_opt=11, n_min=10, throughput=1.0, tau_av=60.0,
                           m_target=10)
    with pytest.raises(ValidationError):
        DimensioningResult(k_opt=5, n_min=0, throughput=1.0, tau_av=60.0,
                           m_target=10)


# --- scenario files ---

def test_load_bundled_defaults(defaults):
    sc = load_scenario(SCENARIOS / "defaults.json")
    assert sc.network == defaults
    assert sc.energy is not None and sc.energy.L_f == 64
    assert sc.sim == {"seed": 0, "duration": {"value": 1, "unit": "h"},
                      "replications": 10}


def test_bitrate_derives_frame_time(make_scenario):
    def mut(doc):
        del doc["network"]["t_f"]
        doc["network"]["bitrate"] = 1e6
        doc["network"]["l_f"] = 64
    sc = load_scenario(make_scenario(mut))
    assert sc.network.t_f == 6.4e-5


def test_explicit_t_f_wins_over_bitrate(make_scenario):
    def mut(doc):
        doc["network"]["bitrate"] = 2e6  # would give 3.2e-5
    sc = load_scenario(make_scenario(mut))
    assert sc.network.t_f == 6.4e-5


def test_unknown_network_field_rejected(make_scenario):
    def mut(doc):
        doc["network"]["bogus_field"] = 1.0
    with pytest.raises(ValidationError, match="unknown network fields"):
        load_scenario(make_scenario(mut))


def test_unknown_section_rejected(make_scenario):
    def mut(doc):
        doc["extras"] = {}
    with pytest.raises(ValidationError, match="unknown scenario sections"):
        load_scenario(make_scenario(mut))


def test_unknown_energy_field_rejected(make_scenario):
    def mut(doc):
        doc["energy"]["volts"] = 3.0
    with pytest.raises(ValidationError, match="unknown energy fields"):
        load_scenario(make_scenario(mut))


def test_application_section_parses(make_scenario):
    def mut(doc):
        doc["application"] = {"name": "probe", "eta": 0.1,
                              "tau_target": {"value": 1, "unit": "h"},
                              "qod_target": 0.99}
    sc = load_scenario(make_scenario(mut))
    assert sc.application.tau_target == 3600.0
    assert sc.application.is_deadline


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="not valid JSON"):
        load_scenario(path)


def test_non_object_root_rejected(tmp_path):
    path = tmp_path / "list.json"
    path.write_text(json.dumps([1, 2, 3]))
    with pytest.raises(ValidationError):
        load_scenario(path)
