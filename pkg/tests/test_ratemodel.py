import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import asic_ser_hand
from relcast.envflux import Environment
from relcast.errors import ConfigurationError, DomainError, UsageError
from relcast.ratemodel import (
    DeRating,
    DesignElement,
    OperatingPoint,
    RateModelConstants,
    TdrMode,
    asic_ser,
    demo_design,
    design_from_dict,
    load_design,
    mem_fail_rate,
    raw_ser_comb,
    raw_ser_seq,
    seq_fail_rate,
    tdr_comb,
    tdr_seq,
)

DEMO = demo_design().elements
vdd_st = st.floats(0.5, 2.0)


@pytest.mark.parametrize("v, expected", [(1.2, 100.0), (0.8, 140.0), (1.5, 70.0)])
def test_raw_ser_seq(v, expected):
    assert raw_ser_seq(v) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("v, pw, expected", [(1.2, 50, 50.0), (0.8, 50, 70.0), (1.2, 10, 250.0)])
def test_raw_ser_comb(v, pw, expected):
    assert raw_ser_comb(v, pw) == pytest.approx(expected, rel=1e-12)


def test_raw_ser_domains():
    with pytest.raises(DomainError):
        raw_ser_seq(0.4)
    with pytest.raises(DomainError, match="pulse width below 10 ps"):
        raw_ser_comb(1.2, 9.99)


@given(vdd_st)
def test_comb_at_reference_pw_is_half_seq(v):
    assert raw_ser_comb(v, 50) == pytest.approx(raw_ser_seq(v) / 2, rel=1e-12)


@given(vdd_st, vdd_st)
def test_raw_rates_decrease_with_voltage(a, b):
    if a < b:
        assert raw_ser_seq(a) > raw_ser_seq(b)
        assert raw_ser_comb(a, 50) > raw_ser_comb(b, 50)


@pytest.mark.parametrize("f, expected", [(0, 1.0), (1e6, 0.5), (2e6, 0.0)])
def test_tdr_seq(f, expected):
    assert tdr_seq(f) == expected


def test_tdr_seq_domain():
    with pytest.raises(DomainError):
        tdr_seq(2.0e6 + 1)


def test_tdr_comb_modes():
    assert tdr_comb(50, 0.1, TdrMode.PAPER_COMPAT) == pytest.approx(5.0)
    assert tdr_comb(50, 0.1, TdrMode.PHYSICAL) == pytest.approx(5.0e-6)
    assert tdr_comb(100, 2.0, TdrMode.PAPER_COMPAT) == pytest.approx(200.0)
    assert tdr_comb(1e7, 2.0, TdrMode.PHYSICAL) == 1.0


def test_seq_fail_rate():
    assert seq_fail_rate([(100, [0.25, 0.5])]) == 12.5
    assert seq_fail_rate([]) == 0.0
    assert seq_fail_rate([(100, [0.25, 0.5]), (100, [0.25, 0.5])]) == 25.0
    with pytest.raises(DomainError):
        seq_fail_rate([(-1, [1.0])])


def test_mem_fail_rate():
    assert mem_fail_rate([DesignElement.memory(2, sbu=100, mbu=1)]) == 200.0
    assert mem_fail_rate([DesignElement.memory(2, sbu=100, mbu=1, ecc=True)]) == 2.0
    assert mem_fail_rate([DesignElement.memory(0, sbu=100, mbu=1)]) == 0.0
    with pytest.raises(UsageError):
        mem_fail_rate([DesignElement.sequential(1)])


@given(st.floats(0, 100), st.floats(0, 1000), st.floats(0, 1000))
def test_ecc_never_worse_when_mbu_below_sbu(size, sbu, mbu):
    if mbu <= sbu:
        plain = mem_fail_rate([DesignElement.memory(size, sbu, mbu)])
        ecc = mem_fail_rate([DesignElement.memory(size, sbu, mbu, ecc=True)])
        assert ecc <= plain


def test_design_element_invariants():
    with pytest.raises(ConfigurationError):
        DesignElement(DesignElement.sequential(1).kind, 1.0, ecc=True)
    with pytest.raises(DomainError):
        DesignElement.sequential(float("inf"))


def test_asic_ser_zero_frequency():
    op = OperatingPoint(1.2, 0.0, Environment.NEUTRON)
    assert asic_ser(op, DEMO) == pytest.approx(6.25, rel=1e-12)


@pytest.mark.parametrize(
    "v, env, f, cells",
    [(0.8, Environment.NEUTRON, 0.1, 10**6), (0.8, Environment.NEUTRON, 0.1, 2**20),
     (1.5, Environment.HEAVY_ION, 2.0, 2**20), (1.0, Environment.ALPHA, 0.7, 10**6)],
)
def test_asic_ser_matches_rational_oracle(v, env, f, cells):
    op = OperatingPoint(v, f, env)
    c = RateModelConstants(mbit_cells=float(cells))
    assert asic_ser(op, DEMO, c=c) == pytest.approx(asic_ser_hand(v, f, env.default_pulse_width_ps, cells_per_mbit=cells), rel=1e-12)


def test_asic_ser_published_corners_binary_mbit():
    # hand evaluation with 2**20 cells per Mbit
    c = RateModelConstants.binary()
    assert asic_ser(OperatingPoint(0.8, 0.1, Environment.NEUTRON), DEMO, c=c) == pytest.approx(238.092288, rel=1e-12)
    assert asic_ser(OperatingPoint(1.5, 2.0, Environment.HEAVY_ION), DEMO, c=c) == pytest.approx(2293.76, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(vdd_st, st.sampled_from(list(Environment)), st.floats(0.0, 1.5), st.floats(0.01, 0.25))
def test_asic_ser_affine_in_frequency(v, env, f0, h):
    vals = [asic_ser(OperatingPoint(v, f0 + i * h, env), DEMO) for i in range(3)]
    second = vals[0] - 2 * vals[1] + vals[2]
    assert abs(second) <= 1e-9 * max(abs(x) for x in vals)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 1.7), st.sampled_from(list(Environment)), st.floats(0.0, 2.0), st.floats(0.01, 0.1))
def test_asic_ser_affine_in_voltage(v0, env, f, h):
    vals = [asic_ser(OperatingPoint(v0 + i * h, f, env), DEMO) for i in range(3)]
    second = vals[0] - 2 * vals[1] + vals[2]
    assert abs(second) <= 1e-9 * max(1.0, max(abs(x) for x in vals))


def test_derating_scale_factor_16():
    for v, f, env in [(0.8, 0.1, Environment.NEUTRON), (1.3, 1.9, Environment.HEAVY_ION), (1.0, 0.0, Environment.ALPHA)]:
        op = OperatingPoint(v, f, env)
        base = asic_ser(op, DEMO)
        assert asic_ser(op, DEMO, DeRating(1.0, 1.0)) == pytest.approx(16 * base, rel=1e-14)


def test_acceleration_factor_scales_logic_only():
    mem = DesignElement.memory(2, 100, 1)
    op1 = OperatingPoint(1.2, 0.5, Environment.NEUTRON, acceleration_factor=1.0)
    op3 = OperatingPoint(1.2, 0.5, Environment.NEUTRON, acceleration_factor=3.0)
    logic1 = asic_ser(op1, DEMO)
    assert asic_ser(op3, DEMO + (mem,)) == pytest.approx(3 * logic1 + 200.0)


def test_physical_mode_is_small():
    op = OperatingPoint(0.8, 0.1, Environment.NEUTRON)
    assert asic_ser(op, DEMO, mode=TdrMode.PHYSICAL) < asic_ser(op, DEMO)


def test_operating_point_validation():
    with pytest.raises(DomainError):
        OperatingPoint(2.1, 0.1)
    with pytest.raises(DomainError):
        OperatingPoint(1.2, 2.1)
    with pytest.raises(DomainError, match="pulse width"):
        OperatingPoint(1.2, 0.1, pulse_width_ps=5)
    assert OperatingPoint(1.2, 0.1, Environment.ALPHA).pulse_width_ps == 10


def test_empty_design_rejected():
    with pytest.raises(ConfigurationError):
        asic_ser(OperatingPoint(1.2, 0.1), ())


def test_design_file_round(tmp_path):
    doc = {
        "elements": [
            {"kind": "sequential", "size_mbits": 1},
            {"kind": "memory", "size_mbits": 4, "ecc": True, "raw_sbu_fit_per_mb": 300, "raw_mbu_fit_per_mb": 3},
        ],
        "derating": {"ldr": 0.5},
        "pulse_width_ps": {"n": 40},
    }
    p = tmp_path / "d.json"
    p.write_text(json.dumps(doc))
    d = load_design(p)
    assert d.derating.ldr == 0.5 and d.derating.fdr == 0.25
    assert d.pulse_width(Environment.NEUTRON) == 40
    assert d.elements[1].ecc


@pytest.mark.parametrize(
    "doc, match",
    [
        ({"elements": []}, "elements"),
        ({"elements": [{"kind": "flux-capacitor", "size_mbits": 1}]}, "kind"),
        ({"elements": [{"kind": "sequential"}]}, "size_mbits"),
        ({"elements": [{"kind": "sequential", "size_mbits": 1}], "pulse_width_ps": {"n": 5}}, "pulse width below 10 ps"),
        ({"elements": [{"kind": "sequential", "size_mbits": 1, "colour": "red"}]}, "colour"),
    ],
)
def test_design_validation_errors(doc, match):
    with pytest.raises((ConfigurationError, DomainError), match=match):
        design_from_dict(doc)


def test_with_mbit():
    d = demo_design().with_mbit("binary")
    assert d.constants.mbit_cells == 2**20
    with pytest.raises(ConfigurationError):
        demo_design().with_mbit("octal")


def test_deterministic_bitwise():
    op = OperatingPoint(0.95, 1.3, Environment.NEUTRON, acceleration_factor=4.42)
    a = np.float64(asic_ser(op, DEMO)).tobytes()
    b = np.float64(asic_ser(op, DEMO)).tobytes()
    assert a == b
