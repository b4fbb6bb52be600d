"""Element stamps, conveyor relations, and macro-model expansion."""

import math
import random

import numpy as np
import pytest

import ccsim
from ccsim import elements as el
from ccsim.elements import (
    AcMode, CCCS, Capacitor, Conveyor, DcMode, ISource, NonIdealParams,
    NonPositiveBias, Resistor, TranMode, VCVS, VSource,
    cccii_input_resistance, expand_macro, expand_macros, ota_gm,
    stamp_conveyor, stamp_element, stamp_two_terminal,
)
from helpers import build, solve_text


class RecordingTarget:
    """Stamp sink that keeps every write, ground row/column included."""

    def __init__(self, n_nodes):
        self.n_nodes = n_nodes
        self.branches = {}
        self.entries = {}
        self.rhs = {}

    def node_row(self, node_index):
        return node_index

    def alloc_branch(self, name):
        key = name.casefold()
        if key not in self.branches:
            self.branches[key] = self.n_nodes + len(self.branches)
        return self.branches[key]

    def add(self, row, col, value):
        self.entries[(row, col)] = self.entries.get((row, col), 0.0) + value

    def add_rhs(self, row, value):
        self.rhs[row] = self.rhs.get(row, 0.0) + value

    def as_matrix(self):
        n = self.n_nodes + len(self.branches)
        m = np.zeros((n, n), dtype=complex)
        for (r, c), v in self.entries.items():
            m[r, c] = v
        return m


def stamp_one(elem, mode=DcMode(), n_nodes=4):
    target = RecordingTarget(n_nodes)
    stamp_element(elem, mode, target)
    return target


# ---------------------------------------------------------------------------
# two-terminal stamps
# ---------------------------------------------------------------------------

def test_resistor_stamp_is_the_conductance_pattern():
    t = stamp_one(Resistor("R1", 1, 2, 1e4))
    g = 1e-4
    assert t.entries[(1, 1)] == pytest.approx(g)
    assert t.entries[(2, 2)] == pytest.approx(g)
    assert t.entries[(1, 2)] == pytest.approx(-g)
    assert t.entries[(2, 1)] == pytest.approx(-g)


def test_capacitor_ac_stamp_is_jwc():
    t = stamp_one(Capacitor("C1", 1, 2, 1e-6), mode=AcMode(omega=1e3))
    assert t.entries[(1, 1)] == pytest.approx(1j * 1e-3)


def test_capacitor_is_open_in_dc():
    t = stamp_one(Capacitor("C1", 1, 2, 1e-6))
    assert not t.entries and not t.rhs


def test_capacitor_trapezoidal_companion():
    state = {"c1": (0.25, 3e-3)}
    t = stamp_one(Capacitor("C1", 1, 2, 1e-6),
                  mode=TranMode(t=1e-6, dt=1e-6, state=state))
    g = 2e-6 / 1e-6
    hist = g * 0.25 + 3e-3
    assert t.entries[(1, 1)] == pytest.approx(g)
    assert t.rhs[1] == pytest.approx(hist)
    assert t.rhs[2] == pytest.approx(-hist)


def test_vsource_stamp_enforces_its_voltage():
    t = stamp_one(VSource("V1", 1, 0, dc=1.0))
    k = t.branches["v1"]
    assert t.entries[(1, k)] == 1.0
    assert t.entries[(k, 1)] == 1.0
    assert t.rhs[k] == 1.0


def test_passive_stamps_are_symmetric_conveyors_are_not():
    res = stamp_one(Resistor("R1", 1, 2, 1e3)).as_matrix()
    cap = stamp_one(Capacitor("C1", 1, 2, 1e-9),
                    mode=AcMode(omega=1e4)).as_matrix()
    assert np.allclose(res, res.T)
    assert np.allclose(cap, cap.T)
    conv = stamp_one(Conveyor("U1", "CCII", 1, 1, 2, 3)).as_matrix()
    assert not np.allclose(conv, conv.T)


@pytest.mark.parametrize("elem,mode", [
    (Resistor("R1", 1, 2, 1e3), DcMode()),
    (Resistor("R2", 1, 0, 4.7e3), DcMode()),
    (Capacitor("C1", 2, 3, 1e-6), AcMode(omega=1e5)),
    (VSource("V1", 1, 0, dc=2.0), DcMode()),
    (VSource("V2", 2, 3, dc=2.0), DcMode()),
    (Conveyor("U1", "CCII", 1, 1, 2, 3), DcMode()),
    (Conveyor("U2", "CCII", -1, 1, 2, 3,
              nonideal=NonIdealParams(rx=10.0, ry=1e5, rz=2e5, alpha=0.97)),
     DcMode()),
    (Conveyor("U3", "CCI", 1, 1, 2, 3), DcMode()),
    (Conveyor("U4", "CCCII", -1, 3, 1, 2, ib=1e-4), DcMode()),
    (VCVS("E1", 1, 0, 2, 3, gain=1e6), DcMode()),
    (CCCS("F1", 0, 3, control="V9", gain=-1.0), DcMode()),
])
def test_every_stamp_conserves_current_over_node_rows(elem, mode):
    # column sums over all node rows (ground included) must vanish: whatever
    # a device draws from its terminals it returns through other terminals
    # or the supply rail
    t = RecordingTarget(4)
    t.alloc_branch("V9")   # control branch for the CCCS case
    stamp_element(elem, mode, t)
    m = t.as_matrix()
    sums = m[:4, :].sum(axis=0)
    assert np.max(np.abs(sums)) < 1e-15 * max(1.0, np.max(np.abs(m)))


# ---------------------------------------------------------------------------
# conveyor stamps
# ---------------------------------------------------------------------------

def test_ideal_ccii_plus_stamp_rows():
    t = stamp_one(Conveyor("U1", "CCII", 1, 1, 2, 3))
    k = t.branches["u1"]
    # branch row: V(x) - V(y) = 0
    assert t.entries[(k, 2)] == 1.0
    assert t.entries[(k, 1)] == -1.0
    assert (k, k) not in t.entries or t.entries[(k, k)] == 0.0
    # X port draws ix; Y port draws nothing; Z port draws beta*ix
    assert t.entries[(2, k)] == 1.0
    assert (1, k) not in t.entries
    assert t.entries[(3, k)] == 1.0


def test_ideal_cci_also_draws_ix_at_y():
    t = stamp_one(Conveyor("U1", "CCI", 1, 1, 2, 3))
    k = t.branches["u1"]
    assert t.entries[(1, k)] == 1.0


def test_ccii_minus_inverts_the_z_port():
    t = stamp_one(Conveyor("U1", "CCII", -1, 1, 2, 3))
    k = t.branches["u1"]
    assert t.entries[(3, k)] == -1.0


def test_nonideal_ccii_stamp_terms():
    t = stamp_one(Conveyor("U1", "CCII", 1, 1, 2, 3,
                           nonideal=NonIdealParams(rx=50.0, ry=1e5, rz=2e5,
                                                   alpha=0.95)))
    k = t.branches["u1"]
    assert t.entries[(k, k)] == -50.0
    assert t.entries[(k, 1)] == -0.95
    assert t.entries[(1, 1)] == pytest.approx(1e-5)
    assert t.entries[(3, 3)] == pytest.approx(5e-6)


def test_cccii_stamps_rx_from_bias_current():
    t = stamp_one(Conveyor("U1", "CCCII", 1, 1, 2, 3, ib=1e-4))
    k = t.branches["u1"]
    assert t.entries[(k, k)] == pytest.approx(-129.25)


def test_stamp_conveyor_rejects_unexpanded_macro():
    conv = Conveyor("U1", "CCII", 1, 1, 2, 3, level="MACRO")
    with pytest.raises(ValueError):
        stamp_conveyor(conv, DcMode(), RecordingTarget(4))


def test_stamp_two_terminal_rejects_conveyors():
    with pytest.raises(TypeError):
        stamp_two_terminal(Conveyor("U1", "CCII", 1, 1, 2, 3), DcMode(),
                           RecordingTarget(4))


# ---------------------------------------------------------------------------
# solved-circuit port laws
# ---------------------------------------------------------------------------

FOLLOWER = """\
follower
VIN y 0 DC 1
RX x 0 1k
RZ z 0 1k
{conveyor}
.OP
"""


def follower_solution(conveyor_card):
    return solve_text(FOLLOWER.format(conveyor=conveyor_card), DcMode())


def test_ideal_ccii_foll_x_tracks_y_and_z_copies_x():
    sol = follower_solution("CCII+ U1 y x z")
    assert abs(sol.voltage("x") - sol.voltage("y")) <= 1e-9
    ix = sol.current("U1", "X")
    assert abs(sol.current("U1", "Z") - ix) <= 1e-9 * abs(ix)
    assert sol.current("U1", "Y") == 0.0
    # the current the device delivers into the Z node flows on through the
    # load, so out-of-port Z current is the negation of the into-port one
    out_of_z = sol.voltage("z") / 1e3
    assert out_of_z == pytest.approx(-ix, rel=1e-9)


def test_ideal_cci_matches_both_port_currents():
    sol = follower_solution("CCI U1 y x z")
    ix = sol.current("U1", "X")
    assert sol.current("U1", "Y") == pytest.approx(ix, rel=1e-12)
    assert sol.current("U1", "Z") == pytest.approx(ix, rel=1e-12)
    # the Y-side source must supply that current
    assert sol.current("VIN") == pytest.approx(-ix, rel=1e-12)


def test_ccii_minus_sinks_where_ccii_plus_sources():
    plus = follower_solution("CCII+ U1 y x z")
    minus = follower_solution("CCII- U1 y x z")
    assert minus.current("U1", "Z") == pytest.approx(
        -plus.current("U1", "Z"), rel=1e-12)
    assert minus.voltage("z") == pytest.approx(-plus.voltage("z"), rel=1e-12)


def test_finite_ry_draws_the_shunt_current_at_y():
    sol = follower_solution("CCII+ U1 y x z RY=10k")
    assert sol.current("U1", "Y") == pytest.approx(1e-4, rel=1e-12)


# ---------------------------------------------------------------------------
# CCCII / OTA relations
# ---------------------------------------------------------------------------

def test_cccii_input_resistance_reference_value():
    assert cccii_input_resistance(100e-6, 0.02585) == pytest.approx(129.25,
                                                                    rel=1e-12)


def test_doubling_bias_halves_rx_exactly():
    rng = random.Random(7)
    for _ in range(50):
        ib = 10.0 ** rng.uniform(-6, -2)
        vt = rng.uniform(0.01, 0.05)
        assert cccii_input_resistance(2 * ib, vt) == \
            cccii_input_resistance(ib, vt) / 2.0


def test_ota_gm_reference_value():
    assert ota_gm(100e-6, 0.02585) == pytest.approx(1.9342359767891684e-3,
                                                    rel=1e-12)
    assert ota_gm(1e-12, 0.02585) < 1e-10   # vanishes with the bias


def test_cccii_transconductance_is_four_times_the_ota():
    rng = random.Random(11)
    for _ in range(100):
        i = 10.0 ** rng.uniform(-6, -2)
        vt = rng.uniform(0.015, 0.04)
        assert 4.0 * ota_gm(i, vt) * cccii_input_resistance(i, vt) == \
            pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("fn", [cccii_input_resistance, ota_gm])
def test_bias_functions_reject_non_positive_inputs(fn):
    with pytest.raises(NonPositiveBias):
        fn(0.0)
    with pytest.raises(NonPositiveBias):
        fn(1e-4, -1.0)


# ---------------------------------------------------------------------------
# macro expansion
# ---------------------------------------------------------------------------

MACRO_FOLLOWER = """\
macro follower
VIN y 0 DC 1
RX x 0 1k
RZ z 0 1k
CCII{sign} U1 y x z LEVEL=MACRO A={gain}
.OP
"""


def test_expand_macro_emits_amp_sense_mirror():
    conv = Conveyor("U1", "CCII", 1, 1, 2, 3, level="MACRO", macro_gain=1e6)
    nodes = {"count": 3}

    def alloc(name):
        nodes["count"] += 1
        return nodes["count"]

    parts, ports = expand_macro(conv, alloc)
    kinds = [type(p).__name__ for p in parts]
    assert kinds == ["VCVS", "VSource", "CCCS"]
    assert parts[0].gain == 1e6
    assert parts[2].gain == 1.0
    assert ports.sense == "U1#sense"


def test_expand_macro_rejects_non_macro_elements():
    with pytest.raises(ValueError):
        expand_macro(Conveyor("U1", "CCII", 1, 1, 2, 3), lambda n: 0)
    with pytest.raises(ValueError):
        expand_macro(Conveyor("U1", "CCII", 1, 1, 2, 3, level="MACRO",
                              macro_gain=0.5), lambda n: 0)


def test_expand_macros_is_idempotent_and_lazy():
    circuit = build("t\nR1 a 0 1k\nV1 a 0 DC 1\n.op\n")
    assert expand_macros(circuit) is circuit
    macro = build(MACRO_FOLLOWER.format(sign="+", gain="1e6"))
    once = expand_macros(macro)
    assert expand_macros(once) is once
    assert "u1" in once.macro_ports


@pytest.mark.parametrize("gain", [1e3, 1e4, 1e6])
def test_macro_follower_error_scales_as_one_over_gain(gain):
    sol = ccsim.run_op(build(MACRO_FOLLOWER.format(sign="+", gain=repr(gain))))
    err = abs(sol.voltage("x") - sol.voltage("y")) / abs(sol.voltage("y"))
    assert err <= 10.0 / gain
    assert err == pytest.approx(1.0 / (1.0 + gain), rel=1e-6)


def test_macro_at_huge_gain_matches_the_ideal_stamp():
    ideal = ccsim.run_op(build(FOLLOWER.format(conveyor="CCII+ U1 y x z")))
    macro = ccsim.run_op(build(MACRO_FOLLOWER.format(sign="+", gain="1e12")))
    for node in ("x", "z"):
        assert abs(macro.voltage(node) - ideal.voltage(node)) <= 1e-9
    assert abs(macro.current("U1", "X") - ideal.current("U1", "X")) <= 1e-9
    assert abs(macro.current("U1", "Z") - ideal.current("U1", "Z")) <= 1e-9


def test_macro_minus_negates_the_plus_output_current():
    plus = ccsim.run_op(build(MACRO_FOLLOWER.format(sign="+", gain="1e6")))
    minus = ccsim.run_op(build(MACRO_FOLLOWER.format(sign="-", gain="1e6")))
    iz_plus = plus.current("U1", "Z")
    iz_minus = minus.current("U1", "Z")
    assert iz_minus == pytest.approx(-iz_plus, rel=1e-9)
    assert plus.current("U1", "Y") == 0.0
