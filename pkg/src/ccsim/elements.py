"""Typed circuit elements and their modified-nodal-analysis stamps.

Elements are frozen dataclasses holding interned node indices; they are
produced by :func:`ccsim.netlist.elaborate` and consumed by the solver
through the stamp functions below.  Stamping writes only into a
caller-supplied target (see :class:`StampTarget` duck-type), so elements
stay immutable and stamping into independent targets is thread-safe.

Sign conventions used by every stamp (and by all probe accessors):

* A KCL row accumulates the currents *leaving* its node through elements.
* A voltage-source branch current flows from the ``+`` node through the
  source to the ``-`` node.
* A conveyor allocates a single branch unknown ``ix``, the current flowing
  into terminal X.  Port currents into the device are then ``Iy = ix``
  (first generation) or ``Vy/ry`` (second generation, finite ``ry``), and
  ``Iz = beta * ix``.  With the X stage sourcing current into a grounded
  load, the Z stage sources the same current into its load, which is what
  makes the non-inverting amplifier come out with gain ``+R2/R1``.
* Stamps also write the ground row/column (index 0); the solver discards
  those entries.  Keeping them makes every stamp's node-row column sums
  exactly zero -- the conveyor's current imbalance returns through the
  implicit supply rail at ground.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

GROUND = 0

#: Thermal voltage kT/q at 300 K, in volts.
THERMAL_VOLTAGE = 0.02585


class NonPositiveBias(ValueError):
    """A bias current or thermal voltage was zero or negative."""


# ---------------------------------------------------------------------------
# analysis modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DcMode:
    """Operating-point analysis: capacitors open, sources at their DC value."""


@dataclass(frozen=True)
class AcMode:
    """Small-signal sweep point at angular frequency ``omega`` (rad/s)."""

    omega: float


@dataclass(frozen=True)
class TranMode:
    """One transient step ending at time ``t`` with step size ``dt``.

    ``state`` maps capacitor names to their ``(voltage, current)`` at the
    start of the step; the trapezoidal companion stamp reads it.
    """

    t: float
    dt: float
    state: Mapping[str, tuple[float, float]]


@dataclass(frozen=True)
class TranInitMode:
    """The t=0 solve that seeds a transient.

    Sine sources are evaluated at t=0.  Capacitors with an explicit IC
    are stamped as voltage sources of that value (so a consistent initial
    current is available); capacitors without one are left open and pick
    up the DC operating point.
    """

    t: float = 0.0


Mode = Union[DcMode, AcMode, TranMode, TranInitMode]


# ---------------------------------------------------------------------------
# element types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Resistor:
    name: str
    n1: int
    n2: int
    ohms: float


@dataclass(frozen=True)
class Capacitor:
    name: str
    n1: int
    n2: int
    farads: float
    ic: float | None = None


@dataclass(frozen=True)
class VSource:
    """Independent voltage source (``n1`` is the + terminal)."""

    name: str
    n1: int
    n2: int
    dc: float = 0.0
    ac: tuple[float, float] | None = None           # (magnitude, phase in degrees)
    sin: tuple[float, float, float] | None = None   # (offset, amplitude, freq in Hz)


@dataclass(frozen=True)
class ISource:
    """Independent current source driving current from ``n1`` to ``n2``."""

    name: str
    n1: int
    n2: int
    dc: float = 0.0
    ac: tuple[float, float] | None = None
    sin: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class NonIdealParams:
    """Parasitic departures from the ideal conveyor port behaviour.

    The defaults are the ideal limits: zero series resistance at X,
    infinite shunt resistance at Y and Z, unity voltage transfer.
    """

    rx: float = 0.0
    ry: float = math.inf
    rz: float = math.inf
    alpha: float = 1.0


_IDEAL = NonIdealParams()


@dataclass(frozen=True)
class Conveyor:
    """Current conveyor, any generation.

    ``gen`` is one of ``"CCI"``, ``"CCII"``, ``"CCCII"``; ``beta`` is the
    Z-port polarity (+1 or -1; CCI supports +1 only).  A ``"CCCII"``
    derives its X-port series resistance from the bias current ``ib`` and
    thermal voltage ``vt`` instead of ``nonideal.rx``.
    """

    name: str
    gen: str
    beta: int
    ny: int
    nx: int
    nz: int
    nonideal: NonIdealParams = _IDEAL
    level: str = "IDEAL"          # "IDEAL" or "MACRO"
    macro_gain: float = 1e6
    ib: float | None = None
    vt: float = THERMAL_VOLTAGE

    def effective_rx(self) -> float:
        """X-port series resistance actually stamped for this conveyor."""
        if self.gen == "CCCII":
            return cccii_input_resistance(self.ib, self.vt)
        return self.nonideal.rx


@dataclass(frozen=True)
class VCVS:
    """Voltage-controlled voltage source (macro-model internal)."""

    name: str
    n1: int
    n2: int
    cp: int
    cn: int
    gain: float


@dataclass(frozen=True)
class CCCS:
    """Current-controlled current source; control is another element's
    branch current, output flows from ``n1`` to ``n2`` through the source."""

    name: str
    n1: int
    n2: int
    control: str
    gain: float


TwoTerminal = Union[Resistor, Capacitor, VSource, ISource]
Element = Union[TwoTerminal, Conveyor, VCVS, CCCS]


# ---------------------------------------------------------------------------
# conveyor small-signal relations
# ---------------------------------------------------------------------------

def cccii_input_resistance(ib: float, vt: float = THERMAL_VOLTAGE) -> float:
    """X-terminal resistance of a translinear CCCII: ``vt / (2 ib)``.

    Equivalently its transconductance is ``2 ib / vt``, four times the
    ``ib / (2 vt)`` of a bipolar OTA at the same bias current.
    """
    if ib is None or ib <= 0.0:
        raise NonPositiveBias(f"bias current must be positive, got {ib!r}")
    if vt <= 0.0:
        raise NonPositiveBias(f"thermal voltage must be positive, got {vt!r}")
    return vt / (2.0 * ib)


def ota_gm(i: float, vt: float = THERMAL_VOLTAGE) -> float:
    """Transconductance of a bipolar OTA at bias current ``i``: ``i / (2 vt)``."""
    if i <= 0.0:
        raise NonPositiveBias(f"bias current must be positive, got {i!r}")
    if vt <= 0.0:
        raise NonPositiveBias(f"thermal voltage must be positive, got {vt!r}")
    return i / (2.0 * vt)


# ---------------------------------------------------------------------------
# source evaluation
# ---------------------------------------------------------------------------

def source_value(elem: VSource | ISource, mode: Mode) -> complex | float:
    """Instantaneous (or phasor) value of an independent source.

    DC analysis uses the DC value; AC uses the phasor ``mag * exp(j*phase)``
    (zero when the source carries no AC spec); transient uses
    ``offset + amplitude*sin(2*pi*f*t)`` when a SIN spec is present and the
    DC value held constant otherwise.
    """
    if isinstance(mode, AcMode):
        if elem.ac is None:
            return 0.0 + 0.0j
        mag, phase_deg = elem.ac
        return mag * complex(math.cos(math.radians(phase_deg)),
                             math.sin(math.radians(phase_deg)))
    if isinstance(mode, (TranMode, TranInitMode)) and elem.sin is not None:
        voff, vampl, freq = elem.sin
        return voff + vampl * math.sin(2.0 * math.pi * freq * mode.t)
    return elem.dc


# ---------------------------------------------------------------------------
# stamps
#
# A stamp target provides:
#   node_row(node_index) -> row id        (ground maps to id 0, discarded)
#   alloc_branch(name) -> row id          (idempotent per name)
#   add(row, col, value)                  (matrix accumulate)
#   add_rhs(row, value)                   (right-hand-side accumulate)
# ---------------------------------------------------------------------------

def _stamp_conductance(target, n1: int, n2: int, g: complex | float) -> None:
    r1 = target.node_row(n1)
    r2 = target.node_row(n2)
    target.add(r1, r1, g)
    target.add(r2, r2, g)
    target.add(r1, r2, -g)
    target.add(r2, r1, -g)


def _stamp_voltage_branch(target, name: str, n1: int, n2: int,
                          value: complex | float) -> int:
    k = target.alloc_branch(name)
    r1 = target.node_row(n1)
    r2 = target.node_row(n2)
    target.add(r1, k, 1.0)
    target.add(r2, k, -1.0)
    target.add(k, r1, 1.0)
    target.add(k, r2, -1.0)
    target.add_rhs(k, value)
    return k


def stamp_two_terminal(elem: TwoTerminal, mode: Mode, target) -> None:
    """Write the textbook stamp of a two-terminal element for ``mode``."""
    if isinstance(elem, Resistor):
        _stamp_conductance(target, elem.n1, elem.n2, 1.0 / elem.ohms)

    elif isinstance(elem, Capacitor):
        if isinstance(mode, AcMode):
            _stamp_conductance(target, elem.n1, elem.n2,
                               1j * mode.omega * elem.farads)
        elif isinstance(mode, TranMode):
            # trapezoidal companion: G = 2C/dt in parallel with a history
            # source G*v_prev + i_prev driven into the + node
            g = 2.0 * elem.farads / mode.dt
            v_prev, i_prev = mode.state[elem.name.casefold()]
            hist = g * v_prev + i_prev
            _stamp_conductance(target, elem.n1, elem.n2, g)
            target.add_rhs(target.node_row(elem.n1), hist)
            target.add_rhs(target.node_row(elem.n2), -hist)
        elif isinstance(mode, TranInitMode):
            if elem.ic is not None:
                # pin the capacitor at its IC; the branch current doubles
                # as the consistent initial capacitor current
                _stamp_voltage_branch(target, elem.name, elem.n1, elem.n2,
                                      elem.ic)
        # DC: open circuit, no contribution

    elif isinstance(elem, VSource):
        _stamp_voltage_branch(target, elem.name, elem.n1, elem.n2,
                              source_value(elem, mode))

    elif isinstance(elem, ISource):
        val = source_value(elem, mode)
        target.add_rhs(target.node_row(elem.n1), -val)
        target.add_rhs(target.node_row(elem.n2), val)

    else:
        raise TypeError(f"not a two-terminal element: {elem!r}")


def stamp_conveyor(elem: Conveyor, mode: Mode, target) -> None:
    """Stamp a current conveyor (ideal or with parasitics).

    The single branch unknown is ``ix``, the current into terminal X.
    Rows written:

    * branch row: ``V(x) - alpha*V(y) - rx*ix = 0``
    * KCL at x gains ``+ix``
    * KCL at y gains ``+ix`` for a CCI, the ``ry`` shunt otherwise
    * KCL at z gains ``+beta*ix`` (the conveyed current) plus the ``rz``
      shunt when finite

    A CCCII resolves ``rx`` from its bias current first and then stamps
    exactly like a non-ideal CCII.
    """
    if elem.level != "IDEAL":
        raise ValueError(f"conveyor {elem.name} must be macro-expanded "
                         "before stamping")
    p = elem.nonideal
    rx = elem.effective_rx()
    k = target.alloc_branch(elem.name)
    ry_row = target.node_row(elem.ny)
    rx_row = target.node_row(elem.nx)
    rz_row = target.node_row(elem.nz)
    gnd = target.node_row(GROUND)

    # voltage transfer Y -> X, degraded by alpha and the X series resistance
    target.add(k, rx_row, 1.0)
    target.add(k, ry_row, -p.alpha)
    target.add(k, k, -rx)

    # port currents into the device
    target.add(rx_row, k, 1.0)
    iy_coeff = 1.0 if elem.gen == "CCI" else 0.0
    if iy_coeff:
        target.add(ry_row, k, iy_coeff)
    target.add(rz_row, k, float(elem.beta))
    # supply return: keeps the stamp's column sums over node rows at zero
    target.add(gnd, k, -(1.0 + float(elem.beta) + iy_coeff))

    if math.isfinite(p.ry):
        _stamp_conductance(target, elem.ny, GROUND, 1.0 / p.ry)
    if math.isfinite(p.rz):
        _stamp_conductance(target, elem.nz, GROUND, 1.0 / p.rz)


def stamp_controlled(elem: VCVS | CCCS, mode: Mode, target) -> None:
    """Stamp the controlled sources used by macro-model expansion."""
    if isinstance(elem, VCVS):
        k = target.alloc_branch(elem.name)
        r1 = target.node_row(elem.n1)
        r2 = target.node_row(elem.n2)
        cp = target.node_row(elem.cp)
        cn = target.node_row(elem.cn)
        target.add(r1, k, 1.0)
        target.add(r2, k, -1.0)
        # constraint row V(n1)-V(n2) = gain*(V(cp)-V(cn)), scaled by 1/gain
        # for large gains so matrix entries stay O(1) and the solver's
        # residual bound survives gains up to 1e12
        if abs(elem.gain) > 1.0:
            s = 1.0 / elem.gain
            target.add(k, r1, s)
            target.add(k, r2, -s)
            target.add(k, cp, -1.0)
            target.add(k, cn, 1.0)
        else:
            target.add(k, r1, 1.0)
            target.add(k, r2, -1.0)
            target.add(k, cp, -elem.gain)
            target.add(k, cn, elem.gain)
    elif isinstance(elem, CCCS):
        ctrl = target.alloc_branch(elem.control)
        target.add(target.node_row(elem.n1), ctrl, elem.gain)
        target.add(target.node_row(elem.n2), ctrl, -elem.gain)
    else:
        raise TypeError(f"not a controlled source: {elem!r}")


def stamp_element(elem: Element, mode: Mode, target) -> None:
    """Dispatch to the stamp routine for any element kind."""
    if isinstance(elem, (Resistor, Capacitor, VSource, ISource)):
        stamp_two_terminal(elem, mode, target)
    elif isinstance(elem, Conveyor):
        stamp_conveyor(elem, mode, target)
    else:
        stamp_controlled(elem, mode, target)


# ---------------------------------------------------------------------------
# macro-model expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MacroPorts:
    """How to recover an expanded conveyor's port currents.

    The sensing source's branch current flows from the amplifier output
    into node X, so the conventional into-X current is its negation.
    """

    sense: str
    beta: int


def expand_macro(elem: Conveyor,
                 alloc_node: Callable[[str], int]) -> tuple[list[Element], MacroPorts]:
    """Replace a MACRO-level CCII by ideal primitive elements.

    The composite is a finite-gain differential amplifier (VCVS, gain A)
    in unity feedback driving terminal X through a zero-volt sensing
    branch; the sensed current is mirrored onto terminal Z by a unity CCCS
    whose sign carries the conveyor polarity.  As A grows the external
    behaviour approaches the ideal CCII with follower error 1/(1+A).
    """
    if elem.gen != "CCII" or elem.level != "MACRO":
        raise ValueError(f"{elem.name}: only MACRO-level CCII elements expand")
    if not elem.macro_gain > 1.0:
        raise ValueError(f"{elem.name}: macro gain must exceed 1, "
                         f"got {elem.macro_gain!r}")
    out = alloc_node(f"{elem.name}#out")
    amp = VCVS(name=f"{elem.name}#amp", n1=out, n2=GROUND,
               cp=elem.ny, cn=elem.nx, gain=elem.macro_gain)
    sense = VSource(name=f"{elem.name}#sense", n1=out, n2=elem.nx)
    # sense current = -ix, so a gain of beta from ground into Z reproduces
    # the ideal stamp's +beta*ix at the Z node
    mirror = CCCS(name=f"{elem.name}#mirror", n1=GROUND, n2=elem.nz,
                  control=sense.name, gain=float(elem.beta))
    ports = MacroPorts(sense=sense.name, beta=elem.beta)
    return [amp, sense, mirror], ports


def expand_macros(circuit):
    """Return a circuit with every MACRO conveyor replaced by primitives.

    Idempotent; circuits without MACRO conveyors are returned unchanged.
    The replacement interns one private node per conveyor and records the
    probe mapping in ``circuit.macro_ports`` so I(name.X/Y/Z) stays
    answerable.
    """
    if not any(isinstance(e, Conveyor) and e.level == "MACRO"
               for e in circuit.elements):
        return circuit
    node_names = list(circuit.node_names)
    node_index = dict(circuit.node_index)
    macro_ports = dict(circuit.macro_ports)

    def alloc_node(name: str) -> int:
        idx = len(node_names)
        node_names.append(name)
        node_index[name.casefold()] = idx
        return idx

    elements: list[Element] = []
    for elem in circuit.elements:
        if isinstance(elem, Conveyor) and elem.level == "MACRO":
            parts, ports = expand_macro(elem, alloc_node)
            elements.extend(parts)
            macro_ports[elem.name.casefold()] = ports
        else:
            elements.append(elem)
    return dataclasses.replace(circuit,
                               node_names=tuple(node_names),
                               node_index=node_index,
                               elements=tuple(elements),
                               macro_ports=macro_ports)
