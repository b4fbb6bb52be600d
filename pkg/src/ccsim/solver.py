"""MNA system assembly and the dense LU solver.

Unknown ordering is deterministic: non-ground nodes in intern order, then
branch currents in element order.  Row/column ids handed to stamps equal
node indices (ground = 0, discarded on write); branch ids follow.  That
makes repeated runs bit-identical, which the CSV output relies on.

The factorization is kept with the system so a fixed-step transient
factors once and back-substitutes per step.  Dense LU with partial
pivoting is O(n^3) but the conveyor circuits this targets stay at desk
scale, and a hand-rolled elimination lets a failed pivot name the
offending unknown (floating node, source loop) instead of a bare
"singular matrix".
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from . import elements as el
from .netlist import Circuit, Probe, parse_probe

__all__ = [
    "SolverError", "SingularMatrix", "UnknownProbe",
    "MnaSystem", "build_system", "rebuild_rhs", "lu_solve",
    "Solution", "branch_currents", "check_probe",
]

# |pivot| at or below this fraction of the column's initial magnitude
# declares the system singular
_PIVOT_RTOL = 1e-13

# Solution residual bound: ||A x - b||inf <= RTOL * max(1, ||b||inf)
_RESIDUAL_RTOL = 1e-9


class SolverError(Exception):
    """Base class for numerical failures."""


class SingularMatrix(SolverError):
    def __init__(self, message: str, index: int | None = None,
                 line: int | None = None):
        self.index = index
        self.line = line
        super().__init__(message)


class UnknownProbe(SolverError):
    pass


class _Builder:
    """Stamp target backed by triplet lists; ground writes are dropped."""

    def __init__(self, n_nodes: int, collect_matrix: bool = True,
                 branch_ids: dict | None = None):
        self.n_nodes = n_nodes
        self.collect_matrix = collect_matrix
        self.branch_ids = {} if branch_ids is None else branch_ids
        self.branch_order: list[str] = list(self.branch_ids)
        self.triplets: list[tuple[int, int, complex]] = []
        self.rhs_entries: list[tuple[int, complex]] = []

    # -- StampTarget interface -------------------------------------------

    def node_row(self, node_index: int) -> int:
        return node_index

    def alloc_branch(self, name: str) -> int:
        key = name.casefold()
        if key not in self.branch_ids:
            self.branch_ids[key] = self.n_nodes + len(self.branch_ids)
            self.branch_order.append(key)
        return self.branch_ids[key]

    def add(self, row: int, col: int, value) -> None:
        if row == 0 or col == 0:
            return
        if self.collect_matrix:
            self.triplets.append((row, col, value))

    def add_rhs(self, row: int, value) -> None:
        if row == 0:
            return
        self.rhs_entries.append((row, value))


class MnaSystem:
    """Assembled square system plus the maps naming each unknown."""

    def __init__(self, matrix: np.ndarray, rhs: np.ndarray,
                 index_map: dict, unknown_names: list[str],
                 circuit: Circuit, mode):
        self.matrix = matrix
        self.rhs = rhs
        self.index_map = index_map          # "V(node)" / "I(elem)" -> row
        self.unknown_names = unknown_names  # row -> display name
        self.circuit = circuit
        self.mode = mode
        self._factors = None

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


def build_system(circuit: Circuit, mode) -> MnaSystem:
    """Stamp every element once and assemble the dense system."""
    builder = _Builder(circuit.n_nodes)
    for elem in circuit.elements:
        el.stamp_element(elem, mode, builder)

    n = (circuit.n_nodes - 1) + len(builder.branch_ids)
    dtype = complex if isinstance(mode, el.AcMode) else float
    matrix = np.zeros((n, n), dtype=dtype)
    rhs = np.zeros(n, dtype=dtype)
    for row, col, val in builder.triplets:
        matrix[row - 1, col - 1] += val
    for row, val in builder.rhs_entries:
        rhs[row - 1] += val

    index_map: dict = {}
    unknown_names: list[str] = []
    for i, name in enumerate(circuit.node_names[1:], start=1):
        index_map[f"V({name})"] = i - 1
        unknown_names.append(f"V({name})")
    for key in builder.branch_order:
        index_map[f"I({key})"] = builder.branch_ids[key] - 1
        unknown_names.append(f"I({key})")
    return MnaSystem(matrix, rhs, index_map, unknown_names, circuit, mode)


def rebuild_rhs(system: MnaSystem, mode) -> np.ndarray:
    """Re-stamp only the right-hand side (fixed-step transient reuse).

    Branch allocation is replayed against the ids pinned at build time, so
    the vector lines up with the cached factorization.
    """
    builder = _Builder(system.circuit.n_nodes, collect_matrix=False,
                       branch_ids=dict(
                           (k, system.index_map[f"I({k})"] + 1)
                           for k in _branch_keys(system)))
    for elem in system.circuit.elements:
        el.stamp_element(elem, mode, builder)
    rhs = np.zeros(system.n_unknowns, dtype=system.rhs.dtype)
    for row, val in builder.rhs_entries:
        rhs[row - 1] += val
    return rhs


def _branch_keys(system: MnaSystem):
    n_nodes = system.circuit.n_nodes
    return [name[2:-1] for name in system.unknown_names[n_nodes - 1:]]


# ---------------------------------------------------------------------------
# LU with partial pivoting
# ---------------------------------------------------------------------------

def _lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """In-place-style LU factorization; raises on a structurally dead pivot.

    Column k failing means unknown k is undetermined by the equations --
    typically a floating node or a loop of ideal sources.
    """
    lu = a.astype(a.dtype, copy=True)
    n = lu.shape[0]
    perm = np.arange(n)
    col_scale = np.max(np.abs(a), axis=0) if n else np.zeros(0)
    for k in range(n):
        col = np.abs(lu[k:, k])
        p = k + int(np.argmax(col))
        if np.abs(lu[p, k]) <= _PIVOT_RTOL * col_scale[k]:
            raise SingularMatrix(f"dead pivot in column {k}", index=k)
        if p != k:
            lu[[k, p], :] = lu[[p, k], :]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        if k + 1 < n:
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def _lu_substitute(lu: np.ndarray, perm: np.ndarray,
                   b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = b[perm].astype(lu.dtype, copy=True)
    for k in range(1, n):                       # forward, unit lower
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):              # backward
        x[k] -= lu[k, k + 1:] @ x[k + 1:]
        x[k] /= lu[k, k]
    return x


def _describe_unknown(system: MnaSystem, k: int) -> str:
    name = system.unknown_names[k]
    circuit = system.circuit
    if name.startswith("V("):
        node = name[2:-1]
        line = circuit.node_lines.get(node.casefold())
        at = f" (first used at line {line})" if line else ""
        return (f"node {node!r}{at} is undetermined; it is probably floating "
                "in this analysis (a capacitor-only node under DC?)")
    branch = name[2:-1]
    line = circuit.element_lines.get(branch)
    at = f" (line {line})" if line else ""
    return (f"branch current of {branch!r}{at} is undetermined; look for a "
            "loop of ideal sources or an unloaded conveyor output")


def lu_solve(system: MnaSystem, rhs: np.ndarray | None = None,
             mode=None) -> "Solution":
    """Factor (once) and solve; verifies the residual before returning.

    ``rhs``/``mode`` override the system's own, which is how transient
    stepping reuses one factorization across timesteps.
    """
    b = system.rhs if rhs is None else rhs
    if system._factors is None:
        try:
            system._factors = _lu_factor(system.matrix)
        except SingularMatrix as exc:
            raise SingularMatrix(
                f"singular system: {_describe_unknown(system, exc.index)}",
                index=exc.index) from None
    lu, perm = system._factors
    x = _lu_substitute(lu, perm, b)

    tol = _RESIDUAL_RTOL * max(1.0, float(np.max(np.abs(b))) if len(b) else 0.0)
    residual = b - system.matrix @ x
    if len(x) and float(np.max(np.abs(residual))) > tol:
        x = x + _lu_substitute(lu, perm, residual)   # one refinement pass
        residual = b - system.matrix @ x
        if float(np.max(np.abs(residual))) > tol:
            raise SolverError(
                f"solution residual {float(np.max(np.abs(residual))):.3e} "
                f"exceeds tolerance {tol:.3e}; system is too ill-conditioned")
    return Solution(system, x, mode=mode)


# ---------------------------------------------------------------------------
# solutions and probes
# ---------------------------------------------------------------------------

class Solution:
    """One solved unknown vector with named accessors."""

    def __init__(self, system: MnaSystem, values: np.ndarray, mode=None):
        self.system = system
        self.values = values
        self.mode = system.mode if mode is None else mode
        self.extra_currents: dict = {}   # transient capacitor currents

    @property
    def circuit(self) -> Circuit:
        return self.system.circuit

    def _row(self, key: str) -> int:
        try:
            return self.system.index_map[key]
        except KeyError:
            raise UnknownProbe(f"unknown quantity {key!r}") from None

    def voltage(self, node: str):
        """Voltage of a node by netlist name; ground is exactly 0."""
        key = node.casefold()
        idx = self.circuit.node_index.get(key)
        if idx is None:
            raise UnknownProbe(f"unknown node {node!r}")
        if idx == 0:
            return type(self.values[0].item())(0) if len(self.values) else 0.0
        return self.values[idx - 1].item()

    def _branch(self, name: str):
        return self.values[self._row(f"I({name.casefold()})")].item()

    def _vdiff(self, n1: int, n2: int):
        v1 = 0.0 if n1 == 0 else self.values[n1 - 1].item()
        v2 = 0.0 if n2 == 0 else self.values[n2 - 1].item()
        return v1 - v2

    def current(self, name: str, port: str | None = None):
        """Current of an element (or conveyor port), probe conventions:

        sources: from + through the source to -; resistors/capacitors:
        from n1 to n2; conveyor ports: into the terminal, with
        ``I(Z) = beta * I(X)`` and ``I(Y) = I(X)`` for a CCI.
        """
        key = name.casefold()
        ports = self.circuit.macro_ports.get(key)
        if ports is not None:
            return self._macro_current(name, ports, port)
        try:
            elem = self.circuit.element(name)
        except KeyError:
            raise UnknownProbe(f"unknown element {name!r}") from None
        if isinstance(elem, el.Conveyor):
            return self._conveyor_current(elem, name, port)
        if port is not None:
            raise UnknownProbe(f"{name!r} has no port {port!r}; ports apply "
                               "to conveyors")
        if isinstance(elem, (el.VSource, el.VCVS)):
            return self._branch(name)
        if isinstance(elem, el.ISource):
            return el.source_value(elem, self.mode)
        if isinstance(elem, el.Resistor):
            return self._vdiff(elem.n1, elem.n2) / elem.ohms
        if isinstance(elem, el.Capacitor):
            return self._capacitor_current(elem)
        if isinstance(elem, el.CCCS):
            return elem.gain * self._branch(elem.control)
        raise UnknownProbe(f"no current accessor for {name!r}")

    def _capacitor_current(self, elem: el.Capacitor):
        mode = self.mode
        if isinstance(mode, el.AcMode):
            return 1j * mode.omega * elem.farads * self._vdiff(elem.n1, elem.n2)
        if isinstance(mode, el.TranMode):
            return self.extra_currents.get(elem.name.casefold(), 0.0)
        if isinstance(mode, el.TranInitMode) and elem.ic is not None:
            return self._branch(elem.name)
        return 0.0

    def _conveyor_current(self, elem: el.Conveyor, name: str,
                          port: str | None):
        if port is None:
            raise UnknownProbe(f"{name!r} is a conveyor; probe I({name}.X), "
                               f"I({name}.Y) or I({name}.Z)")
        ix = self._branch(elem.name)
        if port == "X":
            return ix
        if port == "Z":
            return elem.beta * ix
        if port == "Y":
            if elem.gen == "CCI":
                return ix
            if math.isfinite(elem.nonideal.ry):
                v = 0.0 if elem.ny == 0 else self.values[elem.ny - 1].item()
                return v / elem.nonideal.ry
            return 0.0 * ix
        raise UnknownProbe(f"unknown conveyor port {port!r}")

    def _macro_current(self, name: str, ports: el.MacroPorts,
                       port: str | None):
        if port is None:
            raise UnknownProbe(f"{name!r} is a conveyor; probe I({name}.X), "
                               f"I({name}.Y) or I({name}.Z)")
        ix = -self._branch(ports.sense)
        if port == "X":
            return ix
        if port == "Z":
            return ports.beta * ix
        if port == "Y":
            return 0.0 * ix   # differential input draws nothing
        raise UnknownProbe(f"unknown conveyor port {port!r}")

    def probe(self, probe: str | Probe):
        if isinstance(probe, str):
            probe = parse_probe(probe)
        if probe.kind == "V":
            return self.voltage(probe.subject)
        return self.current(probe.subject, probe.port)

    def __getitem__(self, probe):
        return self.probe(probe)

    def residual(self) -> float:
        b = self.system.rhs
        return float(np.max(np.abs(b - self.system.matrix @ self.values)))


def branch_currents(solution: Solution, circuit: Circuit) -> dict:
    """Named currents for every source and conveyor port in the circuit."""
    out: dict = {}
    for elem in circuit.elements:
        if isinstance(elem, (el.VSource, el.ISource)):
            out[f"I({elem.name})"] = solution.current(elem.name)
        elif isinstance(elem, el.Conveyor):
            for port in ("X", "Y", "Z"):
                out[f"I({elem.name}.{port})"] = solution.current(elem.name,
                                                                 port)
    for name, ports in circuit.macro_ports.items():
        for port in ("X", "Y", "Z"):
            out[f"I({name}.{port})"] = solution.current(name, port)
    return out


def check_probe(circuit: Circuit, probe: Probe) -> None:
    """Validate a probe against a circuit without solving; raises
    :class:`UnknownProbe` on a miss so the CLI can fail before running."""
    if probe.kind == "V":
        if probe.subject.casefold() not in circuit.node_index:
            raise UnknownProbe(f"unknown node {probe.subject!r}")
        return
    key = probe.subject.casefold()
    if key in circuit.macro_ports:
        if probe.port is None:
            raise UnknownProbe(f"{probe.subject!r} is a conveyor; probe a "
                               "port (X, Y or Z)")
        return
    try:
        elem = circuit.element(probe.subject)
    except KeyError:
        raise UnknownProbe(f"unknown element {probe.subject!r}") from None
    if isinstance(elem, el.Conveyor) and probe.port is None:
        raise UnknownProbe(f"{probe.subject!r} is a conveyor; probe a port "
                           "(X, Y or Z)")
    if not isinstance(elem, el.Conveyor) and probe.port is not None:
        raise UnknownProbe(f"{probe.subject!r} has no port {probe.port!r}")
