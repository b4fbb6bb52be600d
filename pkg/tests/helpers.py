"""Shared checks: engine-vs-oracle comparison and a KCL audit."""

from __future__ import annotations

import math

import numpy as np

import ccsim
from ccsim import elements as el
from ccsim.solver import build_system, lu_solve

from circuitgen import to_deck_text
from kcl_oracle import solve_brute_force


def build(text: str) -> ccsim.Circuit:
    return ccsim.elaborate(ccsim.parse_deck(text))


def solve_text(text: str, mode) -> ccsim.Solution:
    circuit = el.expand_macros(build(text))
    return lu_solve(build_system(circuit, mode))


def oracle_comparison(desc: list[dict], ac: bool = False,
                      omega: float = 0.0) -> float:
    """Solve one description both ways; return the worst scaled difference.

    Differences are scaled by the largest voltage (resp. current) magnitude
    in the oracle solution, so the metric is a relative error of the
    solution vector rather than of individual near-zero entries.
    """
    directive = ".AC DEC 10 1 10" if ac else ".OP"
    circuit = build(to_deck_text(desc, directive=directive))
    mode = el.AcMode(omega=omega) if ac else el.DcMode()
    sol = lu_solve(build_system(circuit, mode))
    ref = solve_brute_force(desc, ac=ac, omega=omega)

    v_pairs = []
    for name in circuit.node_names:
        v_pairs.append((sol.voltage(name), ref[f"V({name.casefold()})"]))
    i_pairs = []
    for e in desc:
        name = e["name"]
        if e["kind"] == "CONV":
            i_pairs.append((sol.current(name, "X"), ref[f"I({name}.X)"]))
            i_pairs.append((sol.current(name, "Y"), ref[f"I({name}.Y)"]))
            z_total = sol.current(name, "Z")
            rz = e.get("rz", math.inf)
            if math.isfinite(rz):
                vz = sol.voltage(e["nodes"][2])
                z_total = z_total + vz / rz
            i_pairs.append((z_total, ref[f"I({name}.Z)"]))
        else:
            i_pairs.append((sol.current(name), ref[f"I({name})"]))

    def scaled_max(pairs):
        scale = max((abs(b) for _, b in pairs), default=0.0)
        scale = max(scale, 1e-9)
        return max(abs(a - b) for a, b in pairs) / scale

    return max(scaled_max(v_pairs), scaled_max(i_pairs))


def kcl_residuals(circuit: ccsim.Circuit, sol: ccsim.Solution) -> list[float]:
    """Per-node |sum of element currents| scaled by the largest single term."""
    terms: dict[int, list] = {i: [] for i in range(1, circuit.n_nodes)}

    def drawn(node: int, value) -> None:
        if node != 0:
            terms[node].append(value)

    for e in circuit.elements:
        if isinstance(e, el.Conveyor):
            ix = sol.current(e.name, "X")
            iy = sol.current(e.name, "Y")
            iz = e.beta * ix
            if math.isfinite(e.nonideal.rz):
                iz = iz + sol.voltage(circuit.node_names[e.nz]) / e.nonideal.rz
            drawn(e.ny, iy)
            drawn(e.nx, ix)
            drawn(e.nz, iz)
        elif isinstance(e, el.CCCS):
            i = e.gain * sol._branch(e.control)
            drawn(e.n1, i)
            drawn(e.n2, -i)
        elif isinstance(e, el.VCVS):
            i = sol._branch(e.name)
            drawn(e.n1, i)
            drawn(e.n2, -i)
        else:
            i = sol.current(e.name)
            drawn(e.n1, i)
            drawn(e.n2, -i)

    out = []
    for node, vals in terms.items():
        if not vals:
            continue
        biggest = max(abs(v) for v in vals)
        total = abs(sum(vals))
        out.append(total / max(biggest, 1e-30))
    return out
