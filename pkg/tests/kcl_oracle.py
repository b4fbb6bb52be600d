"""Brute-force linear circuit solver used to cross-check the MNA engine.

Deliberately shares nothing with ccsim's solver: every node voltage
(ground included) and every element current is its own unknown, equations
are written straight from the constitutive laws plus one KCL row per
non-ground node, and the dense system goes to numpy.linalg.solve.

Circuits are described by plain dicts so the oracle never imports ccsim:

    {"kind": "R", "name": "R1", "nodes": ("a", "b"), "ohms": 1e3}
    {"kind": "C", ..., "farads": 1e-6}
    {"kind": "V", ..., "dc": 1.0, "ac": (mag, phase_deg) or None}
    {"kind": "I", ...}
    {"kind": "CONV", "name": "U1", "gen": "CCI"|"CCII"|"CCCII",
     "beta": 1, "nodes": (y, x, z), "rx": 0.0, "ry": inf, "rz": inf,
     "alpha": 1.0, "ib": None, "vt": 0.02585}

Port-current conventions match the probes of the engine under test:
two-terminal currents flow from the first node to the second through the
element; conveyor port currents flow into the terminal, with the Z-port
total including the rz shunt.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

GROUND = "0"


def _source_phasor(elem: dict, ac: bool):
    if ac:
        if elem.get("ac") is None:
            return 0.0 + 0.0j
        mag, phase_deg = elem["ac"]
        return mag * cmath.exp(1j * math.radians(phase_deg))
    return elem.get("dc", 0.0)


def solve_brute_force(desc: list[dict], ac: bool = False, omega: float = 0.0):
    """Solve a circuit description; returns {"V(node)": v, "I(name)": i,
    "I(name.Y|X|Z)": i} with complex values in AC mode."""
    node_list: list[str] = []
    seen: set[str] = set()

    def note(node: str) -> None:
        key = node.casefold()
        if key not in seen:
            seen.add(key)
            node_list.append(key)

    note(GROUND)
    for elem in desc:
        for node in elem["nodes"]:
            note(node)

    v_index = {name: i for i, name in enumerate(node_list)}
    n_v = len(node_list)

    # one current unknown per two-terminal element, three per conveyor
    cur_names: list[str] = []
    for elem in desc:
        if elem["kind"] == "CONV":
            cur_names += [f'{elem["name"]}.Y', f'{elem["name"]}.X',
                          f'{elem["name"]}.Z']
        else:
            cur_names.append(elem["name"])
    c_index = {name: n_v + i for i, name in enumerate(cur_names)}
    n = n_v + len(cur_names)

    dtype = complex if ac else float
    a = np.zeros((n, n), dtype=dtype)
    b = np.zeros(n, dtype=dtype)
    rows = []   # equation builder: list of ({col: coeff}, rhs)

    def v(node: str) -> int:
        return v_index[node.casefold()]

    # ground reference
    rows.append(({v(GROUND): 1.0}, 0.0))

    # KCL per non-ground node: sum of currents drawn from the node is zero
    kcl: dict[int, dict[int, complex]] = {v_index[nm]: {} for nm in node_list
                                          if nm != GROUND}

    def draw(node: str, cur: str, coeff: float) -> None:
        idx = v(node)
        if node.casefold() == GROUND:
            return
        entry = kcl[idx]
        col = c_index[cur]
        entry[col] = entry.get(col, 0.0) + coeff

    for elem in desc:
        kind = elem["kind"]
        name = elem["name"]
        if kind == "CONV":
            ny, nx, nz = elem["nodes"]
            draw(ny, f"{name}.Y", 1.0)
            draw(nx, f"{name}.X", 1.0)
            draw(nz, f"{name}.Z", 1.0)
            iy, ix, iz = (c_index[f"{name}.{p}"] for p in "YXZ")
            beta = elem["beta"]
            if elem["gen"] == "CCI":
                rows.append(({iy: 1.0, ix: -1.0}, 0.0))          # Iy = Ix
                rows.append(({v(nx): 1.0, v(ny): -1.0}, 0.0))    # Vx = Vy
                rows.append(({iz: 1.0, ix: -beta}, 0.0))         # Iz = Ix
                continue
            rx = elem.get("rx", 0.0)
            if elem["gen"] == "CCCII":
                rx = elem["vt"] / (2.0 * elem["ib"])
            ry = elem.get("ry", math.inf)
            rz = elem.get("rz", math.inf)
            alpha = elem.get("alpha", 1.0)
            if math.isfinite(ry):
                rows.append(({iy: 1.0, v(ny): -1.0 / ry}, 0.0))
            else:
                rows.append(({iy: 1.0}, 0.0))
            rows.append(({v(nx): 1.0, v(ny): -alpha, ix: -rx}, 0.0))
            z_eq = {iz: 1.0, ix: -float(beta)}
            if math.isfinite(rz):
                z_eq[v(nz)] = -1.0 / rz
            rows.append((z_eq, 0.0))
            continue

        n1, n2 = elem["nodes"]
        cur = c_index[name]
        draw(n1, name, 1.0)
        draw(n2, name, -1.0)
        if kind == "R":
            rows.append(({v(n1): 1.0, v(n2): -1.0, cur: -elem["ohms"]}, 0.0))
        elif kind == "C":
            if ac:
                y = 1j * omega * elem["farads"]
                rows.append(({cur: 1.0, v(n1): -y, v(n2): y}, 0.0))
            else:
                rows.append(({cur: 1.0}, 0.0))
        elif kind == "V":
            rows.append(({v(n1): 1.0, v(n2): -1.0}, _source_phasor(elem, ac)))
        elif kind == "I":
            rows.append(({cur: 1.0}, _source_phasor(elem, ac)))
        else:
            raise ValueError(f"unknown element kind {kind!r}")

    for idx, terms in kcl.items():
        rows.append((dict(terms), 0.0))

    if len(rows) != n:
        raise ValueError(f"system is not square: {len(rows)} equations for "
                         f"{n} unknowns")
    for i, (terms, rhs) in enumerate(rows):
        for col, coeff in terms.items():
            a[i, col] += coeff
        b[i] = rhs

    x = np.linalg.solve(a, b)
    out = {}
    for nm in node_list:
        out[f"V({nm})"] = x[v_index[nm]]
    for nm in cur_names:
        out[f"I({nm})"] = x[c_index[nm]]
    return out
