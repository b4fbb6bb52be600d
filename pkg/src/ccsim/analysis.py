"""Analyses over an elaborated circuit: operating point, logarithmic AC
sweep, fixed-step trapezoidal transient, and waveform measurements.

Each entry point expands MACRO conveyors first (a no-op otherwise), so
callers can hand over circuits straight from :func:`ccsim.netlist.elaborate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import elements as el
from .netlist import Circuit, Probe
from .solver import MnaSystem, Solution, build_system, lu_solve, rebuild_rhs

__all__ = [
    "SweepSpec", "TranSpec", "Waveform",
    "run_op", "run_ac", "run_tran",
    "measure_gain", "measure_bandwidth", "sweep_frequencies",
    "NoAcSource", "InsufficientData",
]


class NoAcSource(ValueError):
    """AC sweep requested but no source carries an AC specification."""


class InsufficientData(ValueError):
    """A measurement needs more of the waveform than was simulated."""


@dataclass(frozen=True)
class SweepSpec:
    """Logarithmic frequency sweep: ``pts_per_decade`` points per decade
    from ``fstart`` to ``fstop`` (both in hertz, fstop always included)."""

    pts_per_decade: int
    fstart: float
    fstop: float

    def __post_init__(self):
        if self.pts_per_decade < 1:
            raise ValueError("pts_per_decade must be >= 1")
        if not 0.0 < self.fstart < self.fstop:
            raise ValueError("need 0 < fstart < fstop")


@dataclass(frozen=True)
class TranSpec:
    """Fixed-step transient from 0 to ``tstop`` with step ``tstep``."""

    tstep: float
    tstop: float

    def __post_init__(self):
        if not 0.0 < self.tstep <= self.tstop:
            raise ValueError("need 0 < tstep <= tstop")


class Waveform:
    """Ordered (abscissa, solution) series from a sweep or transient.

    ``kind`` is ``"frequency"`` (abscissa in Hz, complex columns) or
    ``"time"`` (abscissa in seconds, real columns).
    """

    def __init__(self, kind: str, abscissa, solutions: list[Solution]):
        self.kind = kind
        self.abscissa = np.asarray(abscissa, dtype=float)
        self.solutions = list(solutions)
        if len(self.abscissa) != len(self.solutions):
            raise ValueError("abscissa/solution length mismatch")
        if np.any(np.diff(self.abscissa) <= 0.0):
            raise ValueError("abscissa must be strictly increasing")

    def __len__(self) -> int:
        return len(self.solutions)

    def column(self, probe: str | Probe) -> np.ndarray:
        """Value series of one probe across all points."""
        return np.array([sol.probe(probe) for sol in self.solutions])


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------

def run_op(circuit: Circuit) -> Solution:
    """DC operating point: capacitors open, sources at their DC values."""
    circuit = el.expand_macros(circuit)
    return lu_solve(build_system(circuit, el.DcMode()))


def sweep_frequencies(spec: SweepSpec) -> np.ndarray:
    """The sweep grid: fstart * 10^(k/ppd), with fstop appended if the
    grid does not land on it exactly."""
    freqs = []
    k = 0
    while True:
        f = spec.fstart * 10.0 ** (k / spec.pts_per_decade)
        if f >= spec.fstop or math.isclose(f, spec.fstop, rel_tol=1e-9):
            break
        freqs.append(f)
        k += 1
    freqs.append(spec.fstop)
    return np.array(freqs)


def run_ac(circuit: Circuit, spec: SweepSpec) -> Waveform:
    """Small-signal sweep; one complex solve per frequency point."""
    circuit = el.expand_macros(circuit)
    if not any(isinstance(e, (el.VSource, el.ISource)) and e.ac is not None
               for e in circuit.elements):
        raise NoAcSource("no source in the circuit has an AC value")
    freqs = sweep_frequencies(spec)
    solutions = []
    for f in freqs:
        system = build_system(circuit, el.AcMode(omega=2.0 * math.pi * f))
        solutions.append(lu_solve(system))
    return Waveform("frequency", freqs, solutions)


def _capacitors(circuit: Circuit) -> list[el.Capacitor]:
    return [e for e in circuit.elements if isinstance(e, el.Capacitor)]


def _initial_state(circuit: Circuit, init_sol: Solution) -> dict:
    state = {}
    for cap in _capacitors(circuit):
        if cap.ic is not None:
            state[cap.name.casefold()] = (cap.ic,
                                          init_sol.current(cap.name))
        else:
            v0 = init_sol.voltage(circuit.node_names[cap.n1]) - \
                init_sol.voltage(circuit.node_names[cap.n2])
            state[cap.name.casefold()] = (v0, 0.0)
    return state


def run_tran(circuit: Circuit, spec: TranSpec) -> Waveform:
    """Trapezoidal transient with fixed step ``tstep``.

    The t=0 point solves the circuit with sine sources at t=0, capacitors
    open unless they carry an IC (those are pinned, which also yields a
    consistent initial current).  The system matrix is factored once and
    reused for every full step; a shorter final step is taken when tstop
    is not a step multiple, so t=tstop is always emitted.
    """
    circuit = el.expand_macros(circuit)
    init_sol = lu_solve(build_system(circuit, el.TranInitMode()))
    state = _initial_state(circuit, init_sol)
    init_sol.extra_currents = {name: vi[1] for name, vi in state.items()}

    times = [0.0]
    solutions: list[Solution] = [init_sol]
    caps = _capacitors(circuit)
    step_system: MnaSystem | None = None
    step_dt = None
    t = 0.0
    eps = 1e-12 * spec.tstop
    while t < spec.tstop - eps:
        dt = min(spec.tstep, spec.tstop - t)
        t_next = t + dt
        if spec.tstop - t_next < eps:
            t_next = spec.tstop
            dt = t_next - t
        mode = el.TranMode(t=t_next, dt=dt, state=state)
        if step_system is None or dt != step_dt:
            step_system = build_system(circuit, mode)
            step_dt = dt
            sol = lu_solve(step_system, mode=mode)
        else:
            sol = lu_solve(step_system, rhs=rebuild_rhs(step_system, mode),
                           mode=mode)
        new_state = {}
        extras = {}
        for cap in caps:
            key = cap.name.casefold()
            v_prev, i_prev = state[key]
            v_new = sol._vdiff(cap.n1, cap.n2)
            g = 2.0 * cap.farads / dt
            i_new = g * (v_new - v_prev) - i_prev
            new_state[key] = (v_new, i_new)
            extras[key] = i_new
        sol.extra_currents = extras
        state = new_state
        times.append(t_next)
        solutions.append(sol)
        t = t_next
    return Waveform("time", times, solutions)


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------

def measure_gain(wave: Waveform, out_probe, in_probe, at: float):
    """Out/in gain of a waveform.

    For a frequency waveform, the complex phasor ratio at the sweep point
    nearest ``at`` (hertz).  For a time waveform, ``at`` is the signal
    period: the ratio of out/in peak-to-peak amplitudes over the final
    full period, which needs the simulation to have settled and to cover
    at least one period.
    """
    out_col = wave.column(out_probe)
    in_col = wave.column(in_probe)
    if wave.kind == "frequency":
        idx = int(np.argmin(np.abs(wave.abscissa - at)))
        denom = in_col[idx]
        if denom == 0:
            raise InsufficientData(f"input probe is zero at "
                                   f"{wave.abscissa[idx]} Hz")
        return out_col[idx] / denom
    t_end = wave.abscissa[-1]
    if at <= 0.0 or at > t_end + 1e-12 * max(t_end, 1.0):
        raise InsufficientData(f"waveform spans {t_end} s, cannot window "
                               f"one period of {at} s")
    mask = wave.abscissa >= t_end - at * (1.0 + 1e-9)
    if int(np.count_nonzero(mask)) < 4:
        raise InsufficientData("fewer than 4 samples in the final period")
    in_ptp = float(np.ptp(in_col[mask].real))
    out_ptp = float(np.ptp(out_col[mask].real))
    if in_ptp == 0.0:
        raise InsufficientData("input probe has no swing in the final period")
    return out_ptp / in_ptp


def measure_bandwidth(wave: Waveform, probe, ref_probe) -> float | None:
    """-3 dB frequency of |probe/ref_probe|, or None if the gain never
    falls to 1/sqrt(2) of its value at the lowest sweep point.

    The crossing is located by interpolating the gain linearly against
    log-frequency between the two bracketing sweep points.
    """
    if wave.kind != "frequency":
        raise ValueError("bandwidth is defined on frequency waveforms")
    gain = np.abs(wave.column(probe)) / np.abs(wave.column(ref_probe))
    target = gain[0] / math.sqrt(2.0)
    for k in range(1, len(gain)):
        if gain[k] <= target:
            g0, g1 = gain[k - 1], gain[k]
            f0, f1 = wave.abscissa[k - 1], wave.abscissa[k]
            if g1 == g0:
                return float(f1)
            frac = (target - g0) / (g1 - g0)
            return float(10.0 ** (math.log10(f0) +
                                  frac * (math.log10(f1) - math.log10(f0))))
    return None
