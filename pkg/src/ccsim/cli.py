"""Command-line front end: run decks, emit CSV/SVG, list bundled examples.

Exit codes: 0 success, 1 parse/elaboration/usage error (bad file, bad
probe, malformed deck), 2 solver error (singular system).  Diagnostics go
to stderr with line numbers where known; CSV goes to stdout unless --out
is given.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import analysis, elements as el, netlist, solver

__all__ = ["RunConfig", "cmd_run", "cmd_check", "cmd_examples",
           "emit_csv", "emit_svg", "main", "entry", "EXAMPLE_DECKS"]


# ---------------------------------------------------------------------------
# bundled example decks
# ---------------------------------------------------------------------------

EXAMPLE_DECKS = {
    "follower_ac": """\
CCII+ unity-gain voltage follower, AC sweep
* Y driven by a 1 V AC source; X and Z loaded with 1 kOhm.
* The X voltage tracks Y exactly: flat 0 dB from 1 Hz to 1 MHz.
VIN y 0 DC 0 AC 1 0
RX x 0 1k
RZ z 0 1k
CCII+ U1 y x z
.AC DEC 10 1 1meg
.PRINT V(x) V(y)
.END
""",
    "conveyance_tran": """\
CCII+ conveyance check: Vx tracks Vy, Ix is copied to Iz
* 1 kHz sine on Y, 1 kOhm loads on X and Z, five periods.
VIN y 0 SIN(0 1 1k)
RX x 0 1k
RZ z 0 1k
CCII+ U1 y x z
.TRAN 10u 5m
.PRINT V(x) V(y) I(U1.X) I(U1.Z)
.END
""",
    "amp_op": """\
CCII+ amplifier, gain = R2/R1 (paper Sec. IV)
VIN in 0 DC 1 AC 1 SIN(0 0.1 1k)
R1 x 0 1k
R2 out 0 10k
CCII+ U1 in x out
.OP
.PRINT V(out) V(in) I(U1.X) I(U1.Z)
.END
""",
    "amp_tran": """\
CCII+ amplifier transient: 100 mV sine in, 1 V sine out
* Same topology as amp_op (R1=1k at X, R2=10k at Z, gain 10).
VIN in 0 DC 0 SIN(0 0.1 1k)
R1 x 0 1k
R2 out 0 10k
CCII+ U1 in x out
.TRAN 1u 5m
.PRINT V(out) V(in)
.END
""",
    "macro_follower": """\
CCII+ macro-model follower: finite-gain amplifier composite
* LEVEL=MACRO builds the conveyor from a gain-A differential stage in
* unity feedback plus a current mirror; follower error is 1/(1+A).
VIN y 0 DC 1
RX x 0 1k
RZ z 0 1k
CCII+ U1 y x z LEVEL=MACRO A=1e6
.OP
.PRINT V(x) V(y) I(U1.X) I(U1.Z)
.END
""",
    "macro_inverting": """\
CCII- macro-model: the mirrored Z current changes sign
* Identical to macro_follower except for the conveyor polarity, so
* I(U1.Z) here is the exact negation of the macro_follower value.
VIN y 0 DC 1
RX x 0 1k
RZ z 0 1k
CCII- U1 y x z LEVEL=MACRO A=1e6
.OP
.PRINT I(U1.X) I(U1.Z) V(z)
.END
""",
    "cccii_rx": """\
CCCII+ amplifier: bias current sets the X-port resistance
* Rx = Vt/(2*Ib) = 129.25 Ohm at Ib=100uA, so the gain drops from
* R2/R1 = 10 to R2/(R1+Rx) = 8.8554.
VIN in 0 DC 1
R1 x 0 1k
R2 out 0 10k
CCCII+ U1 in x out IB=100u
.OP
.PRINT V(out) V(in) I(U1.X)
.END
""",
}

_EXAMPLE_NOTES = {
    "follower_ac": "ideal CCII+ voltage follower, flat unity gain over an AC sweep",
    "conveyance_tran": "transient proof that Vx=Vy and Ix=Iz for an ideal CCII+",
    "amp_op": "non-inverting amplifier at the operating point, gain R2/R1 = 10",
    "amp_tran": "the same amplifier amplifying a 1 kHz sine by 10",
    "macro_follower": "finite-gain macro-model follower (error ~ 1/A)",
    "macro_inverting": "CCII- macro-model with inverted output current",
    "cccii_rx": "bias-controlled conveyor: gain R2/(R1 + Vt/(2*Ib))",
}


@dataclass(frozen=True)
class RunConfig:
    deck_path: str
    out_csv: str | None = None     # None -> stdout
    out_svg: str | None = None
    probes: tuple[str, ...] | None = None   # override of the .PRINT list


# ---------------------------------------------------------------------------
# value formatting (bit-exact CSV contract)
# ---------------------------------------------------------------------------

def _format_sig9(v: float) -> str:
    """Format with exactly 9 significant digits, positional notation for
    exponents -4..8 and scientific outside that range."""
    if isinstance(v, complex):
        v = v.real
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return str(v)
    s = f"{v:.8e}"
    mant, _, exp_s = s.partition("e")
    exp = int(exp_s)
    sign = "-" if mant.startswith("-") else ""
    digits = mant.lstrip("-").replace(".", "")
    if -4 <= exp <= 8:
        if exp >= 0:
            int_part, frac = digits[:exp + 1], digits[exp + 1:]
            return f"{sign}{int_part}.{frac}" if frac else sign + int_part
        return f"{sign}0.{'0' * (-exp - 1)}{digits}"
    return s


def _format_abscissa(x: float) -> str:
    return f"{x:.12g}"


# ---------------------------------------------------------------------------
# CSV / SVG emitters
# ---------------------------------------------------------------------------

def emit_csv(result, probes, sink) -> None:
    """Write a solution or waveform as CSV.

    Header is ``op|time|freq`` followed by one column per probe; AC probes
    expand into ``<probe>.mag_db`` and ``<probe>.phase_deg``.  Values carry
    9 significant digits; separators are ``,`` and ``\\n``.
    """
    probes = list(probes)
    if isinstance(result, solver.Solution):
        header = ["op"] + [str(p) for p in probes]
        sink.write(",".join(header) + "\n")
        row = ["0"] + [_format_sig9(result.probe(p)) for p in probes]
        sink.write(",".join(row) + "\n")
        return

    wave = result
    if wave.kind == "frequency":
        header = ["freq"]
        for p in probes:
            header += [f"{p}.mag_db", f"{p}.phase_deg"]
    else:
        header = ["time"] + [str(p) for p in probes]
    sink.write(",".join(header) + "\n")
    columns = [wave.column(p) for p in probes]
    for i, x in enumerate(wave.abscissa):
        row = [_format_abscissa(x)]
        for col in columns:
            v = col[i]
            if wave.kind == "frequency":
                mag = abs(v)
                db = 20.0 * math.log10(mag) if mag > 0.0 else -math.inf
                row += [_format_sig9(db),
                        _format_sig9(math.degrees(math.atan2(v.imag, v.real)))]
            else:
                row.append(_format_sig9(v.real if isinstance(v, complex)
                                        else v))
        sink.write(",".join(row) + "\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
            "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

_SVG_W, _SVG_H = 720, 440
_PLOT = (70, 20, 700, 380)      # left, top, right, bottom


def _svg_series(result, probes):
    """(x values, label, y-series per probe, axis captions)."""
    if isinstance(result, solver.Solution):
        ys = [[float(getattr(result.probe(p), "real", result.probe(p)))]
              for p in probes]
        return [0.0], "operating point", ys, "value"
    wave = result
    if wave.kind == "frequency":
        xs = [math.log10(f) for f in wave.abscissa]
        ys = []
        for p in probes:
            col = wave.column(p)
            ys.append([20.0 * math.log10(abs(v)) if abs(v) > 0.0 else -300.0
                       for v in col])
        return xs, "log10(frequency [Hz])", ys, "magnitude [dB]"
    xs = [float(t) for t in wave.abscissa]
    ys = [[float(v.real if isinstance(v, complex) else v)
           for v in wave.column(p)] for p in probes]
    return xs, "time [s]", ys, "value [V, A]"


def emit_svg(result, probes, sink) -> None:
    """Write a deterministic single-plot SVG: one polyline per probe,
    log-x for AC sweeps, linear otherwise, with axis labels and legend."""
    probes = list(probes)
    xs, x_label, series, y_label = _svg_series(result, probes)
    left, top, right, bottom = _PLOT

    x_min, x_max = (min(xs), max(xs)) if xs else (0.0, 1.0)
    flat = [v for ser in series for v in ser]
    y_min, y_max = (min(flat), max(flat)) if flat else (0.0, 1.0)
    if x_max == x_min:
        x_min, x_max = x_min - 1.0, x_max + 1.0
    if y_max == y_min:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min, y_max = y_min - pad, y_max + pad

    def sx(x):
        return left + (x - x_min) / (x_max - x_min) * (right - left)

    def sy(y):
        return bottom - (y - y_min) / (y_max - y_min) * (bottom - top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
           f'height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
           f'<rect x="{left}" y="{top}" width="{right - left}" '
           f'height="{bottom - top}" fill="none" stroke="#444"/>']
    for i, (p, ser) in enumerate(zip(probes, series)):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ser))
        if len(xs) == 1:
            out.append(f'<circle cx="{sx(xs[0]):.2f}" cy="{sy(ser[0]):.2f}" '
                       f'r="3" fill="{color}"/>')
        else:
            out.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
        ly = top + 16 + 16 * i
        out.append(f'<line x1="{right - 150}" y1="{ly - 4}" '
                   f'x2="{right - 125}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{right - 118}" y="{ly}" font-size="12" '
                   f'font-family="monospace">{p}</text>')
    out.append(f'<text x="{(left + right) // 2}" y="{_SVG_H - 8}" '
               f'font-size="13" text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="16" y="{(top + bottom) // 2}" font-size="13" '
               f'text-anchor="middle" transform="rotate(-90 16 '
               f'{(top + bottom) // 2})">{y_label}</text>')
    for x, anchor in ((x_min, "start"), (x_max, "end")):
        out.append(f'<text x="{sx(x):.2f}" y="{bottom + 16}" font-size="11" '
                   f'text-anchor="{anchor}">{x:.6g}</text>')
    for y in (y_min, y_max):
        out.append(f'<text x="{left - 6}" y="{sy(y):.2f}" font-size="11" '
                   f'text-anchor="end">{y:.6g}</text>')
    out.append("</svg>")
    sink.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load_circuit(path: str):
    """Parse, elaborate and macro-expand a deck file.

    Returns (deck, circuit); raises NetlistError subclasses on bad input.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise netlist.NetlistError(f"file not found: {path}") from None
    except OSError as exc:
        raise netlist.NetlistError(f"cannot read {path}: {exc}") from None
    deck = netlist.parse_deck(text)
    circuit = netlist.elaborate(deck)
    return deck, el.expand_macros(circuit)


def _report(exc: Exception) -> None:
    if isinstance(exc, netlist.ParseError):
        for line in exc.format_issues():
            print(f"error: {line}", file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def _default_probes(deck, circuit) -> list[netlist.Probe]:
    probes = list(deck.print_probes())
    if probes:
        return probes
    return [netlist.Probe("V", name) for name in circuit.node_names[1:]
            if "#" not in name]


def cmd_run(config: RunConfig) -> int:
    try:
        deck, circuit = _load_circuit(config.deck_path)
        if config.probes:
            probes = [netlist.parse_probe(p) for p in config.probes]
        else:
            probes = _default_probes(deck, circuit)
        for p in probes:
            solver.check_probe(circuit, p)
    except (netlist.NetlistError, solver.UnknownProbe) as exc:
        _report(exc)
        return 1

    try:
        directive = deck.analysis()
        if isinstance(directive, netlist.OpDirective):
            result = analysis.run_op(circuit)
        elif isinstance(directive, netlist.AcDirective):
            result = analysis.run_ac(circuit, analysis.SweepSpec(
                directive.pts_per_decade, directive.fstart, directive.fstop))
        else:
            result = analysis.run_tran(circuit, analysis.TranSpec(
                directive.tstep, directive.tstop))
    except (solver.SolverError, analysis.NoAcSource) as exc:
        _report(exc)
        return 2

    if config.out_csv:
        with open(config.out_csv, "w", newline="") as f:
            emit_csv(result, probes, f)
    else:
        emit_csv(result, probes, sys.stdout)
    if config.out_svg:
        with open(config.out_svg, "w", newline="") as f:
            emit_svg(result, probes, f)
    return 0


def cmd_check(path: str) -> int:
    try:
        deck, circuit = _load_circuit(path)
    except netlist.NetlistError as exc:
        _report(exc)
        return 1
    n_user = sum(1 for n in circuit.node_names[1:] if "#" not in n)
    print(f"ok: {deck.title!r}: {len(deck.cards)} elements, "
          f"{n_user} nodes plus ground, "
          f"{type(deck.analysis()).__name__.removesuffix('Directive').upper()}"
          " analysis")
    return 0


def cmd_examples(name: str | None) -> int:
    if name is None:
        for key in EXAMPLE_DECKS:
            print(f"{key:<18} {_EXAMPLE_NOTES[key]}")
        return 0
    deck = EXAMPLE_DECKS.get(name)
    if deck is None:
        print(f"error: no bundled example named {name!r}; run "
              "'ccsim examples' for the list", file=sys.stderr)
        return 1
    sys.stdout.write(deck)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccsim",
        description="Current-mode circuit simulator with current-conveyor "
                    "elements (CCI, CCII+/-, CCCII+/-)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a netlist and emit CSV")
    run.add_argument("deck", help="netlist file")
    run.add_argument("--out", help="CSV output path (default: stdout)")
    run.add_argument("--svg", help="also write an SVG plot")
    run.add_argument("--probe", action="append", default=None,
                     metavar="P", help="override .PRINT probes, e.g. "
                     "--probe 'V(out)' --probe 'I(U1.Z)'")

    check = sub.add_parser("check", help="parse and elaborate only")
    check.add_argument("deck", help="netlist file")

    ex = sub.add_parser("examples", help="list or print bundled decks")
    ex.add_argument("name", nargs="?", help="deck name to print")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            probes = tuple(args.probe) if args.probe else None
            return cmd_run(RunConfig(args.deck, out_csv=args.out,
                                     out_svg=args.svg, probes=probes))
        if args.command == "check":
            return cmd_check(args.deck)
        return cmd_examples(args.name)
    except Exception as exc:   # malformed input must never crash
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
