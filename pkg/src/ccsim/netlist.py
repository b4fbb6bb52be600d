"""SPICE-style netlist front end: tokenize, parse, pretty-print, elaborate.

The accepted grammar (one logical line each; ``+`` continues the previous
line, ``*`` starts a comment, the first line is always the title)::

    <title line>
    * <comment>
    R<name> <n+> <n-> <value>
    C<name> <n+> <n-> <value> [IC=<volts>]
    V<name> <n+> <n-> [DC <v>] [AC <mag> [<phase_deg>]] [SIN(<voff> <vampl> <freq_hz>)]
    I<name> <n+> <n-> [DC <a>] [AC <mag> [<phase_deg>]] [SIN(<ioff> <iampl> <freq_hz>)]
    CCI <name> <ny> <nx> <nz>
    CCII+ <name> <ny> <nx> <nz> [RX=] [RY=] [RZ=] [ALPHA=] [LEVEL=IDEAL|MACRO] [A=]
    CCII- <name> <ny> <nx> <nz> [same params]
    CCCII+ <name> <ny> <nx> <nz> IB=<amps> [VT=<volts>]
    CCCII- <name> <ny> <nx> <nz> IB=<amps> [VT=<volts>]
    .OP
    .AC DEC <pts_per_decade> <fstart_hz> <fstop_hz>
    .TRAN <tstep_s> <tstop_s>
    .PRINT <V(node) | I(elem) | I(elem.X|Y|Z)> ...
    .END

Conveyor terminals are given in Y X Z order -- this is a convention of
this tool, not a SPICE standard, so double-check terminal order when
porting decks.  All keywords, names and node names are case-insensitive;
ground is the literal node ``0``.  A deck carries exactly one analysis
directive; run several analyses by running the deck several times.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from . import elements as el

__all__ = [
    "Token", "LogicalLine", "TokenStream", "tokenize",
    "parse_value", "format_value",
    "Probe", "parse_probe",
    "ElementCard", "OpDirective", "AcDirective", "TranDirective",
    "PrintDirective", "EndDirective", "Deck", "parse_deck", "format_deck",
    "Circuit", "elaborate",
    "NetlistError", "MalformedValue", "ParseError", "ElaborationError",
    "DuplicateElementName", "NonPositiveValue", "InvalidParameter",
    "NoGroundReference", "EmptyCircuit",
]


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------

class NetlistError(Exception):
    """Base class for netlist parsing and elaboration failures."""


class MalformedValue(NetlistError):
    """A numeric token had no leading numeric literal."""


class ParseError(NetlistError):
    """One or more syntax problems; ``issues`` is a list of
    ``(line_number or None, message)`` pairs in source order."""

    def __init__(self, issues: list[tuple[int | None, str]]):
        self.issues = list(issues)
        super().__init__("\n".join(self.format_issues()))

    def format_issues(self) -> list[str]:
        return [f"line {ln}: {msg}" if ln is not None else msg
                for ln, msg in self.issues]


class ElaborationError(NetlistError):
    """A structurally valid deck that does not describe a legal circuit."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateElementName(ElaborationError):
    pass


class NonPositiveValue(ElaborationError):
    pass


class InvalidParameter(ElaborationError):
    pass


class NoGroundReference(ElaborationError):
    pass


class EmptyCircuit(ElaborationError):
    pass


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    text: str
    line: int    # 1-based physical line
    col: int     # 1-based column of the first character


@dataclass(frozen=True)
class LogicalLine:
    line: int                     # physical line where the card starts
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class TokenStream:
    title: str
    lines: tuple[LogicalLine, ...]


def _split_line(text: str, lineno: int) -> list[Token]:
    out = []
    for m in re.finditer(r"\S+", text):
        out.append(Token(m.group(0), lineno, m.start() + 1))
    return out


def _merge_parens(tokens: list[Token]) -> list[Token]:
    """Join whitespace-split fragments so parentheses balance per token.

    ``SIN(0 0.1 1k)`` arrives as three fragments and leaves as one token;
    a bare ``(`` opener attaches to the preceding token.
    """
    merged: list[Token] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        text = tok.text
        i += 1
        if merged and text.startswith("(") and "(" not in merged[-1].text:
            prev = merged.pop()
            tok = Token(prev.text + text, prev.line, prev.col)
            text = tok.text
        while text.count("(") > text.count(")") and i < len(tokens):
            text = text + " " + tokens[i].text
            tok = Token(text, tok.line, tok.col)
            i += 1
        merged.append(tok)
    return merged


def tokenize(text: str) -> TokenStream:
    """Split netlist text into logical lines of tokens.

    Total: never raises.  The first physical line is the title; comment
    lines (leading ``*``) and blank lines are dropped; a leading ``+``
    joins a line to its predecessor.
    """
    physical = text.splitlines()
    title = physical[0].strip() if physical else ""
    lines: list[LogicalLine] = []
    for lineno, raw in enumerate(physical[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            continue
        if stripped.startswith("+"):
            cont = raw.replace("+", " ", 1)
            toks = _split_line(cont, lineno)
            if lines:
                prev = lines[-1]
                lines[-1] = LogicalLine(prev.line, prev.tokens + tuple(toks))
            elif toks:
                lines.append(LogicalLine(lineno, tuple(toks)))
            continue
        toks = _split_line(raw, lineno)
        lines.append(LogicalLine(lineno, tuple(toks)))
    merged = [LogicalLine(ll.line, tuple(_merge_parens(list(ll.tokens))))
              for ll in lines]
    return TokenStream(title, tuple(merged))


# ---------------------------------------------------------------------------
# numeric values
# ---------------------------------------------------------------------------

# SPICE engineering suffixes as decimal exponents; MEG before M (milli)
_SUFFIXES = (
    ("MEG", 6),
    ("F", -15), ("P", -12), ("N", -9), ("U", -6),
    ("M", -3), ("K", 3), ("G", 9), ("T", 12),
)

_NUMBER_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


def parse_value(token: str | Token) -> float:
    """Parse a SPICE number: optional SI suffix, trailing units ignored.

    ``10k`` -> 1e4, ``2meg`` -> 2e6, ``100uF`` -> 1e-4 (the ``F`` is a
    unit label, dropped per SPICE convention).  The suffix is folded into
    the decimal exponent before conversion so the result rounds once.
    """
    text = token.text if isinstance(token, Token) else token
    m = _NUMBER_RE.match(text.strip())
    if not m:
        raise MalformedValue(f"malformed value {text!r}")
    literal = m.group(0)
    rest = text.strip()[m.end():].upper()
    for suffix, exp10 in _SUFFIXES:
        if rest.startswith(suffix):
            mant, e_char, exp = literal.partition("e" if "e" in literal
                                                  else "E")
            if e_char:
                return float(f"{mant}e{int(exp) + exp10}")
            return float(f"{literal}e{exp10}")
    return float(literal)


def format_value(x: float) -> str:
    """Exact textual form of ``x``: ``parse_value(format_value(x)) == x``."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

_PROBE_RE = re.compile(r"^([VI])\(([^().=\s]+?)(?:\.([XYZ]))?\)$", re.IGNORECASE)


@dataclass(frozen=True)
class Probe:
    """A printable quantity: ``V(node)``, ``I(elem)`` or ``I(elem.PORT)``."""

    kind: str                 # "V" or "I"
    subject: str              # node or element name, spelling preserved
    port: str | None = None   # "X", "Y" or "Z" for conveyor ports

    def __str__(self) -> str:
        if self.port:
            return f"{self.kind}({self.subject}.{self.port})"
        return f"{self.kind}({self.subject})"


def parse_probe(text: str) -> Probe:
    m = _PROBE_RE.match(text.strip())
    if not m:
        raise MalformedValue(f"malformed probe {text!r}; expected V(node), "
                             "I(elem) or I(elem.X|Y|Z)")
    kind, subject, port = m.group(1).upper(), m.group(2), m.group(3)
    if port and kind == "V":
        raise MalformedValue(f"malformed probe {text!r}; V() takes a node")
    return Probe(kind, subject, port.upper() if port else None)


# ---------------------------------------------------------------------------
# deck data model
# ---------------------------------------------------------------------------

_IDENT_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_+\-]*$")

_CONVEYOR_PARAMS = {
    "CCI": frozenset(),
    "CCII+": frozenset({"RX", "RY", "RZ", "ALPHA", "LEVEL", "A"}),
    "CCII-": frozenset({"RX", "RY", "RZ", "ALPHA", "LEVEL", "A"}),
    "CCCII+": frozenset({"IB", "VT"}),
    "CCCII-": frozenset({"IB", "VT"}),
}


@dataclass(frozen=True)
class ElementCard:
    kind: str                        # R, C, V, I, CCI, CCII+, CCII-, CCCII+, CCCII-
    name: str
    nodes: tuple[str, ...]
    params: dict
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class OpDirective:
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AcDirective:
    pts_per_decade: int
    fstart: float
    fstop: float
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class TranDirective:
    tstep: float
    tstop: float
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PrintDirective:
    probes: tuple[Probe, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class EndDirective:
    line: int = field(default=0, compare=False)


Directive = Union[OpDirective, AcDirective, TranDirective,
                  PrintDirective, EndDirective]

_ANALYSES = (OpDirective, AcDirective, TranDirective)


@dataclass(frozen=True)
class Deck:
    title: str
    cards: tuple[ElementCard, ...]
    directives: tuple[Directive, ...]

    def analysis(self) -> Directive:
        for d in self.directives:
            if isinstance(d, _ANALYSES):
                return d
        raise ValueError("deck has no analysis directive")

    def print_probes(self) -> tuple[Probe, ...]:
        out: list[Probe] = []
        for d in self.directives:
            if isinstance(d, PrintDirective):
                out.extend(d.probes)
        return tuple(out)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Issues:
    def __init__(self):
        self.items: list[tuple[int | None, str]] = []

    def add(self, line: int | None, message: str) -> None:
        self.items.append((line, message))


def _want_ident(text: str, what: str, line: int, issues: _Issues) -> bool:
    if _IDENT_RE.match(text):
        return True
    issues.add(line, f"invalid {what} {text!r}")
    return False


def _parse_two_terminal(ll: LogicalLine, issues: _Issues) -> ElementCard | None:
    toks = ll.tokens
    name = toks[0].text
    kind = name[0].upper()
    if len(toks) < 3:
        issues.add(ll.line, f"{name}: expected two nodes")
        return None
    if not _want_ident(name, "element name", ll.line, issues):
        return None
    n1, n2 = toks[1].text, toks[2].text
    for n in (n1, n2):
        if not _want_ident(n, "node name", ll.line, issues):
            return None
    rest = list(toks[3:])
    params: dict = {}
    try:
        if kind in ("R", "C"):
            if not rest:
                issues.add(ll.line, f"{name}: missing value")
                return None
            params["VALUE"] = parse_value(rest.pop(0))
            if kind == "C" and rest and rest[0].text.upper().startswith("IC="):
                params["IC"] = parse_value(rest.pop(0).text[3:])
            if rest:
                issues.add(ll.line, f"{name}: unexpected token {rest[0].text!r}")
                return None
        else:  # V or I
            i = 0
            while i < len(rest):
                word = rest[i].text.upper()
                if word == "DC":
                    if "DC" in params or i + 1 >= len(rest):
                        issues.add(ll.line, f"{name}: bad DC spec")
                        return None
                    params["DC"] = parse_value(rest[i + 1])
                    i += 2
                elif word == "AC":
                    if "AC" in params or i + 1 >= len(rest):
                        issues.add(ll.line, f"{name}: bad AC spec")
                        return None
                    mag = parse_value(rest[i + 1])
                    phase = 0.0
                    i += 2
                    if i < len(rest) and rest[i].text.upper() not in ("DC", "AC") \
                            and not rest[i].text.upper().startswith("SIN"):
                        phase = parse_value(rest[i])
                        i += 1
                    params["AC"] = (mag, phase)
                elif word.startswith("SIN(") and word.endswith(")"):
                    if "SIN" in params:
                        issues.add(ll.line, f"{name}: duplicate SIN spec")
                        return None
                    args = rest[i].text[4:-1].split()
                    if len(args) != 3:
                        issues.add(ll.line, f"{name}: SIN() takes exactly "
                                            "(offset amplitude freq)")
                        return None
                    params["SIN"] = tuple(parse_value(a) for a in args)
                    i += 1
                else:
                    issues.add(ll.line,
                               f"{name}: unexpected token {rest[i].text!r}")
                    return None
    except MalformedValue as exc:
        issues.add(ll.line, f"{name}: {exc}")
        return None
    return ElementCard(kind, name, (n1, n2), params, line=ll.line)


def _parse_conveyor(ll: LogicalLine, issues: _Issues) -> ElementCard | None:
    toks = ll.tokens
    kind = toks[0].text.upper()
    legal = _CONVEYOR_PARAMS[kind]
    if len(toks) < 5:
        issues.add(ll.line, f"{kind}: expected <name> <ny> <nx> <nz>")
        return None
    name = toks[1].text
    if not _want_ident(name, "element name", ll.line, issues):
        return None
    nodes = tuple(t.text for t in toks[2:5])
    for n in nodes:
        if not _want_ident(n, "node name", ll.line, issues):
            return None
    params: dict = {}
    for tok in toks[5:]:
        if "=" not in tok.text:
            issues.add(ll.line, f"{name}: expected KEY=VALUE, got {tok.text!r}")
            return None
        key, _, val = tok.text.partition("=")
        key = key.upper()
        if key not in legal:
            issues.add(ll.line, f"{name}: parameter {key!r} is not legal "
                                f"for {kind}")
            return None
        if key in params:
            issues.add(ll.line, f"{name}: duplicate parameter {key!r}")
            return None
        if key == "LEVEL":
            level = val.upper()
            if level not in ("IDEAL", "MACRO"):
                issues.add(ll.line, f"{name}: LEVEL must be IDEAL or MACRO")
                return None
            params["LEVEL"] = level
        else:
            try:
                params[key] = parse_value(val)
            except MalformedValue as exc:
                issues.add(ll.line, f"{name}: {exc}")
                return None
    if kind in ("CCCII+", "CCCII-") and "IB" not in params:
        issues.add(ll.line, f"{name}: {kind} requires IB=<amps>")
        return None
    return ElementCard(kind, name, nodes, params, line=ll.line)


def _parse_directive(ll: LogicalLine, issues: _Issues) -> Directive | None:
    word = ll.tokens[0].text.upper()
    args = ll.tokens[1:]
    try:
        if word == ".OP":
            if args:
                issues.add(ll.line, ".OP takes no arguments")
                return None
            return OpDirective(line=ll.line)
        if word == ".AC":
            if len(args) != 4 or args[0].text.upper() != "DEC":
                issues.add(ll.line,
                           ".AC expects: .AC DEC <pts_per_decade> <fstart> <fstop>")
                return None
            pts = parse_value(args[1])
            fstart = parse_value(args[2])
            fstop = parse_value(args[3])
            if pts < 1 or pts != int(pts):
                issues.add(ll.line, ".AC points per decade must be a positive "
                                    "integer")
                return None
            if not (0.0 < fstart < fstop):
                issues.add(ll.line, ".AC requires 0 < fstart < fstop")
                return None
            return AcDirective(int(pts), fstart, fstop, line=ll.line)
        if word == ".TRAN":
            if len(args) != 2:
                issues.add(ll.line, ".TRAN expects: .TRAN <tstep> <tstop>")
                return None
            tstep = parse_value(args[0])
            tstop = parse_value(args[1])
            if not (0.0 < tstep <= tstop):
                issues.add(ll.line, ".TRAN requires 0 < tstep <= tstop")
                return None
            return TranDirective(tstep, tstop, line=ll.line)
        if word == ".PRINT":
            if not args:
                issues.add(ll.line, ".PRINT needs at least one probe")
                return None
            probes = []
            for tok in args:
                try:
                    probes.append(parse_probe(tok.text))
                except MalformedValue as exc:
                    issues.add(ll.line, str(exc))
                    return None
            return PrintDirective(tuple(probes), line=ll.line)
        if word == ".END":
            if args:
                issues.add(ll.line, ".END takes no arguments")
                return None
            return EndDirective(line=ll.line)
    except MalformedValue as exc:
        issues.add(ll.line, str(exc))
        return None
    issues.add(ll.line, f"unknown directive {word!r}")
    return None


def parse_deck(text: str) -> Deck:
    """Parse netlist text into a :class:`Deck`.

    Recoverable card-level problems are collected so one run reports every
    bad line; raises :class:`ParseError` carrying all of them.
    """
    stream = tokenize(text)
    issues = _Issues()
    cards: list[ElementCard] = []
    directives: list[Directive] = []
    analysis_seen: Directive | None = None
    ended = False

    for ll in stream.lines:
        if not ll.tokens:
            continue
        if ended:
            issues.add(ll.line, "content after .END")
            continue
        first = ll.tokens[0].text
        if first.startswith("."):
            d = _parse_directive(ll, issues)
            if d is None:
                continue
            if isinstance(d, _ANALYSES):
                if analysis_seen is not None:
                    issues.add(ll.line,
                               "multiple analysis directives; a deck carries "
                               "exactly one of .OP/.AC/.TRAN")
                    continue
                analysis_seen = d
            if isinstance(d, EndDirective):
                ended = True
            directives.append(d)
            continue
        kind = first.upper()
        if kind in _CONVEYOR_PARAMS:
            card = _parse_conveyor(ll, issues)
        elif kind[0] in "RCVI":
            card = _parse_two_terminal(ll, issues)
        else:
            issues.add(ll.line, f"unknown card kind {first!r}")
            card = None
        if card is not None:
            cards.append(card)

    if analysis_seen is None:
        issues.add(None, "deck has no analysis directive (.OP, .AC or .TRAN)")
    if issues.items:
        raise ParseError(issues.items)
    return Deck(stream.title, tuple(cards), tuple(directives))


# ---------------------------------------------------------------------------
# pretty-printer
# ---------------------------------------------------------------------------

def _format_card(card: ElementCard) -> str:
    p = card.params
    if card.kind in ("R", "C"):
        parts = [card.name, *card.nodes, format_value(p["VALUE"])]
        if "IC" in p:
            parts.append(f"IC={format_value(p['IC'])}")
        return " ".join(parts)
    if card.kind in ("V", "I"):
        parts = [card.name, *card.nodes]
        if "DC" in p:
            parts += ["DC", format_value(p["DC"])]
        if "AC" in p:
            mag, phase = p["AC"]
            parts += ["AC", format_value(mag), format_value(phase)]
        if "SIN" in p:
            voff, vampl, freq = p["SIN"]
            parts.append(f"SIN({format_value(voff)} {format_value(vampl)} "
                         f"{format_value(freq)})")
        return " ".join(parts)
    parts = [card.kind, card.name, *card.nodes]
    for key in ("RX", "RY", "RZ", "ALPHA", "LEVEL", "A", "IB", "VT"):
        if key in p:
            val = p[key] if key == "LEVEL" else format_value(p[key])
            parts.append(f"{key}={val}")
    return " ".join(parts)


def _format_directive(d: Directive) -> str:
    if isinstance(d, OpDirective):
        return ".OP"
    if isinstance(d, AcDirective):
        return (f".AC DEC {d.pts_per_decade} {format_value(d.fstart)} "
                f"{format_value(d.fstop)}")
    if isinstance(d, TranDirective):
        return f".TRAN {format_value(d.tstep)} {format_value(d.tstop)}"
    if isinstance(d, PrintDirective):
        return ".PRINT " + " ".join(str(pr) for pr in d.probes)
    return ".END"


def format_deck(deck: Deck) -> str:
    """Render a deck back to netlist text; reparsing yields an equal Deck."""
    lines = [deck.title]
    lines += [_format_card(c) for c in deck.cards]
    lines += [_format_directive(d) for d in deck.directives]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# elaboration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Circuit:
    """An elaborated, validated circuit; immutable once built.

    Node 0 is ground (netlist name ``0``); remaining nodes are indexed in
    first-appearance order so unknown ordering -- and therefore pivoting
    and output -- is reproducible.
    """

    title: str
    node_names: tuple[str, ...]
    node_index: dict            # casefolded name -> index
    elements: tuple
    element_lines: dict = field(default_factory=dict)   # casefolded name -> line
    node_lines: dict = field(default_factory=dict)      # casefolded name -> first line
    macro_ports: dict = field(default_factory=dict)     # casefolded name -> MacroPorts

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    def node(self, name: str) -> int:
        return self.node_index[name.casefold()]

    def element(self, name: str):
        key = name.casefold()
        for e in self.elements:
            if e.name.casefold() == key:
                return e
        raise KeyError(name)


def _positive(value: float, what: str, line: int) -> float:
    if not value > 0.0:
        raise NonPositiveValue(f"{what} must be positive, got "
                               f"{format_value(value)}", line)
    return value


def _build_element(card: ElementCard, node_of) -> el.Element:
    p = card.params
    if card.kind == "R":
        return el.Resistor(card.name, node_of(0), node_of(1),
                           _positive(p["VALUE"], "resistance", card.line))
    if card.kind == "C":
        return el.Capacitor(card.name, node_of(0), node_of(1),
                            _positive(p["VALUE"], "capacitance", card.line),
                            ic=p.get("IC"))
    if card.kind == "V":
        return el.VSource(card.name, node_of(0), node_of(1),
                          dc=p.get("DC", 0.0), ac=p.get("AC"),
                          sin=p.get("SIN"))
    if card.kind == "I":
        return el.ISource(card.name, node_of(0), node_of(1),
                          dc=p.get("DC", 0.0), ac=p.get("AC"),
                          sin=p.get("SIN"))

    # conveyors: nodes are Y, X, Z
    ny, nx, nz = node_of(0), node_of(1), node_of(2)
    beta = -1 if card.kind.endswith("-") else 1
    if card.kind == "CCI":
        return el.Conveyor(card.name, "CCI", 1, ny, nx, nz)
    if card.kind.startswith("CCCII"):
        ib = _positive(p["IB"], "bias current IB", card.line)
        vt = p.get("VT", el.THERMAL_VOLTAGE)
        _positive(vt, "thermal voltage VT", card.line)
        return el.Conveyor(card.name, "CCCII", beta, ny, nx, nz, ib=ib, vt=vt)

    rx = p.get("RX", 0.0)
    if rx < 0.0:
        raise InvalidParameter(f"RX must be >= 0, got {format_value(rx)}",
                               card.line)
    ry = p.get("RY", math.inf)
    rz = p.get("RZ", math.inf)
    if not math.isinf(ry):
        _positive(ry, "RY", card.line)
    if not math.isinf(rz):
        _positive(rz, "RZ", card.line)
    alpha = p.get("ALPHA", 1.0)
    if not 0.0 < alpha <= 1.1:
        raise InvalidParameter(f"ALPHA must lie in (0, 1.1], got "
                               f"{format_value(alpha)}", card.line)
    level = p.get("LEVEL", "IDEAL")
    gain = p.get("A", 1e6)
    if level == "MACRO" and not gain > 1.0:
        raise InvalidParameter(f"macro gain A must exceed 1, got "
                               f"{format_value(gain)}", card.line)
    return el.Conveyor(card.name, "CCII", beta, ny, nx, nz,
                       nonideal=el.NonIdealParams(rx=rx, ry=ry, rz=rz,
                                                  alpha=alpha),
                       level=level, macro_gain=gain)


def elaborate(deck: Deck) -> Circuit:
    """Intern nodes, apply defaults, validate, and build a Circuit."""
    if not deck.cards:
        raise EmptyCircuit("deck contains no elements")

    node_names: list[str] = ["0"]
    node_index: dict = {"0": 0}
    node_lines: dict = {"0": 0}

    def intern(name: str, line: int) -> int:
        key = name.casefold()
        if key not in node_index:
            node_index[key] = len(node_names)
            node_names.append(name)
            node_lines[key] = line
        return node_index[key]

    elements = []
    element_lines: dict = {}
    for card in deck.cards:
        key = card.name.casefold()
        if key in element_lines:
            raise DuplicateElementName(
                f"duplicate element name {card.name!r} (first defined at "
                f"line {element_lines[key]})", card.line)
        element_lines[key] = card.line
        indices = [intern(n, card.line) for n in card.nodes]
        elements.append(_build_element(card, lambda i: indices[i]))

    touched_ground = any(0 in (getattr(e, a) for a in _node_attrs(e))
                         for e in elements)
    if not touched_ground:
        raise NoGroundReference("no element is connected to ground (node 0)")

    return Circuit(deck.title, tuple(node_names), node_index,
                   tuple(elements), element_lines, node_lines)


def _node_attrs(elem) -> tuple[str, ...]:
    if isinstance(elem, el.Conveyor):
        return ("ny", "nx", "nz")
    return ("n1", "n2")
