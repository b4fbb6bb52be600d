"""ccsim: a current-mode analog circuit simulator.

SPICE-style netlists with first-class current-conveyor elements (CCI,
CCII+/-, CCCII+/-), DC/AC/transient analyses over dense MNA, and a small
CLI (``ccsim run|check|examples``).
"""

from .netlist import (
    Circuit, Deck, ParseError, ElaborationError, NetlistError,
    elaborate, format_deck, format_value, parse_deck, parse_probe,
    parse_value,
)
from .elements import (
    THERMAL_VOLTAGE, NonIdealParams, cccii_input_resistance, expand_macros,
    ota_gm,
)
from .solver import (
    SingularMatrix, Solution, SolverError, UnknownProbe, branch_currents,
    build_system, lu_solve,
)
from .analysis import (
    InsufficientData, NoAcSource, SweepSpec, TranSpec, Waveform,
    measure_bandwidth, measure_gain, run_ac, run_op, run_tran,
)

__version__ = "0.1.0"

__all__ = [
    "Circuit", "Deck", "ParseError", "ElaborationError", "NetlistError",
    "elaborate", "format_deck", "format_value", "parse_deck", "parse_probe",
    "parse_value",
    "THERMAL_VOLTAGE", "NonIdealParams", "cccii_input_resistance",
    "expand_macros", "ota_gm",
    "SingularMatrix", "Solution", "SolverError", "UnknownProbe",
    "branch_currents", "build_system", "lu_solve",
    "InsufficientData", "NoAcSource", "SweepSpec", "TranSpec", "Waveform",
    "measure_bandwidth", "measure_gain", "run_ac", "run_op", "run_tran",
    "__version__",
]
