"""Validated domain types and unit handling shared by all modules.

Internal unit system is strict SI. Human-facing scenario files carry
unit-suffixed values that are converted once at the boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields


class ValidationError(ValueError):
    """Raised when a domain object violates one or more invariants."""


# Unit label -> (operation, integer scale). Division by an exact integer
# keeps every conversion single-rounded, so decimal literals round-trip.
_UNIT_SCALE = {
    "mm": ("div", 10**3),
    "cm/s": ("div", 10**2),
    "µs": ("div", 10**6),
    "us": ("div", 10**6),  # ASCII alias for µs
    "fJ": ("div", 10**15),
    "fW": ("div", 10**15),
    "pC": ("div", 10**12),
    "pF": ("div", 10**12),
    "ml": ("div", 10**6),
    "L": ("div", 10**3),
    "min": ("mul", 60),
    "h": ("mul", 3600),
}


def si_convert(value: float, from_unit: str) -> float:
    """Convert a value in the given unit to SI. Exact conversion factors."""
    try:
        op, scale = _UNIT_SCALE[from_unit]
    except KeyError:
        raise ValidationError(f"unknown unit label: {from_unit!r}") from None
    return value / scale if op == "div" else value * scale


def frame_time_from_bitrate(l_f: int, bitrate: float) -> float:
    """Frame transmission time t_f = L_f / R for a given link bitrate."""
    if l_f <= 0 or bitrate <= 0:
        raise ValidationError("l_f and bitrate must be positive")
    return l_f / bitrate


def _coerce_count(value, name: str, errors: list) -> int:
    # counts may arrive as integral floats from JSON / sweep grids
    if isinstance(value, float):
        if not value.is_integer():
            errors.append(f"{name} must be an integer, got {value}")
            return value
        value = int(value)
    if not isinstance(value, int):
        errors.append(f"{name} must be an integer, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class NetworkParams:
    """Network-level parameters of the flow-guided nano-network.

    n      count of nano-nodes
    T      mean round time through the circuit, s
    V_t    total fluid volume, m^3
    D      diameter of the nano-router vein, m
    r      communication range, m
    v      nano-node velocity inside the coverage zone, m/s
    t_f    frame transmission time, s
    f      charge frequency, active cycles per second, Hz
    eta    fraction of total flow through the bio-sensor branch
    k      frame storage duration in rounds
    """

    n: int = 10_000
    T: float = 60.0
    V_t: float = 0.005
    D: float = 0.006
    r: float = 0.001
    v: float = 0.109
    t_f: float = 6.4e-5
    f: float = 1.0
    eta: float = 0.1
    k: int = 2

    K_CAP = 10_000

    def __post_init__(self):
        errors = []
        object.__setattr__(self, "n", _coerce_count(self.n, "n", errors))
        object.__setattr__(self, "k", _coerce_count(self.k, "k", errors))
        if isinstance(self.n, int) and self.n < 1:
            errors.append(f"n must be >= 1, got {self.n}")
        for name in ("T", "V_t", "D", "r", "v", "t_f", "f"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and val > 0 and math.isfinite(val)):
                errors.append(f"{name} must be strictly positive, got {val}")
        if not (0.0 < self.eta <= 1.0):
            errors.append(f"eta must be in (0, 1], got {self.eta}")
        if isinstance(self.k, int):
            if self.k < 2:
                errors.append(f"k must be >= 2, got {self.k}")
            elif self.k > self.K_CAP:
                errors.append(f"k must be <= {self.K_CAP}, got {self.k}")
        # single transmission per crossing: the coverage pass (2r at speed v)
        # must fit inside one charge cycle
        if not errors and not (2.0 * self.r / self.v < 1.0 / self.f):
            errors.append(
                f"2r/v = {2 * self.r / self.v:.6g} s must be < 1/f = {1 / self.f:.6g} s"
            )
        if errors:
            raise ValidationError("; ".join(errors))


def validate(params: NetworkParams) -> NetworkParams:
    """Return params iff every invariant holds (construction already checks)."""
    if not isinstance(params, NetworkParams):
        raise ValidationError("expected NetworkParams")
    # frozen dataclass: re-running the constructor re-checks all invariants
    NetworkParams(**{f.name: getattr(params, f.name) for f in fields(params)})
    return params


@dataclass(frozen=True)
class VolumeSet:
    """Coverage, transmission and collision volumes with quadrature errors."""

    v_cv: float
    v_tx: float
    v_cx: float
    err_cv: float = 0.0
    err_tx: float = 0.0
    err_cx: float = 0.0

    def __post_init__(self):
        slack = max(self.err_cv + self.err_tx + self.err_cx, 1e-30)
        if not (-slack <= self.v_tx <= self.v_cv + slack <= self.v_cx + 2 * slack):
            raise ValidationError(
                f"volume nesting violated: v_tx={self.v_tx} v_cv={self.v_cv} v_cx={self.v_cx}"
            )


@dataclass(frozen=True)
class LinkProbabilities:
    """Per-round link probabilities and the stationary storage distribution."""

    p_tx: float
    p_cx: float
    p_rx: float
    p_frame: float
    p_empty: float
    p_s: float
    p_s_rnd: float
    pi: tuple
    clamped: bool = False  # set when T*f*p_tx(...) exceeded 1 and was clamped

    def __post_init__(self):
        errors = []
        for name in ("p_tx", "p_cx", "p_rx", "p_frame", "p_empty", "p_s", "p_s_rnd"):
            val = getattr(self, name)
            if not (-1e-12 <= val <= 1.0 + 1e-12):
                errors.append(f"{name} = {val} outside [0, 1]")
        if abs(sum(self.pi) - 1.0) > 1e-12:
            errors.append(f"sum(pi) = {sum(self.pi)} != 1 within 1e-12")
        if abs(self.p_empty - self.pi[0]) > 1e-12:
            errors.append("p_empty != pi[0]")
        if abs(self.p_frame - (1.0 - self.p_empty)) > 1e-12:
            errors.append("p_frame != 1 - p_empty")
        if self.p_tx > self.p_cx + 1e-12:
            errors.append(f"p_tx = {self.p_tx} > p_cx = {self.p_cx}")
        if errors:
            raise ValidationError("; ".join(errors))


@dataclass(frozen=True)
class AnalyticMetrics:
    """Closed-form performance metrics for one parameter point."""

    th_two_round: float
    th_raw: float
    th_eff: float
    qod: float
    tau_av: float
    m: int

    def __post_init__(self):
        errors = []
        for name in ("th_two_round", "th_raw", "th_eff"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if not (-1e-12 <= self.qod <= 1.0 + 1e-12):
            errors.append(f"qod = {self.qod} outside [0, 1]")
        if self.m < 0:
            errors.append("m must be >= 0")
        if errors:
            raise ValidationError("; ".join(errors))


@dataclass(frozen=True)
class EnergyParams:
    """Nano-node energy subsystem constants.

    L_f      frame length, bits
    W        pulse probability per bit (worst case 1)
    E_p      pulse energy, J
    P_bit    memory retention power per bit, W
    delta_q  charge per compress-release cycle, C
    V_g      generated voltage, V
    C        nano-capacitor capacitance, F
    f_ng     compress-release (heartbeat) frequency, Hz
    """

    L_f: int = 64
    W: float = 1.0
    E_p: float = 1e-16
    P_bit: float = 2.4e-15
    delta_q: float = 6e-12
    V_g: float = 0.2
    C: float = 1e-11
    f_ng: float = 1.0

    def __post_init__(self):
        errors = []
        object.__setattr__(self, "L_f", _coerce_count(self.L_f, "L_f", errors))
        if isinstance(self.L_f, int) and self.L_f <= 0:
            errors.append("L_f must be positive")
        if not (0.0 <= self.W <= 1.0):
            errors.append(f"W must be in [0, 1], got {self.W}")
        for name in ("delta_q", "V_g", "C", "f_ng"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be strictly positive")
        # zero-consumption limits are meaningful (grid-maximum example)
        for name in ("E_p", "P_bit"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if errors:
            raise ValidationError("; ".join(errors))

    @property
    def e_max(self) -> float:
        """Capacitor energy capacity C*V_g^2/2 in joules."""
        return 0.5 * self.C * self.V_g * self.V_g


@dataclass(frozen=True)
class EnergyState:
    """Instantaneous nano-capacitor state."""

    e_nc: float
    time: float


@dataclass(frozen=True)
class ApplicationSpec:
    """A monitoring application: where it senses and what it requires.

    Exactly one requirement variant must be given: a deadline
    (tau_target, qod_target) or a throughput (throughput_target,
    tau_av_target).
    """

    name: str
    eta: float
    tau_target: float | None = None
    qod_target: float | None = None
    throughput_target: float | None = None
    tau_av_target: float | None = None

    def __post_init__(self):
        errors = []
        if not (0.0 < self.eta <= 1.0):
            errors.append(f"eta must be in (0, 1], got {self.eta}")
        deadline = self.tau_target is not None or self.qod_target is not None
        through = self.throughput_target is not None or self.tau_av_target is not None
        if deadline and through:
            errors.append("requirement must be deadline or throughput, not both")
        elif deadline:
            if self.tau_target is None or self.qod_target is None:
                errors.append("deadline variant needs tau_target and qod_target")
            else:
                if self.tau_target <= 0:
                    errors.append("tau_target must be positive")
                if not (0.0 <= self.qod_target < 1.0):
                    errors.append(f"qod_target must be in [0, 1), got {self.qod_target}")
        elif through:
            if self.throughput_target is None or self.tau_av_target is None:
                errors.append("throughput variant needs throughput_target and tau_av_target")
            elif self.throughput_target <= 0 or self.tau_av_target <= 0:
                errors.append("throughput_target and tau_av_target must be positive")
        else:
            errors.append("no requirement variant present")
        if errors:
            raise ValidationError("; ".join(errors))

    @property
    def is_deadline(self) -> bool:
        return self.tau_target is not None


@dataclass(frozen=True)
class DimensioningResult:
    """Outcome of dimensioning one application."""

    k_opt: int
    n_min: int
    throughput: float  # frames/second at (n_min, k_opt)
    tau_av: float  # seconds
    m_target: int | None = None  # absent for the throughput variant
    per_k: tuple = field(default=(), compare=False)  # diagnostic (k, n_min, tau_av, metric) rows

    def __post_init__(self):
        errors = []
        if self.n_min < 1:
            errors.append("n_min must be >= 1")
        if self.m_target is not None and not (2 <= self.k_opt <= self.m_target):
            errors.append(f"k_opt = {self.k_opt} outside [2, m_target = {self.m_target}]")
        if errors:
            raise ValidationError("; ".join(errors))


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario file: network params plus optional sections."""

    network: NetworkParams
    energy: EnergyParams | None = None
    application: ApplicationSpec | None = None
    circuit: dict | None = None
    sim: dict | None = None


def parse_quantity(value, context: str):
    """Read a scenario leaf: bare number (SI) or {"value": x, "unit": u}."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return value
    if isinstance(value, dict) and "value" in value:
        raw = value["value"]
        if not isinstance(raw, (int, float)) or isinstance(raw, bool):
            raise ValidationError(f"{context}: value must be a number")
        unit = value.get("unit")
        return si_convert(raw, unit) if unit else raw
    raise ValidationError(f"{context}: expected a number or {{value, unit}} object")


_NETWORK_KEYS = ("n", "T", "V_t", "D", "r", "v", "t_f", "f", "eta", "k")
_ENERGY_KEYS = ("L_f", "W", "E_p", "P_bit", "delta_q", "V_g", "C", "f_ng")
_APP_KEYS = ("eta", "tau_target", "qod_target", "throughput_target", "tau_av_target")


def load_scenario(path) -> Scenario:
    """Load and validate a scenario JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("scenario root must be a JSON object")

    net_doc = dict(doc.get("network", {}))
    kwargs = {}
    for key in _NETWORK_KEYS:
        if key in net_doc:
            kwargs[key] = parse_quantity(net_doc.pop(key), f"network.{key}")
    # bitrate is a convenience: derives t_f when t_f is not given directly
    bitrate = parse_quantity(net_doc.pop("bitrate", None), "network.bitrate") if "bitrate" in net_doc else None
    l_f = parse_quantity(net_doc.pop("l_f", None), "network.l_f") if "l_f" in net_doc else None
    if net_doc:
        raise ValidationError(f"unknown network fields: {sorted(net_doc)}")
    if "t_f" not in kwargs and bitrate is not None:
        kwargs["t_f"] = frame_time_from_bitrate(int(l_f or 64), bitrate)
    network = NetworkParams(**kwargs)

    energy = None
    if "energy" in doc:
        e_doc = dict(doc["energy"])
        e_kwargs = {k: parse_quantity(e_doc.pop(k), f"energy.{k}") for k in _ENERGY_KEYS if k in e_doc}
        if e_doc:
            raise ValidationError(f"unknown energy fields: {sorted(e_doc)}")
        energy = EnergyParams(**e_kwargs)

    application = None
    if "application" in doc:
        a_doc = dict(doc["application"])
        name = a_doc.pop("name", "unnamed")
        a_kwargs = {k: parse_quantity(a_doc.pop(k), f"application.{k}") for k in _APP_KEYS if k in a_doc}
        if a_doc:
            raise ValidationError(f"unknown application fields: {sorted(a_doc)}")
        application = ApplicationSpec(name=name, **a_kwargs)

    circuit = doc.get("circuit")
    sim = doc.get("sim")
    for section, val in (("circuit", circuit), ("sim", sim)):
        if val is not None and not isinstance(val, dict):
            raise ValidationError(f"{section} section must be an object")
    known = {"network", "energy", "application", "circuit", "sim"}
    extra = set(doc) - known
    if extra:
        raise ValidationError(f"unknown scenario sections: {sorted(extra)}")
    return Scenario(network=network, energy=energy, application=application,
                    circuit=circuit, sim=sim)
