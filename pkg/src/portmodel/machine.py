"""Declarative machine models: loading, validation and queries.

Model file grammar (UTF-8, line oriented)::

    # comment                       (also allowed after a value)
    [machine]                       exactly one, first section
    key = value
    [instruction]                   repeated, one per instruction form
    form    = <mnemonic> <class>,<class>,...
    uops    = {P0|P1}:1 {L0}:2.5    port alternatives, occupancy after ':'
    latency = <int>
    flops   = <int>                 optional, DP flops per instruction
    notes   = <text>                optional

``[machine]`` keys: ``name``, ``dialect``, ``ports`` (whitespace separated),
``issue_width``, ``simd_bytes``, ``load_units`` / ``store_units`` (``N x B``),
``cores_per_chip``, ``numa_domains``, ``base_freq``, ``max_freq``
(Hz, ``GHz``/``MHz`` suffix allowed), ``mem_bandwidth`` (B/s, ``GB/s``
allowed), ``freq.<vector class> = cores:freq ...``, and optionally
``description``, ``store_forward_latency``, ``wa_standard``, ``wa_nt``.
Unknown keys are rejected.
"""
from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import expectations
from .asm import format_form, parse_form
from .scheduler import solve_uops
from .wa import WAError, parse_mode

VECTOR_CLASSES = ("scalar", "narrow-vector", "wide-vector-512")
SHIPPED_MODELS = ("gcs", "spr", "genoa")
MODEL_DIR = Path(__file__).parent / "models"

_MACHINE_REQUIRED = ("name", "dialect", "ports", "issue_width", "simd_bytes", "load_units",
                     "store_units", "cores_per_chip", "base_freq", "max_freq", "mem_bandwidth")
_MACHINE_OPTIONAL = ("description", "numa_domains", "store_forward_latency", "wa_standard",
                     "wa_nt")
_INSTR_KEYS = ("form", "uops", "latency", "flops", "notes")


class ModelError(Exception):
    """Invariant violation in a machine model."""

    def __init__(self, msg, field_name=None):
        self.field = field_name
        super().__init__(f"{field_name}: {msg}" if field_name else msg)


class ModelParseError(ModelError):
    def __init__(self, msg, line=None, path=None):
        self.line = line
        where = f"{path or '<model>'}:{line}: " if line is not None else ""
        Exception.__init__(self, where + msg)
        self.field = None


class UnknownPort(ModelError):
    pass


class UnknownInstruction(LookupError):
    def __init__(self, form, suggestions=()):
        self.form = form
        self.suggestions = list(suggestions)
        msg = f"no descriptor for '{format_form(form)}'"
        if self.suggestions:
            msg += "; nearest: " + ", ".join(self.suggestions)
        super().__init__(msg)


class AmbiguousForm(LookupError):
    pass


@dataclass(frozen=True)
class InstructionDescriptor:
    form: tuple  # (mnemonic, (class, ...))
    uops: tuple  # ((frozenset of ports, Fraction occupancy), ...)
    latency: int
    flops: int = 0
    notes: str = ""

    @property
    def mnemonic(self):
        return self.form[0]

    def reciprocal_throughput(self):
        """Cycles per instruction when the instruction runs alone."""
        return solve_uops(self.uops)[0]


@dataclass(frozen=True)
class FrequencyCurve:
    points: tuple  # ((active_cores, Hz), ...) sorted by cores

    def at(self, cores):
        pts = self.points
        if cores <= pts[0][0]:
            return pts[0][1]
        if cores >= pts[-1][0]:
            return pts[-1][1]
        for (c0, f0), (c1, f1) in zip(pts, pts[1:]):
            if c0 <= cores <= c1:
                if cores == c1:
                    return f1
                return f0 + (f1 - f0) * (cores - c0) / (c1 - c0)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class MachineModel:
    name: str
    dialect: str
    ports: tuple
    issue_width: int
    simd_bytes: int
    load_units: tuple  # (count, bytes per unit)
    store_units: tuple
    instructions: tuple
    freq_curves: dict  # vector class -> FrequencyCurve
    mem_bandwidth: float
    cores_per_chip: int
    base_freq: float
    max_freq: float
    numa_domains: int = 1
    store_forward_latency: int | None = None
    wa_standard: str = "full-wa"
    wa_nt: str = "nt-perfect"
    description: str = ""
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        index = {}
        for d in self.instructions:
            index.setdefault(d.form, []).append(d)
        object.__setattr__(self, "_index", index)

    @property
    def cores_per_domain(self):
        return self.cores_per_chip // self.numa_domains

    def descriptor(self, form):
        if isinstance(form, str):
            form = parse_form(form)
        found = self._index.get(form, [])
        if len(found) > 1:
            raise AmbiguousForm(f"{len(found)} descriptors for '{format_form(form)}'")
        if not found:
            raise UnknownInstruction(form, self._suggest(form))
        return found[0]

    def lookup(self, inst):
        """Descriptor for an instruction instance (exact form match)."""
        return self.descriptor(inst.form)

    def _suggest(self, form):
        same = sorted(format_form(f) for f in self._index if f[0] == form[0])
        if same:
            return same[:5]
        mnemonics = sorted({f[0] for f in self._index})
        return difflib.get_close_matches(form[0], mnemonics, n=5)


def lookup(model, instr):
    return model.lookup(instr)


# ---------------------------------------------------------------------------
# parsing

_UNITS = {"hz": 1, "khz": 10**3, "mhz": 10**6, "ghz": 10**9,
          "b/s": 1, "kb/s": 10**3, "mb/s": 10**6, "gb/s": 10**9, "tb/s": 10**12}


def _quantity(text, what):
    m = re.fullmatch(r"\s*([-+0-9.eE/]+)\s*([A-Za-z/]*)\s*", text)
    if not m:
        raise ValueError(f"malformed {what} {text!r}")
    value = Fraction(m.group(1))
    unit = m.group(2).lower()
    if unit:
        if unit not in _UNITS:
            raise ValueError(f"unknown unit {m.group(2)!r} in {what}")
        value *= _UNITS[unit]
    return value


def _positive_int(text, what):
    try:
        v = int(text)
    except ValueError:
        raise ValueError(f"{what} must be an integer, got {text!r}") from None
    if v <= 0:
        raise ValueError(f"{what} must be positive")
    return v


def _units(text, what):
    m = re.fullmatch(r"\s*(\d+)\s*[xX*]\s*(\d+)\s*", text)
    if not m:
        raise ValueError(f"{what} must look like 'N x BYTES', got {text!r}")
    return (int(m.group(1)), int(m.group(2)))


_UOP_RE = re.compile(r"\{([^}]*)\}\s*:\s*([0-9./]+)")


def parse_uops(text):
    text = text.strip()
    uops = []
    pos = 0
    for m in _UOP_RE.finditer(text):
        if text[pos:m.start()].strip():
            raise ValueError(f"unexpected text {text[pos:m.start()].strip()!r} in uops")
        ports = [p.strip() for p in m.group(1).split("|")]
        if any(not p for p in ports):
            raise ValueError(f"empty port name in {m.group(0)!r}")
        uops.append((frozenset(ports), Fraction(m.group(2))))
        pos = m.end()
    if text[pos:].strip():
        raise ValueError(f"unexpected text {text[pos:].strip()!r} in uops")
    return tuple(uops)


def format_uops(uops, port_order=None):
    order = {p: i for i, p in enumerate(port_order or ())}
    parts = []
    for ports, occ in uops:
        names = sorted(ports, key=lambda p: (order.get(p, len(order)), p))
        parts.append("{" + "|".join(names) + "}:" + str(occ))
    return " ".join(parts)


def _curve(text):
    points = []
    for tok in text.split():
        cores, _, freq = tok.partition(":")
        if not freq:
            raise ValueError(f"frequency point must be 'cores:freq', got {tok!r}")
        points.append((_positive_int(cores, "active cores"), float(_quantity(freq, "frequency"))))
    return points


def parse_model(text, path=None):
    """Parse model text into a validated :class:`MachineModel`."""
    section = None
    machine = {}
    machine_lines = {}
    instrs = []  # list of (header line, {key: (value, line)})
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line == "[machine]":
                if section is not None:
                    raise ModelParseError("[machine] must be the first and only machine section", no, path)
                section = "machine"
            elif line == "[instruction]":
                if section is None:
                    raise ModelParseError("[instruction] before [machine]", no, path)
                section = "instruction"
                instrs.append((no, {}))
            else:
                raise ModelParseError(f"unknown section {line}", no, path)
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ModelParseError(f"expected 'key = value', got {line!r}", no, path)
        if section is None:
            raise ModelParseError("key outside of a section", no, path)
        if section == "machine":
            if key not in _MACHINE_REQUIRED and key not in _MACHINE_OPTIONAL \
                    and not key.startswith("freq."):
                raise ModelParseError(f"unknown machine key {key!r}", no, path)
            if key in machine:
                raise ModelParseError(f"duplicate key {key!r}", no, path)
            machine[key] = value
            machine_lines[key] = no
        else:
            entry = instrs[-1][1]
            if key not in _INSTR_KEYS:
                raise ModelParseError(f"unknown instruction key {key!r}", no, path)
            if key in entry:
                raise ModelParseError(f"duplicate key {key!r}", no, path)
            entry[key] = (value, no)
    if section is None:
        raise ModelParseError("empty model file (no [machine] section)", 1 if not text else None, path)

    def at(key):
        return machine_lines.get(key)

    for key in _MACHINE_REQUIRED:
        if key not in machine:
            raise ModelParseError(f"missing machine key {key!r}", None, path)
    try:
        kw = dict(
            name=machine["name"],
            dialect=machine["dialect"],
            ports=tuple(machine["ports"].split()),
            issue_width=_positive_int(machine["issue_width"], "issue_width"),
            simd_bytes=_positive_int(machine["simd_bytes"], "simd_bytes"),
            load_units=_units(machine["load_units"], "load_units"),
            store_units=_units(machine["store_units"], "store_units"),
            cores_per_chip=_positive_int(machine["cores_per_chip"], "cores_per_chip"),
            base_freq=float(_quantity(machine["base_freq"], "base_freq")),
            max_freq=float(_quantity(machine["max_freq"], "max_freq")),
            mem_bandwidth=float(_quantity(machine["mem_bandwidth"], "mem_bandwidth")),
            description=machine.get("description", ""),
        )
        if "numa_domains" in machine:
            kw["numa_domains"] = _positive_int(machine["numa_domains"], "numa_domains")
        if "store_forward_latency" in machine:
            kw["store_forward_latency"] = int(machine["store_forward_latency"])
        for k in ("wa_standard", "wa_nt"):
            if k in machine:
                kw[k] = machine[k]
    except ValueError as exc:
        key = next((k for k in machine if k in str(exc)), None)
        raise ModelParseError(str(exc), at(key), path) from None

    curves = {}
    for key, value in machine.items():
        if key.startswith("freq."):
            vclass = key[len("freq."):]
            if vclass not in VECTOR_CLASSES:
                raise ModelParseError(f"unknown vector class {vclass!r}", at(key), path)
            try:
                curves[vclass] = FrequencyCurve(tuple(_curve(value)))
            except ValueError as exc:
                raise ModelParseError(str(exc), at(key), path) from None
    kw["freq_curves"] = curves

    descriptors = []
    seen = {}
    for header, entry in instrs:
        for key in ("form", "uops", "latency"):
            if key not in entry:
                raise ModelParseError(f"instruction missing {key!r}", header, path)
        try:
            form = parse_form(entry["form"][0])
        except ValueError as exc:
            raise ModelParseError(str(exc), entry["form"][1], path) from None
        if form in seen:
            raise ModelParseError(f"duplicate instruction form '{format_form(form)}' "
                                  f"(first defined at line {seen[form]})", entry["form"][1], path)
        seen[form] = entry["form"][1]
        try:
            uops = parse_uops(entry["uops"][0])
        except ValueError as exc:
            raise ModelParseError(str(exc), entry["uops"][1], path) from None
        try:
            latency = int(entry["latency"][0])
        except ValueError:
            raise ModelParseError("latency must be an integer", entry["latency"][1], path) from None
        flops = 0
        if "flops" in entry:
            try:
                flops = int(entry["flops"][0])
            except ValueError:
                raise ModelParseError("flops must be an integer", entry["flops"][1], path) from None
        notes = entry["notes"][0] if "notes" in entry else ""
        descriptors.append(InstructionDescriptor(form, uops, latency, flops, notes))
    kw["instructions"] = tuple(descriptors)
    model = MachineModel(**kw)
    check_invariants(model)
    return model


def check_invariants(model):
    """Raise :class:`ModelError` on the first violated model invariant."""
    if model.dialect not in ("aarch64", "x86-att"):
        raise ModelError(f"unknown dialect {model.dialect!r}", "dialect")
    if not model.ports:
        raise ModelError("no ports declared", "ports")
    if len(set(model.ports)) != len(model.ports):
        raise ModelError("duplicate port id", "ports")
    if model.base_freq <= 0 or model.max_freq < model.base_freq:
        raise ModelError("need 0 < base_freq <= max_freq", "max_freq")
    if model.mem_bandwidth <= 0:
        raise ModelError("must be positive", "mem_bandwidth")
    if model.cores_per_chip % model.numa_domains:
        raise ModelError("cores_per_chip not divisible by numa_domains", "numa_domains")
    if not model.freq_curves:
        raise ModelError("at least one frequency curve required", "freq")
    for vclass, curve in model.freq_curves.items():
        key = f"freq.{vclass}"
        if not curve.points:
            raise ModelError("empty frequency curve", key)
        cores = [c for c, _ in curve.points]
        if any(b <= a for a, b in zip(cores, cores[1:])):
            raise ModelError("active core counts must be strictly increasing", key)
        for _, f in curve.points:
            if not 0.5 * model.base_freq <= f <= model.max_freq:
                raise ModelError(f"frequency {f:g} Hz outside [0.5*base_freq, max_freq]", key)
    for key in ("wa_standard", "wa_nt"):
        value = getattr(model, key)
        if value in ("standard", "nt"):
            raise ModelError("must name a concrete write-allocate mode", key)
        try:
            parse_mode(value)
        except WAError as exc:
            raise ModelError(str(exc), key) from None
    declared = set(model.ports)
    forms = set()
    for d in model.instructions:
        name = format_form(d.form)
        if d.form in forms:
            raise ModelError(f"duplicate instruction form '{name}'", "instructions")
        forms.add(d.form)
        if not d.uops:
            raise ModelError(f"'{name}' has no µ-ops", "uops")
        for ports, occ in d.uops:
            unknown = sorted(set(ports) - declared)
            if unknown:
                raise UnknownPort(f"'{name}' references undeclared port(s) {', '.join(unknown)}", "uops")
            if occ <= 0:
                raise ModelError(f"'{name}' has non-positive occupancy {occ}", "uops")
            if occ.denominator != 1 and occ < 1:
                raise ModelError(f"'{name}' fractional occupancy {occ} must be >= 1", "uops")
        if d.latency < 0:
            raise ModelError(f"'{name}' has negative latency", "latency")
        if len(d.uops) > model.issue_width:
            raise ModelError(f"'{name}' has more µ-ops ({len(d.uops)}) than issue_width", "issue_width")


def load_model(path):
    """Load a model file; *path* may also be a shipped model name."""
    p = Path(path)
    if not p.exists() and str(path) in SHIPPED_MODELS:
        p = MODEL_DIR / f"{path}.mm"
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelParseError(f"cannot read model file: {exc.strerror}", None, str(path)) from None
    return parse_model(text, str(path))


def _fmt_hz(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def serialize(model):
    """Render *model* in the model file grammar (reparses to an equal model)."""
    out = ["[machine]", f"name = {model.name}"]
    if model.description:
        out.append(f"description = {model.description}")
    out += [
        f"dialect = {model.dialect}",
        f"ports = {' '.join(model.ports)}",
        f"issue_width = {model.issue_width}",
        f"simd_bytes = {model.simd_bytes}",
        f"load_units = {model.load_units[0]} x {model.load_units[1]}",
        f"store_units = {model.store_units[0]} x {model.store_units[1]}",
        f"cores_per_chip = {model.cores_per_chip}",
        f"numa_domains = {model.numa_domains}",
        f"base_freq = {_fmt_hz(model.base_freq)}",
        f"max_freq = {_fmt_hz(model.max_freq)}",
        f"mem_bandwidth = {_fmt_hz(model.mem_bandwidth)}",
    ]
    for vclass in VECTOR_CLASSES:
        if vclass in model.freq_curves:
            pts = " ".join(f"{c}:{_fmt_hz(f)}" for c, f in model.freq_curves[vclass].points)
            out.append(f"freq.{vclass} = {pts}")
    if model.store_forward_latency is not None:
        out.append(f"store_forward_latency = {model.store_forward_latency}")
    out.append(f"wa_standard = {model.wa_standard}")
    out.append(f"wa_nt = {model.wa_nt}")
    for d in model.instructions:
        out += ["", "[instruction]", f"form = {format_form(d.form)}",
                f"uops = {format_uops(d.uops, model.ports)}", f"latency = {d.latency}"]
        if d.flops:
            out.append(f"flops = {d.flops}")
        if d.notes:
            out.append(f"notes = {d.notes}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# queries

def sustained_frequency(model, vclass, active_cores):
    """Sustained clock (Hz) for *vclass* code on *active_cores* cores.

    Falls back to the next lower vector class when the model has no curve
    for *vclass*.
    """
    if vclass not in VECTOR_CLASSES:
        raise ValueError(f"unknown vector class {vclass!r}")
    if not 1 <= active_cores <= model.cores_per_chip:
        raise ValueError(f"active_cores must be in [1, {model.cores_per_chip}], got {active_cores}")
    for vc in reversed(VECTOR_CLASSES[:VECTOR_CLASSES.index(vclass) + 1]):
        if vc in model.freq_curves:
            return model.freq_curves[vc].at(active_cores)
    raise ModelError(f"no frequency curve for {vclass} or any lower class", "freq")


def peak_flops_per_cycle(model):
    """Max DP flops/cycle over fractional mixes of the model's FP instructions.

    Solves the LP: maximize sum(flops_d * x_d) with every µ-op of every
    instruction routed fractionally to its eligible ports, port loads <= 1
    and total µ-ops <= issue_width.
    """
    import numpy as np
    from scipy.optimize import linprog

    descs = [d for d in model.instructions if d.flops > 0]
    if not descs:
        return 0.0
    port_idx = {p: i for i, p in enumerate(model.ports)}
    n_x = len(descs)
    flow_vars = []  # (desc index, uop index, port)
    for di, d in enumerate(descs):
        for ui, (ports, _) in enumerate(d.uops):
            for p in sorted(ports):
                flow_vars.append((di, ui, p))
    n = n_x + len(flow_vars)
    c = np.zeros(n)
    c[:n_x] = [-float(d.flops) for d in descs]

    eq_rows, eq_keys = [], {}
    for di, d in enumerate(descs):
        for ui, (_, occ) in enumerate(d.uops):
            row = np.zeros(n)
            row[di] = -float(occ)
            eq_keys[(di, ui)] = len(eq_rows)
            eq_rows.append(row)
    ub_rows = [np.zeros(n) for _ in model.ports]
    issue = np.zeros(n)
    for di, d in enumerate(descs):
        issue[di] = len(d.uops)
    for k, (di, ui, p) in enumerate(flow_vars):
        eq_rows[eq_keys[(di, ui)]][n_x + k] = 1.0
        ub_rows[port_idx[p]][n_x + k] = 1.0
    a_ub = np.array(ub_rows + [issue])
    b_ub = np.array([1.0] * len(model.ports) + [float(model.issue_width)])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=np.array(eq_rows), b_eq=np.zeros(len(eq_rows)),
                  bounds=[(0, None)] * n, method="highs")
    if not res.success:
        raise RuntimeError(f"peak LP failed: {res.message}")
    return -res.fun


def theoretical_peak_flops(model, freq, cores):
    """Chip DP peak in flop/s at clock *freq* with *cores* active cores."""
    return peak_flops_per_cycle(model) * freq * cores


def validate_model(model):
    """Compare the model against published reference data; return diagnostics.

    Reciprocal throughput of every referenced descriptor is re-derived with
    the port scheduler.  Models without reference data only get structural
    checks.
    """
    diags = []
    core = expectations.CORES.get(model.name)
    if core is not None:
        if len(model.ports) != core.ports:
            diags.append(f"port count {len(model.ports)} != expected {core.ports}")
        if model.simd_bytes != core.simd_bytes:
            diags.append(f"simd_bytes {model.simd_bytes} != expected {core.simd_bytes}")
    for exp in expectations.INSTRUCTIONS.get(model.name, ()):
        try:
            d = model.descriptor(exp.form)
        except (UnknownInstruction, AmbiguousForm) as exc:
            diags.append(f"{exp.row}: {exc}")
            continue
        recip = d.reciprocal_throughput()
        tput = exp.work_per_instruction() / recip
        if tput != exp.throughput:
            diags.append(f"{exp.row} ({exp.form}): throughput {tput} {exp.unit}/cy "
                         f"!= expected {exp.throughput}")
        if d.latency != exp.latency:
            diags.append(f"{exp.row} ({exp.form}): latency {d.latency} cy "
                         f"!= expected {exp.latency}")
    return diags
