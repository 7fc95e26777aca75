"""Assembly frontend: marked-region extraction, parsing and normalization.

Two dialects are understood, AArch64 (A64 + SVE subset) and x86-64 in AT&T
syntax.  Parsing produces operands in source order; :func:`normalize` then
moves destinations last, resolves register aliases and derives the register
read/write sets used by the dependency analysis.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

DIALECTS = ("aarch64", "x86-att")

# SVE vector length of the modelled AArch64 core (Neoverse V2: 128 bit)
SVE_BYTES = 16

_MARK_RE = re.compile(r"^\s*(?:#|//)\s*LOOP-(BEGIN|END)\s*$")
_COMMENT_LINE_RE = re.compile(r"^\s*(?:#|//|;)")


class AsmError(Exception):
    """Base class for frontend errors."""


class MissingMarker(AsmError):
    pass


class MultipleMarkers(AsmError):
    pass


class EmptyRegion(AsmError):
    pass


class AsmSyntaxError(AsmError):
    def __init__(self, msg, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + msg)


@dataclass(frozen=True)
class Operand:
    """One instruction operand.

    ``text`` keeps the source spelling so listings can be reprinted.  For
    registers ``reg`` is the register identity used for dependencies (the
    spelled name before normalization, the alias-resolved name after).
    ``cls`` is the operand class string used in instruction forms.
    """

    kind: str  # register | immediate | memory | predicate | label
    text: str
    cls: str
    width_bytes: int = 8
    reg: str | None = None
    reg_class: str | None = None  # scalar-int | scalar-fp | vector | predicate
    base: str | None = None
    index: str | None = None
    scale: int = 1
    displacement: str = ""
    writeback: bool = False
    in_list: bool = False

    @property
    def address_key(self):
        return (self.base, self.index, self.scale, self.displacement)

    def address_regs(self):
        return tuple(r for r in (self.base, self.index) if r is not None)


@dataclass(frozen=True)
class InstructionInstance:
    mnemonic: str
    operands: tuple[Operand, ...]
    source_line: int = field(default=0, compare=False)
    n_dest: int = 0
    reads: tuple[str, ...] = ()
    writes: tuple[str, ...] = ()

    @property
    def form(self):
        return (self.mnemonic, tuple(op.cls for op in self.operands))

    @property
    def form_str(self):
        return format_form(self.form)

    def memory_operands(self):
        return [op for op in self.operands if op.kind == "memory"]

    def is_store(self):
        """True if a memory operand is written."""
        return any(op.kind == "memory" for op in self.dest_operands()) or (
            self.n_dest == 0 and self.mnemonic in _STORE_LIKE and bool(self.memory_operands())
        )

    def is_load(self):
        return bool(self.memory_operands()) and not self.is_store() and self.mnemonic not in _NO_MEM_ACCESS

    def dest_operands(self):
        if self.n_dest == 0:
            return ()
        return self.operands[-self.n_dest:]

    def max_register_width(self):
        widths = [op.width_bytes for op in self.operands if op.kind in ("register", "predicate")
                  and op.reg_class == "vector"]
        return max(widths, default=0)

    def vector_width(self):
        """Bytes of vector data processed: like :meth:`max_register_width`, but
        x86 scalar ops on xmm count as 8 and register-zeroing idioms as 0."""
        width = self.max_register_width()
        if width == 16 and self.mnemonic.endswith(("sd", "ss")):
            return 8 if self.mnemonic.endswith("sd") else 4
        regs = [op.reg for op in self.operands if op.kind == "register"]
        if len(regs) == len(self.operands) >= 2 and len(set(regs)) == 1 \
                and self.mnemonic in _X86_ZERO_IDIOMS | {"eor", "movi"}:
            return 0
        return width


@dataclass(frozen=True)
class KernelIR:
    instructions: tuple[InstructionInstance, ...]
    dialect: str
    back_branch: tuple[str, str] | None = None  # (mnemonic, target label)
    normalized: bool = False

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)


def format_form(form):
    mnemonic, classes = form
    return f"{mnemonic} {','.join(classes)}" if classes else mnemonic


def parse_form(text):
    """Inverse of :func:`format_form`: ``"fmla p,zd,zd,zd"`` -> form tuple."""
    parts = text.strip().split(None, 1)
    if not parts:
        raise ValueError("empty instruction form")
    classes = tuple(c.strip() for c in parts[1].split(",")) if len(parts) > 1 else ()
    if any(not c for c in classes):
        raise ValueError(f"malformed instruction form {text!r}")
    return (parts[0].lower(), classes)


# ---------------------------------------------------------------------------
# marked region

def extract_marked_region(text):
    """Return the lines strictly between ``LOOP-BEGIN`` and ``LOOP-END``.

    Blank lines and pure comment lines are dropped.  Each returned entry is a
    ``(line_number, line)`` pair so later errors can point at the listing.
    """
    begins, ends = [], []
    lines = text.splitlines()
    for no, line in enumerate(lines, start=1):
        m = _MARK_RE.match(line)
        if m:
            (begins if m.group(1) == "BEGIN" else ends).append(no)
    if len(begins) > 1 or len(ends) > 1:
        raise MultipleMarkers(f"expected one LOOP-BEGIN/LOOP-END pair, found {len(begins)}/{len(ends)}")
    if not begins or not ends:
        raise MissingMarker("LOOP-BEGIN or LOOP-END marker missing")
    if ends[0] < begins[0]:
        raise MissingMarker("LOOP-END precedes LOOP-BEGIN")
    region = []
    for no in range(begins[0] + 1, ends[0]):
        line = lines[no - 1]
        if not line.strip() or _COMMENT_LINE_RE.match(line):
            continue
        region.append((no, line))
    if not region:
        raise EmptyRegion("no lines between loop markers")
    return region


# ---------------------------------------------------------------------------
# shared tokenizing helpers

def _split_operands(text, line_no):
    """Split on top-level commas (not inside (), [] or {})."""
    parts, depth, cur = [], 0, []
    for col, ch in enumerate(text, start=1):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
            if depth < 0:
                raise AsmSyntaxError(f"unbalanced {ch!r}", line_no, col)
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise AsmSyntaxError("unbalanced brackets", line_no)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    if any(not p for p in parts):
        raise AsmSyntaxError("empty operand", line_no)
    return parts


def _strip_comment(line, dialect):
    if dialect == "aarch64":
        line = line.split("//", 1)[0]
    else:
        line = line.split("#", 1)[0]
    return line.split(";", 1)[0].strip()


def _is_label_or_directive(stmt):
    return stmt.endswith(":") or stmt.startswith(".") and not stmt[1:2].isdigit()


# ---------------------------------------------------------------------------
# AArch64

_A64_GPR = re.compile(r"^(x|w)(\d+|zr)$|^(sp|wsp|xzr|wzr)$")
_A64_FP = re.compile(r"^([bhsdq])(\d+)$")
_A64_NEON = re.compile(r"^v(\d+)\.(\d*)([bhsd])$")
_A64_NEON_BARE = re.compile(r"^v(\d+)$")
_A64_SVE = re.compile(r"^z(\d+)(?:\.([bhsdq]))?$")
_A64_PRED = re.compile(r"^p(\d+)(?:\.([bhsd]))?(?:/([mz]))?$")
_A64_SHIFT = re.compile(r"^(lsl|lsr|asr|ror|uxtw|sxtw|uxtx|sxtx|mul)\s+(#?\S+)$")
_FP_WIDTH = {"b": 1, "h": 2, "s": 4, "d": 8, "q": 16}

_A64_BRANCHES = {"b", "br", "cbz", "cbnz", "tbz", "tbnz", "ret", "bl"}


def _a64_is_branch(mnemonic):
    return mnemonic in _A64_BRANCHES or mnemonic.startswith("b.")


def _a64_register(tok):
    t = tok.lower()
    m = _A64_GPR.match(t)
    if m:
        if t in ("sp", "xzr"):
            return Operand("register", tok, "x", 8, t, "scalar-int")
        if t in ("wsp", "wzr"):
            return Operand("register", tok, "w", 4, t, "scalar-int")
        cls = m.group(1)
        return Operand("register", tok, cls, 8 if cls == "x" else 4, t, "scalar-int")
    m = _A64_FP.match(t)
    if m:
        cls = m.group(1)
        rc = "vector" if cls == "q" else "scalar-fp"
        return Operand("register", tok, cls, _FP_WIDTH[cls], t, rc)
    m = _A64_NEON.match(t)
    if m:
        lanes, size = m.group(2), m.group(3)
        width = int(lanes) * _FP_WIDTH[size] if lanes else _FP_WIDTH[size]
        return Operand("register", tok, f"v{lanes}{size}", width, t, "vector")
    m = _A64_NEON_BARE.match(t)
    if m:
        return Operand("register", tok, "v", 16, t, "vector")
    m = _A64_SVE.match(t)
    if m:
        return Operand("register", tok, "z" + (m.group(2) or ""), SVE_BYTES, t, "vector")
    m = _A64_PRED.match(t)
    if m:
        return Operand("predicate", tok, "p", SVE_BYTES // 8, f"p{m.group(1)}", "predicate")
    return None


def _a64_memory(tok, line_no):
    inner = tok.strip()
    writeback = inner.endswith("!")
    if writeback:
        inner = inner[:-1].rstrip()
    if not (inner.startswith("[") and inner.endswith("]")):
        raise AsmSyntaxError(f"malformed memory operand {tok!r}", line_no)
    fields = [f.strip() for f in inner[1:-1].split(",")]
    base_op = _a64_register(fields[0])
    if base_op is None:
        raise AsmSyntaxError(f"bad base register in {tok!r}", line_no)
    base, index, scale, disp, cls = base_op.reg, None, 1, "", "m"
    for f in fields[1:]:
        if f.startswith("#"):
            disp = f
            continue
        sm = _A64_SHIFT.match(f.lower())
        if sm:
            if sm.group(1) == "lsl":
                scale = 1 << int(sm.group(2).lstrip("#"), 0)
            elif sm.group(1) == "mul":
                disp += ",mul " + sm.group(2)
            else:
                disp += "," + f.lower()
            continue
        reg = _a64_register(f)
        if reg is None:
            raise AsmSyntaxError(f"bad index in memory operand {tok!r}", line_no)
        index = reg.reg
        if reg.reg_class == "vector":
            cls = "mv"
    return Operand("memory", tok, cls, 8, None, None, base, index, scale, disp, writeback)


def _a64_operand(tok, line_no):
    t = tok.strip()
    if t.startswith("["):
        return [_a64_memory(t, line_no)]
    if t.startswith("{") and t.endswith("}"):
        body = t[1:-1].strip()
        regs = []
        if "-" in body and "," not in body:
            # {z0.d-z1.d} style ranges: expand endpoints only
            names = [b.strip() for b in body.split("-")]
        else:
            names = [b.strip() for b in body.split(",")]
        for name in names:
            r = _a64_register(name)
            if r is None:
                raise AsmSyntaxError(f"bad register list {t!r}", line_no)
            regs.append(replace(r, in_list=True))
        return regs
    if t.startswith("#"):
        return [Operand("immediate", t, "i")]
    sm = _A64_SHIFT.match(t.lower())
    if sm:
        return [Operand("immediate", t, "sh")]
    reg = _a64_register(t)
    if reg is not None:
        return [reg]
    if re.match(r"^[.\w$]+$", t):
        return [Operand("label", t, "l")]
    raise AsmSyntaxError(f"cannot parse operand {t!r}", line_no)


def _parse_a64(stmt, line_no):
    parts = stmt.split(None, 1)
    mnemonic = parts[0].lower()
    operands = []
    if len(parts) > 1:
        for tok in _split_operands(parts[1], line_no):
            # post-index "[x1], #8" folds into the preceding memory operand
            if tok.startswith("#") and operands and operands[-1].kind == "memory" \
                    and not operands[-1].writeback:
                operands[-1] = replace(operands[-1], writeback=True,
                                       displacement="post" + tok,
                                       text=operands[-1].text + ", " + tok)
                continue
            operands.extend(_a64_operand(tok, line_no))
    return InstructionInstance(mnemonic, tuple(operands), line_no)


# ---------------------------------------------------------------------------
# x86-64 AT&T

_X86_GPR64 = {"rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp"} | {f"r{i}" for i in range(8, 16)}
_X86_ALIAS = {}
for _full, _names in {
    "rax": ("eax", "ax", "al", "ah"), "rbx": ("ebx", "bx", "bl", "bh"),
    "rcx": ("ecx", "cx", "cl", "ch"), "rdx": ("edx", "dx", "dl", "dh"),
    "rsi": ("esi", "si", "sil"), "rdi": ("edi", "di", "dil"),
    "rbp": ("ebp", "bp", "bpl"), "rsp": ("esp", "sp", "spl"),
}.items():
    for _w, _n in zip((4, 2, 1, 1), _names):
        _X86_ALIAS[_n] = (_full, _w)
for _i in range(8, 16):
    _X86_ALIAS[f"r{_i}d"] = (f"r{_i}", 4)
    _X86_ALIAS[f"r{_i}w"] = (f"r{_i}", 2)
    _X86_ALIAS[f"r{_i}b"] = (f"r{_i}", 1)
_X86_GPR_CLS = {8: "r64", 4: "r32", 2: "r16", 1: "r8"}
_X86_VEC = re.compile(r"^([xyz])mm(\d+)$")
_X86_VEC_WIDTH = {"x": 16, "y": 32, "z": 64}
_X86_MEM = re.compile(
    r"^(?P<seg>%\w+:)?(?P<disp>[^(]*)\((?P<base>%\w+)?(?:,\s*(?P<index>%\w+))?(?:,\s*(?P<scale>\d+))?\)$"
)

# AT&T size suffixes are dropped from these integer mnemonics
_X86_SUFFIXED = {
    "add", "sub", "inc", "dec", "cmp", "mov", "lea", "xor", "and", "or", "test",
    "shl", "shr", "sar", "sal", "imul", "neg", "not", "adc", "sbb", "movs", "movz",
}


def _x86_mnemonic(raw):
    m = raw.lower()
    if m[-1:] in ("q", "l", "w", "b") and m[:-1] in _X86_SUFFIXED:
        return m[:-1]
    return m


def _x86_register(tok):
    name = tok.lower().lstrip("%")
    if name in _X86_GPR64:
        return Operand("register", tok, "r64", 8, name, "scalar-int")
    if name in _X86_ALIAS:
        _, w = _X86_ALIAS[name]
        return Operand("register", tok, _X86_GPR_CLS[w], w, name, "scalar-int")
    m = _X86_VEC.match(name)
    if m:
        w = _X86_VEC_WIDTH[m.group(1)]
        return Operand("register", tok, f"{m.group(1)}mm", w, name, "vector")
    if re.match(r"^k[0-7]$", name):
        return Operand("predicate", tok, "k", 8, name, "predicate")
    if name == "rip":
        return Operand("register", tok, "r64", 8, "rip", "scalar-int")
    return None


def _x86_operand(tok, line_no):
    t = tok.strip()
    # AVX-512 decorations: %zmm0{%k1}{z}, (%rax){1to8}
    decorations = re.findall(r"\{([^}]*)\}", t)
    core = re.sub(r"\s*\{[^}]*\}", "", t).strip()
    ops = []
    if core.startswith("$"):
        ops.append(Operand("immediate", t, "i"))
    elif core.startswith("%") and "(" not in core:
        reg = _x86_register(core)
        if reg is None:
            raise AsmSyntaxError(f"unknown register {core!r}", line_no)
        ops.append(replace(reg, text=core))
    elif "(" in core:
        m = _X86_MEM.match(core)
        if not m:
            raise AsmSyntaxError(f"malformed memory operand {t!r}", line_no)
        base = index = None
        cls = "m"
        if m.group("base"):
            b = _x86_register(m.group("base"))
            if b is None:
                raise AsmSyntaxError(f"bad base register in {t!r}", line_no)
            base = b.reg
        if m.group("index"):
            ix = _x86_register(m.group("index"))
            if ix is None:
                raise AsmSyntaxError(f"bad index register in {t!r}", line_no)
            index = ix.reg
            if ix.reg_class == "vector":
                cls = "mv"
        scale = int(m.group("scale") or 1)
        disp = (m.group("seg") or "") + m.group("disp").strip()
        ops.append(Operand("memory", core, cls, 8, None, None, base, index, scale, disp))
    elif re.match(r"^[.\w$]+$", core):
        ops.append(Operand("label", t, "l"))
    else:
        raise AsmSyntaxError(f"cannot parse operand {t!r}", line_no)
    for dec in decorations:
        d = dec.strip().lower()
        if d.startswith("%k"):
            ops.append(Operand("predicate", "%" + d.lstrip("%"), "k", 8, d.lstrip("%"), "predicate"))
        elif d == "z" or d.startswith("1to"):
            ops[0] = replace(ops[0], text=ops[0].text + "{" + d + "}")
            if ops[0].kind == "memory":
                ops[0] = replace(ops[0], displacement=ops[0].displacement + "{" + d + "}")
        else:
            raise AsmSyntaxError(f"unknown operand decoration {{{dec}}}", line_no)
    # mask goes before the register it decorates so the destination stays last
    if len(ops) > 1:
        ops = ops[1:] + ops[:1]
    return ops


def _parse_x86(stmt, line_no):
    parts = stmt.split(None, 1)
    mnemonic = _x86_mnemonic(parts[0])
    operands = []
    if len(parts) > 1:
        for tok in _split_operands(parts[1], line_no):
            operands.extend(_x86_operand(tok, line_no))
    return InstructionInstance(mnemonic, tuple(operands), line_no)


def _x86_is_branch(mnemonic):
    return mnemonic.startswith("j") or mnemonic in ("call", "ret", "loop")


# ---------------------------------------------------------------------------
# parse / normalize / print

def parse_kernel(lines, dialect):
    """Parse extracted region lines into a (raw, source-ordered) KernelIR.

    *lines* may be plain strings or ``(line_number, text)`` pairs as returned by
    :func:`extract_marked_region`.  Labels and directives are skipped; a
    trailing branch is taken as the loop back-edge and kept as metadata.
    """
    if dialect not in DIALECTS:
        raise ValueError(f"unknown dialect {dialect!r}, expected one of {DIALECTS}")
    parse = _parse_a64 if dialect == "aarch64" else _parse_x86
    is_branch = _a64_is_branch if dialect == "aarch64" else _x86_is_branch
    insts = []
    for i, item in enumerate(lines):
        no, line = item if isinstance(item, tuple) else (i + 1, item)
        stmt = _strip_comment(line, dialect)
        # "label: instr" on one line
        while True:
            m = re.match(r"^([.\w$]+):\s*(.*)$", stmt)
            if not m:
                break
            stmt = m.group(2).strip()
        if not stmt or _is_label_or_directive(stmt):
            continue
        try:
            insts.append(parse(stmt, no))
        except AsmSyntaxError:
            raise
        except (ValueError, IndexError) as exc:
            raise AsmSyntaxError(str(exc), no) from exc
    back_branch = None
    if insts and is_branch(insts[-1].mnemonic):
        last = insts.pop()
        labels = [op.text for op in last.operands if op.kind == "label"]
        back_branch = (last.mnemonic, labels[0] if labels else "")
    return KernelIR(tuple(insts), dialect, back_branch)


def parse_listing(text, dialect):
    """Extract the marked region of *text* and return the normalized kernel."""
    return normalize(parse_kernel(extract_marked_region(text), dialect))


def guess_dialect(text):
    if re.search(r"%[xyz]mm\d|%r[a-z0-9]+|\(%", text):
        return "x86-att"
    return "aarch64"


# register identity ----------------------------------------------------------

def _a64_canonical(name):
    if name is None:
        return None
    m = re.match(r"^[wx](\d+)$", name)
    if m:
        return "x" + m.group(1)
    if name in ("xzr", "wzr"):
        return None  # zero register carries no dependency
    if name in ("sp", "wsp"):
        return "sp"
    m = re.match(r"^(?:[bhsdqvz])(\d+)(?:\..*)?$", name)
    if m:
        return "z" + m.group(1)  # SIMD/FP and SVE registers overlay
    m = re.match(r"^p(\d+)", name)
    if m:
        return "p" + m.group(1)
    return name


def _x86_canonical(name):
    if name is None:
        return None
    if name in _X86_ALIAS:
        return _X86_ALIAS[name][0]
    m = _X86_VEC.match(name)
    if m:
        return "zmm" + m.group(2)
    if name == "rip":
        return None
    return name


# per-mnemonic semantics -------------------------------------------------------

_STORE_LIKE = set()  # populated below
_NO_MEM_ACCESS = {"lea", "prfm", "prefetcht0", "prefetcht1", "prefetchnta"}

_A64_NO_DEST = {"cmp", "cmn", "tst", "fcmp", "fcmpe", "ccmp", "ccmn", "ptest", "prfm", "nop"}
_A64_FLAG_WRITERS = {"adds", "subs", "ands", "bics", "cmp", "cmn", "tst", "fcmp", "fcmpe",
                     "ccmp", "ccmn", "ptest", "whilelo", "whilelt", "whilele", "whilels",
                     "adcs", "sbcs", "negs"}
_A64_FLAG_READERS = {"csel", "csinc", "csinv", "csneg", "cset", "csetm", "cinc", "adc", "sbc",
                     "adcs", "sbcs", "ccmp", "ccmn", "fcsel"}
_A64_ACCUMULATE = {"fmla", "fmls", "fnmla", "fnmls", "mla", "mls", "fmad", "fmsb", "fnmad",
                   "fnmsb", "movk", "bfi", "bfxil", "sdot", "udot", "fmlal", "fmlal2"}


def _a64_semantics(inst):
    """Return (n_dest, dest_is_read, flags_written, flags_read)."""
    m = inst.mnemonic
    ops = inst.operands
    if m.startswith("st") or m.startswith("prf") or m in _A64_NO_DEST or _a64_is_branch(m):
        return 0, False, m in _A64_FLAG_WRITERS, m in _A64_FLAG_READERS or m.startswith("b.")
    if m in ("ldp", "ldnp", "ldpsw", "ldaxp", "ldxp"):
        n = 2
    elif ops and ops[0].in_list:
        n = sum(1 for op in ops if op.in_list)
    else:
        n = 1 if ops else 0
    merging = any(op.kind == "predicate" and op.text.lower().endswith("/m") for op in ops)
    rmw = m in _A64_ACCUMULATE or merging or (len(ops) == 1 and n == 1)
    return n, rmw, m in _A64_FLAG_WRITERS, m in _A64_FLAG_READERS


_X86_NO_DEST = {"cmp", "test", "ucomisd", "vucomisd", "comisd", "vcomisd", "ucomiss",
                "vucomiss", "nop", "prefetcht0", "prefetcht1", "prefetchnta", "vzeroupper"}
_X86_FLAG_WRITERS = {"add", "sub", "inc", "dec", "cmp", "test", "and", "or", "xor", "neg",
                     "shl", "shr", "sar", "sal", "imul", "adc", "sbb", "ucomisd", "vucomisd",
                     "comisd", "vcomisd"}
_X86_PURE_WRITE_PREFIX = ("mov", "vmov", "lea", "cvt", "vcvt", "vbroadcast", "movs", "movz",
                          "vpbroadcast", "pop", "set", "vextract", "vperm", "vshuf", "vunpck")
_X86_ZERO_IDIOMS = {"xor", "pxor", "vpxor", "xorpd", "vxorpd", "xorps", "vxorps", "sub",
                    "vpxord", "vpxorq", "vxorpd", "vsubpd"}


def _x86_semantics(inst):
    m = inst.mnemonic
    ops = inst.operands
    writes_flags = m in _X86_FLAG_WRITERS
    reads_flags = (m.startswith("j") and m != "jmp") or m.startswith("cmov") \
        or m.startswith("set") or m in ("adc", "sbb")
    if m in _X86_NO_DEST or _x86_is_branch(m) or not ops:
        return 0, False, writes_flags, reads_flags
    n = 1
    if m.startswith("vfm") or m.startswith("vfnm") or "gather" in m:
        rmw = True
    elif len(ops) == 1:
        rmw = True
    elif len(ops) == 2 and ops[-1].kind != "memory":
        rmw = not m.startswith(_X86_PURE_WRITE_PREFIX)
    else:
        rmw = False
    # merge-masking reads the destination as well
    if any(op.kind == "predicate" for op in ops) and not ops[-1].text.endswith("{z}") \
            and not m.startswith("vmov"):
        rmw = True
    return n, rmw, writes_flags, reads_flags


def _canon_operand(op, canon):
    if op.kind in ("register", "predicate"):
        return replace(op, reg=canon(op.reg))
    if op.kind == "memory":
        return replace(op, base=canon(op.base) if op.base else None,
                       index=canon(op.index) if op.index else None)
    return op


def _dedupe(seq):
    out = []
    for r in seq:
        if r is not None and r not in out:
            out.append(r)
    return tuple(out)


def normalize(ir):
    """Put destinations last, resolve register aliases, derive read/write sets.

    Idempotent: a normalized kernel is returned unchanged.
    """
    if ir.normalized:
        return ir
    a64 = ir.dialect == "aarch64"
    canon = _a64_canonical if a64 else _x86_canonical
    semantics = _a64_semantics if a64 else _x86_semantics
    flags = "nzcv" if a64 else "flags"
    out = []
    for inst in ir.instructions:
        n_dest, rmw, wflags, rflags = semantics(inst)
        ops = tuple(_canon_operand(op, canon) for op in inst.operands)
        if a64 and n_dest:
            ops = ops[n_dest:] + ops[:n_dest]
        dests = ops[len(ops) - n_dest:] if n_dest else ()
        srcs = ops[:len(ops) - n_dest] if n_dest else ops
        reads, writes = [], []
        for op in srcs:
            if op.kind in ("register", "predicate"):
                reads.append(op.reg)
            elif op.kind == "memory":
                reads.extend(op.address_regs())
                if op.writeback:
                    writes.append(op.base)
        for op in dests:
            if op.kind in ("register", "predicate"):
                writes.append(op.reg)
                if rmw:
                    reads.append(op.reg)
            elif op.kind == "memory":
                reads.extend(op.address_regs())
        # zero idioms (xor %x,%x,%x) break dependencies
        regs = [op.reg for op in ops if op.kind == "register"]
        if inst.mnemonic in _X86_ZERO_IDIOMS and len(regs) == len(ops) >= 2 and len(set(regs)) == 1:
            reads = []
        if a64 and inst.mnemonic.startswith("st") and n_dest == 0:
            # store: memory written, all registers read
            for op in ops:
                if op.kind == "memory" and op.writeback:
                    writes.append(op.base)
        if wflags:
            writes.append(flags)
        if rflags:
            reads.append(flags)
        out.append(replace(inst, operands=ops, n_dest=n_dest,
                           reads=_dedupe(reads), writes=_dedupe(writes)))
    return replace(ir, instructions=tuple(out), normalized=True)


_STORE_LIKE.update({"str", "stp", "stur", "stnp", "st1d", "st1w", "st1b", "st1h", "stnt1d",
                    "st2d", "st3d", "st4d", "strb", "strh"})


def format_instruction(inst, dialect):
    """Print a raw (source-ordered) instruction in assembler syntax."""
    if dialect == "aarch64":
        parts, lst = [], []
        for op in inst.operands:
            if op.in_list:
                lst.append(op.text)
                continue
            if lst:
                parts.append("{" + ", ".join(lst) + "}")
                lst = []
            parts.append(op.text)
        if lst:
            parts.append("{" + ", ".join(lst) + "}")
        return f"{inst.mnemonic} {', '.join(parts)}".strip()
    parts = []
    ops = list(inst.operands)
    i = 0
    while i < len(ops):
        op = ops[i]
        if op.kind == "predicate" and i + 1 < len(ops) and ops[i + 1].kind in ("register", "memory"):
            nxt = ops[i + 1]
            parts.append(f"{nxt.text}{{{op.text}}}")
            i += 2
            continue
        parts.append(op.text)
        i += 1
    return f"{inst.mnemonic} {', '.join(parts)}".strip()


def format_kernel(ir):
    """Reprint a raw kernel; the result parses back to an equal IR."""
    lines = [format_instruction(inst, ir.dialect) for inst in ir.instructions]
    if ir.back_branch:
        mn, target = ir.back_branch
        lines.append(f"{mn} {target}".strip())
    return "\n".join(lines) + "\n"


def dump_ir(ir):
    """Stable one-line-per-instruction textual IR (normalized kernels)."""
    ir = normalize(ir)
    out = [f"# dialect={ir.dialect} instructions={len(ir.instructions)}"]
    for i, inst in enumerate(ir.instructions):
        out.append(f"{i}\t{inst.form_str}\treads={','.join(inst.reads) or '-'}"
                   f"\twrites={','.join(inst.writes) or '-'}")
    if ir.back_branch:
        out.append(f"# back-branch {ir.back_branch[0]} {ir.back_branch[1]}".rstrip())
    return "\n".join(out) + "\n"
