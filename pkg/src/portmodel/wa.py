"""Memory traffic of store streams under the different write-allocate regimes.

The traffic ratio is the actual memory traffic of a store-only stream
divided by the stored data volume: 2 with a full write-allocate (read for
ownership plus write back), 1 when the line read is avoided.

Mode strings::

    full-wa                 every store line is read first
    auto-evasion            hardware claims lines, no read
    nt-perfect              non-temporal stores, no read
    nt-residual:R[@N]       NT stores leaving a residual read fraction R,
                            from N active cores on (default 4)
    speci2m:M               utilization-driven evasion of up to M
    standard / nt           the machine model's defaults for plain / NT stores
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

MODES = ("full-wa", "auto-evasion", "nt-perfect", "nt-residual", "speci2m")
DEFAULT_ACTIVATION = ((Fraction(1, 2), Fraction(0)), (Fraction(1), Fraction(1)))
DEFAULT_RESIDUAL_ONSET = 4
INGEST_RANGE = (Fraction(9, 10), Fraction(21, 10))


class WAError(ValueError):
    pass


def _interp(points, x):
    """Clamped piecewise-linear interpolation over sorted ``(x, y)`` points."""
    if x <= points[0][0]:
        return points[0][1]
    if x >= points[-1][0]:
        return points[-1][1]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x0 <= x <= x1:
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class WAMode:
    kind: str
    max_reduction: Fraction = Fraction(0)
    residual: Fraction = Fraction(0)
    onset_cores: int = DEFAULT_RESIDUAL_ONSET
    # ccNUMA domain utilization -> activation, both in [0, 1]
    activation: tuple = DEFAULT_ACTIVATION

    def __post_init__(self):
        if self.kind not in MODES:
            raise WAError(f"unknown write-allocate mode {self.kind!r}")
        if not 0 <= self.max_reduction <= 1:
            raise WAError(f"max_reduction must be in [0, 1], got {self.max_reduction}")
        if not 0 <= self.residual <= 1:
            raise WAError(f"residual must be in [0, 1], got {self.residual}")
        if self.onset_cores < 1:
            raise WAError("onset_cores must be >= 1")
        pts = self.activation
        if not pts or any(not 0 <= y <= 1 for _, y in pts):
            raise WAError("activation values must lie in [0, 1]")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise WAError("activation points must have increasing utilization")
        if any(b[1] < a[1] for a, b in zip(pts, pts[1:])):
            raise WAError("activation must be non-decreasing")

    def __str__(self):
        if self.kind == "speci2m":
            return f"speci2m:{float(self.max_reduction):g}"
        if self.kind == "nt-residual":
            text = f"nt-residual:{float(self.residual):g}"
            if self.onset_cores != DEFAULT_RESIDUAL_ONSET:
                text += f"@{self.onset_cores}"
            return text
        return self.kind


def parse_mode(text, model=None):
    """WAMode from a mode string; ``standard``/``nt`` need *model*."""
    text = text.strip()
    if text in ("standard", "nt"):
        if model is None:
            raise WAError(f"mode {text!r} needs a machine model")
        return parse_mode(model.wa_standard if text == "standard" else model.wa_nt)
    kind, _, arg = text.partition(":")
    try:
        if kind == "speci2m":
            return WAMode(kind, max_reduction=Fraction(arg or "0.25"))
        if kind == "nt-residual":
            r, _, onset = arg.partition("@")
            return WAMode(kind, residual=Fraction(r or "0.10"),
                          onset_cores=int(onset) if onset else DEFAULT_RESIDUAL_ONSET)
    except (ValueError, ZeroDivisionError) as exc:
        raise WAError(f"bad mode argument in {text!r}: {exc}") from None
    if arg:
        raise WAError(f"mode {kind!r} takes no argument")
    return WAMode(kind)


def _as_mode(mode, model):
    return parse_mode(mode, model) if isinstance(mode, str) else mode


def domain_utilization(model, active_cores):
    """Load of the fullest ccNUMA domain when cores are filled domain by domain."""
    per = model.cores_per_domain
    return Fraction(min(active_cores, per), per)


def traffic_ratio(mode, model, active_cores):
    """Memory traffic over stored volume for a streaming store stream."""
    mode = _as_mode(mode, model)
    if not 1 <= active_cores <= model.cores_per_chip:
        raise ValueError(f"active_cores must be in [1, {model.cores_per_chip}], got {active_cores}")
    if mode.kind == "full-wa":
        return Fraction(2)
    if mode.kind in ("auto-evasion", "nt-perfect"):
        return Fraction(1)
    if mode.kind == "nt-residual":
        return 1 + mode.residual if active_cores >= mode.onset_cores else Fraction(1)
    act = _interp(mode.activation, domain_utilization(model, active_cores))
    return 2 - mode.max_reduction * act


@dataclass(frozen=True)
class TrafficSpec:
    load_bytes_per_iter: Fraction
    store_bytes_per_iter: Fraction
    streaming: bool = True  # stores overwrite whole cache lines

    def __post_init__(self):
        if self.load_bytes_per_iter < 0 or self.store_bytes_per_iter < 0:
            raise WAError("byte counts must be non-negative")


def effective_traffic(spec, mode, model, active_cores):
    """Memory bytes per iteration; partial-line stores always write-allocate."""
    mode = _as_mode(mode, model)
    if not spec.streaming:
        mode = WAMode("full-wa")
    ratio = traffic_ratio(mode, model, active_cores)
    return Fraction(spec.load_bytes_per_iter) + Fraction(spec.store_bytes_per_iter) * ratio


@dataclass(frozen=True)
class RatioCurve:
    points: tuple  # ((active_cores, ratio), ...) sorted by cores
    name: str = ""

    def __post_init__(self):
        lo, hi = INGEST_RANGE
        for c, r in self.points:
            if not lo <= r <= hi:
                raise WAError(f"ratio {float(r):g} at {c} cores outside [{float(lo)}, {float(hi)}]")
        if any(b[0] <= a[0] for a, b in zip(self.points, self.points[1:])):
            raise WAError("core counts must be strictly increasing")


def ingest_ratio_curves(source):
    """All ratio columns of a TSV (header row, cores in column 0) by column name.

    *source* is a path or an open text stream.  Blank or ``nan`` cells are
    skipped, so variants may cover different core ranges.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    rows = [r for r in csv.reader(io.StringIO(text), delimiter="\t")
            if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise WAError("empty ratio file")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise WAError("ratio file needs a cores column and at least one ratio column")
    if not body:
        raise WAError("ratio file has no data rows")
    columns = {name.strip() or f"col{i}": [] for i, name in enumerate(header[1:], 1)}
    names = list(columns)
    for lineno, row in enumerate(body, 2):
        if len(row) > len(header):
            raise WAError(f"line {lineno}: {len(row)} fields, header has {len(header)}")
        try:
            cores = int(row[0])
        except ValueError:
            raise WAError(f"line {lineno}: bad core count {row[0]!r}") from None
        for name, cell in zip(names, row[1:]):
            cell = cell.strip()
            if not cell or cell.lower() == "nan":
                continue
            try:
                columns[name].append((cores, Fraction(cell)))
            except ValueError:
                raise WAError(f"line {lineno}: bad ratio {cell!r}") from None
    return {name: RatioCurve(tuple(sorted(pts)), name) for name, pts in columns.items()}


def ingest_ratio_curve(source, variant=None):
    """One curve from a ratio TSV: *variant* by name, else the first column."""
    curves = ingest_ratio_curves(source)
    if variant is None:
        return next(iter(curves.values()))
    try:
        return curves[variant]
    except KeyError:
        raise WAError(f"no column {variant!r}; have {', '.join(curves)}") from None


def compare_curve(curve, mode, model):
    """Max absolute deviation between a measured curve and the modeled ratios."""
    mode = _as_mode(mode, model)
    dev = Fraction(0)
    for cores, r in curve.points:
        if 1 <= cores <= model.cores_per_chip:
            dev = max(dev, abs(r - traffic_ratio(mode, model, cores)))
    return dev


def ratio_table(model, modes, cores=None):
    """``[(cores, [ratio per mode]), ...]`` over *cores* (default: all counts)."""
    modes = [_as_mode(m, model) for m in modes]
    cores = cores or range(1, model.cores_per_chip + 1)
    return [(c, [traffic_ratio(m, model, c) for m in modes]) for c in cores]
