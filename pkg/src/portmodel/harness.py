"""Validation harness: predict a kernel corpus against measured cycle counts."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .asm import AsmError, parse_listing
from .machine import AmbiguousForm, UnknownInstruction
from .predictor import predict, relative_prediction_error

MEASUREMENT_HEADER = ("kernel_id", "compiler", "flags", "measured_cy_per_iter")
ENTRY_HEADER = ("kernel_id", "compiler", "flags", "measured", "predicted", "rpe", "bottleneck",
                "status")
DEFAULT_WIDTH = Fraction(1, 10)
COLLECTOR = "-inf"
DIALECT_DIRS = {"aarch64": "aarch64", "x86-att": "x86"}


class MeasurementError(ValueError):
    pass


def fmt(x):
    """TSV number: 6 significant digits, ``.`` decimal separator."""
    if x is None:
        return ""
    return format(float(x), ".6g")


@dataclass(frozen=True)
class Measurement:
    kernel_id: str
    compiler: str
    flags: str
    measured_cy_per_iter: Fraction

    @property
    def key(self):
        return (self.kernel_id, self.compiler, self.flags)


def read_measurements(source):
    """Parse a measurement TSV (path or text stream); rows sorted by key."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
    else:
        text = source.read()
    rows = [r for r in csv.reader(io.StringIO(text), delimiter="\t")
            if r and not r[0].startswith("#")]
    if not rows:
        raise MeasurementError("empty measurement file")
    if tuple(c.strip() for c in rows[0]) != MEASUREMENT_HEADER:
        raise MeasurementError(f"header must be {' '.join(MEASUREMENT_HEADER)}")
    out, seen = [], set()
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != 4:
            raise MeasurementError(f"line {lineno}: expected 4 fields, got {len(row)}")
        kid, comp, flags, value = (c.strip() for c in row)
        if not kid:
            raise MeasurementError(f"line {lineno}: empty kernel_id")
        try:
            cy = Fraction(value)
        except (ValueError, ZeroDivisionError):
            raise MeasurementError(f"line {lineno}: bad cycle count {value!r}") from None
        if cy <= 0:
            raise MeasurementError(f"line {lineno}: measured cycles must be positive")
        m = Measurement(kid, comp, flags, cy)
        if m.key in seen:
            raise MeasurementError(f"line {lineno}: duplicate entry {m.key}")
        seen.add(m.key)
        out.append(m)
    return sorted(out, key=lambda m: m.key)


@dataclass(frozen=True)
class EntryResult:
    measurement: Measurement
    predicted: Fraction | None = None
    rpe: Fraction | None = None
    bottleneck: str = ""
    error: str = ""

    @property
    def ok(self):
        return not self.error


def _bucket_index(rpe, width):
    return math.floor(rpe / width)


def histogram(errors, width=DEFAULT_WIDTH):
    """``[(bucket_low, count), ...]``, collector first (low ``None``).

    Buckets are half-open ``[k*w, (k+1)*w)``; the collector holds RPE <= -1.
    The range always covers -1 to 1 so empty inputs give an all-zero table.
    """
    width = Fraction(str(width)) if isinstance(width, float) else Fraction(width)
    if width <= 0:
        raise ValueError("bucket width must be > 0")
    errors = [Fraction(str(e)) if isinstance(e, float) else Fraction(e) for e in errors]
    k_lo = _bucket_index(Fraction(-1), width)
    k_hi = max([_bucket_index(Fraction(1), width)]
               + [_bucket_index(e, width) for e in errors if e > -1])
    counts = {k: 0 for k in range(k_lo, k_hi + 1)}
    collector = 0
    for e in errors:
        if e <= -1:
            collector += 1
        else:
            counts[_bucket_index(e, width)] += 1
    return [(None, collector)] + [(k * width, counts[k]) for k in sorted(counts)]


@dataclass(frozen=True)
class ValidationSummary:
    errors: tuple  # RPE per successfully predicted entry
    buckets: tuple
    pct_within_10: Fraction
    pct_within_20: Fraction
    mean_rpe_underpredictions: Fraction | float
    mean_abs_rpe: Fraction | float
    n_failed: int = 0

    def rows(self):
        return [
            ("n", len(self.errors)),
            ("n_failed", self.n_failed),
            ("pct_within_10", fmt(self.pct_within_10)),
            ("pct_within_20", fmt(self.pct_within_20)),
            ("mean_rpe_underpredictions", fmt(self.mean_rpe_underpredictions)),
            ("mean_abs_rpe", fmt(self.mean_abs_rpe)),
        ]


def summarize(errors, width=DEFAULT_WIDTH, n_failed=0):
    """Summary statistics of an RPE list (percentages over all RPEs)."""
    errors = tuple(Fraction(str(e)) if isinstance(e, float) else Fraction(e) for e in errors)
    n = len(errors)
    nan = float("nan")
    if n:
        within10 = Fraction(100 * sum(1 for e in errors if 0 <= e < Fraction(1, 10)), n)
        within20 = Fraction(100 * sum(1 for e in errors if 0 <= e < Fraction(2, 10)), n)
        mean_abs = sum(abs(e) for e in errors) / n
    else:
        within10 = within20 = Fraction(0)
        mean_abs = nan
    under = [e for e in errors if e > 0]
    mean_under = sum(under) / len(under) if under else nan
    return ValidationSummary(errors, tuple(histogram(errors, width)), within10, within20,
                             mean_under, mean_abs, n_failed)


def fixture_path(corpus_dir, kernel_id, dialect):
    corpus_dir = Path(corpus_dir)
    direct = corpus_dir / f"{kernel_id}.s"
    if direct.exists():
        return direct
    nested = corpus_dir / DIALECT_DIRS.get(dialect, dialect) / f"{kernel_id}.s"
    return nested if nested.exists() else direct


def evaluate(measurements, corpus_dir, model):
    """Per-measurement results; failures are recorded and the run goes on."""
    cache = {}
    results = []
    for m in sorted(measurements, key=lambda m: m.key):
        if m.kernel_id not in cache:
            path = fixture_path(corpus_dir, m.kernel_id, model.dialect)
            try:
                kernel = parse_listing(path.read_text(), model.dialect)
                cache[m.kernel_id] = predict(kernel, model)
            except FileNotFoundError:
                cache[m.kernel_id] = f"missing fixture {path}"
            except (AsmError, UnknownInstruction, AmbiguousForm, OSError) as exc:
                cache[m.kernel_id] = f"{type(exc).__name__}: {exc}"
        rep = cache[m.kernel_id]
        if isinstance(rep, str):
            results.append(EntryResult(m, error=rep))
            continue
        rpe = relative_prediction_error(rep.prediction, m.measured_cy_per_iter)
        results.append(EntryResult(m, rep.prediction, rpe, rep.bottleneck))
    return results


def run_corpus(corpus_dir, measurements_file, model, width=DEFAULT_WIDTH):
    """``(entries, summary)`` for a measurement file against a corpus directory."""
    entries = evaluate(read_measurements(measurements_file), corpus_dir, model)
    ok = [e for e in entries if e.ok]
    return entries, summarize([e.rpe for e in ok], width, len(entries) - len(ok))


def _tsv(rows):
    return "".join("\t".join(str(c) for c in row) + "\n" for row in rows)


def entries_tsv(entries):
    rows = [ENTRY_HEADER]
    for e in entries:
        m = e.measurement
        status = "ok" if e.ok else "error: " + " ".join(e.error.split())
        rows.append((m.kernel_id, m.compiler, m.flags, fmt(m.measured_cy_per_iter),
                     fmt(e.predicted), fmt(e.rpe), e.bottleneck, status))
    return _tsv(rows)


def histogram_tsv(buckets):
    rows = [("bucket_low", "count")]
    rows += [(COLLECTOR if low is None else fmt(low), count) for low, count in buckets]
    return _tsv(rows)


def summary_tsv(summary):
    return _tsv([("statistic", "value")] + summary.rows())


def parse_entries_tsv(text):
    """RPE column of an emitted entry table (ok rows only), as Fractions."""
    rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
    idx = rows[0].index("rpe")
    st = rows[0].index("status")
    return [Fraction(r[idx]) for r in rows[1:] if r[st] == "ok"]
