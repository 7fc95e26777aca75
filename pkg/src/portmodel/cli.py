"""``portmodel`` command line.

Exit status: 0 success, 1 input error (bad file, unknown instruction,
usage), 2 internal invariant failure.
"""
from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .asm import AsmError, dump_ir, guess_dialect, parse_listing
from .depgraph import CycleInIntraGraph, build_graph
from .harness import (MeasurementError, entries_tsv, fmt, histogram_tsv, run_corpus,
                      summary_tsv)
from .machine import (AmbiguousForm, ModelError, UnknownInstruction, load_model,
                      peak_flops_per_cycle, serialize, sustained_frequency, validate_model,
                      VECTOR_CLASSES)
from .predictor import kernel_flops, predict, roofline, ZeroBytes
from .wa import TrafficSpec, WAError, effective_traffic, parse_mode, ratio_table

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return text  # kept as text for exact conversion


def build_parser():
    p = _Parser(prog="portmodel", description="Static in-core throughput model for loop kernels.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    a = sub.add_parser("analyze", help="predict one marked assembly kernel")
    a.add_argument("--arch", required=True, help="shipped model name or .mm file")
    a.add_argument("--file", required=True, help="assembly with LOOP-BEGIN/LOOP-END markers")
    a.add_argument("--dialect", choices=("aarch64", "x86-att"))
    a.add_argument("--cores", type=_positive_int, help="active cores (for time and Roofline)")
    a.add_argument("--format", choices=("text", "tsv"), default="text")
    a.add_argument("--dump-ir", action="store_true")
    a.add_argument("--dump-deps", action="store_true")
    a.add_argument("--flops", type=_nonneg, help="flops per iteration (default: from model)")
    a.add_argument("--load-bytes", type=_nonneg, help="bytes loaded per iteration")
    a.add_argument("--store-bytes", type=_nonneg, help="bytes stored per iteration")
    a.add_argument("--wa-mode", default="standard", help="write-allocate mode for stores")
    a.add_argument("--partial-stores", action="store_true",
                   help="stores do not overwrite full cache lines")

    v = sub.add_parser("validate", help="predict a corpus against measured cycles")
    v.add_argument("--arch", required=True)
    v.add_argument("--corpus", required=True, help="directory of <kernel_id>.s fixtures")
    v.add_argument("--measurements", required=True, help="measurement TSV")
    v.add_argument("--output-dir", help="write entries.tsv, histogram.tsv, summary.tsv here")

    m = sub.add_parser("model", help="inspect or check a machine model")
    m.add_argument("action", choices=("show", "check"))
    m.add_argument("--arch", required=True)

    w = sub.add_parser("wa", help="write-allocate traffic ratios")
    w.add_argument("action", choices=("ratios",))
    w.add_argument("--arch", required=True)
    w.add_argument("--mode", action="append", help="mode string (repeatable); "
                   "default: standard and nt")
    w.add_argument("--cores", type=_positive_int, action="append",
                   help="core count (repeatable); default: all")
    return p


def _analyze(args, out):
    model = load_model(args.arch)
    path = Path(args.file)
    text = path.read_text()
    dialect = args.dialect or guess_dialect(text)
    if dialect != model.dialect:
        raise UsageError(f"{path} is {dialect} but model {model.name} expects {model.dialect}")
    kernel = parse_listing(text, dialect)
    if args.cores is not None and args.cores > model.cores_per_chip:
        raise UsageError(f"--cores {args.cores} exceeds {model.cores_per_chip} cores of {model.name}")
    rep = predict(kernel, model, args.cores)

    if args.dump_ir:
        out.write(dump_ir(kernel))
    if args.dump_deps:
        out.write(build_graph(kernel, model).dump())

    roof = None
    if args.load_bytes is not None or args.store_bytes is not None:
        cores = args.cores or 1
        spec = TrafficSpec(Fraction(args.load_bytes or "0"), Fraction(args.store_bytes or "0"),
                           streaming=not args.partial_stores)
        nbytes = effective_traffic(spec, parse_mode(args.wa_mode, model), model, cores)
        flops = Fraction(args.flops) if args.flops is not None else kernel_flops(kernel, model)
        roof = roofline(rep, flops, nbytes, model, cores)

    if args.format == "tsv":
        out.write("kernel\tt_port\tt_issue\tlcd\tprediction\tbottleneck\n")
        out.write(f"{path.stem}\t{fmt(rep.t_port)}\t{fmt(rep.t_issue)}\t{fmt(rep.lcd)}\t"
                  f"{fmt(rep.prediction)}\t{rep.bottleneck}\n")
        return EXIT_OK

    out.write(f"kernel      {path.name}\n")
    out.write(f"machine     {model.name} ({dialect}, {len(kernel)} instructions)\n")
    out.write(f"t_port      {fmt(rep.t_port)} cy/iter\n")
    out.write(f"t_issue     {fmt(rep.t_issue)} cy/iter\n")
    out.write(f"lcd         {fmt(rep.lcd)} cy/iter\n")
    out.write(f"crit. path  {rep.critical_path} cy (not a loop bound)\n")
    out.write(f"prediction  {fmt(rep.prediction)} cy/iter, bound by {rep.bottleneck}\n")
    out.write(f"vector      {rep.vclass}\n")
    if rep.time_per_iter is not None:
        f = sustained_frequency(model, rep.vclass, args.cores)
        out.write(f"time        {fmt(rep.time_per_iter * 1e9)} ns/iter at {fmt(f / 1e9)} GHz, "
                  f"{args.cores} cores\n")
    out.write("port loads  " + "  ".join(f"{p}:{fmt(v)}" for p, v in rep.port_loads) + "\n")
    if roof is not None:
        out.write(f"roofline    {fmt(roof.flops_per_iter)} flop / {fmt(roof.bytes_per_iter)} B "
                  f"= {fmt(roof.intensity)} flop/B\n")
        out.write(f"            p_core {fmt(roof.p_core / 1e9)} Gflop/s, p_mem "
                  f"{fmt(roof.p_mem / 1e9)} Gflop/s -> {fmt(roof.p_roof / 1e9)} Gflop/s "
                  f"({roof.bound} bound)\n")
    for d in rep.diagnostics:
        out.write(f"note: {d}\n")
    return EXIT_OK


def _validate(args, out):
    model = load_model(args.arch)
    entries, summary = run_corpus(args.corpus, args.measurements, model)
    parts = {"entries.tsv": entries_tsv(entries), "histogram.tsv": histogram_tsv(summary.buckets),
             "summary.tsv": summary_tsv(summary)}
    if args.output_dir:
        d = Path(args.output_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, text in parts.items():
            (d / name).write_text(text)
    for name, text in parts.items():
        out.write(f"# {name[:-4]}\n{text}")
    for e in entries:
        if not e.ok:
            print(f"portmodel: {e.measurement.kernel_id}: {e.error}", file=sys.stderr)
    return EXIT_OK if summary.n_failed == 0 else EXIT_INPUT


def _model(args, out):
    model = load_model(args.arch)
    if args.action == "show":
        out.write(serialize(model))
        peak = peak_flops_per_cycle(model)
        out.write(f"# peak {peak:g} flop/cy/core, "
                  f"{peak * model.max_freq * model.cores_per_chip / 1e12:.4g} Tflop/s chip\n")
        for vc in VECTOR_CLASSES:
            f = sustained_frequency(model, vc, model.cores_per_chip)
            out.write(f"# {vc}: {f / 1e9:g} GHz at {model.cores_per_chip} cores\n")
        return EXIT_OK
    diags = validate_model(model)
    for d in diags:
        out.write(f"{model.name}: {d}\n")
    if not diags:
        out.write(f"{model.name}: ok ({len(model.instructions)} instruction forms)\n")
    return EXIT_OK if not diags else EXIT_INPUT


def _wa(args, out):
    model = load_model(args.arch)
    names = args.mode or ["standard", "nt"]
    modes = [parse_mode(n, model) for n in names]
    for c in args.cores or ():
        if c > model.cores_per_chip:
            raise UsageError(f"--cores {c} exceeds {model.cores_per_chip} cores of {model.name}")
    out.write("cores\t" + "\t".join(str(m) for m in modes) + "\n")
    for cores, ratios in ratio_table(model, modes, sorted(set(args.cores or ())) or None):
        out.write(f"{cores}\t" + "\t".join(fmt(r) for r in ratios) + "\n")
    return EXIT_OK


COMMANDS = {"analyze": _analyze, "validate": _validate, "model": _model, "wa": _wa}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except (CycleInIntraGraph, AssertionError) as exc:
        print(f"portmodel: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except UnknownInstruction as exc:
        print(f"portmodel: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AsmError, ModelError, AmbiguousForm, MeasurementError, WAError, ZeroBytes,
            OSError, ValueError) as exc:
        print(f"portmodel: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
