"""Combine the in-core bounds into a prediction; time, error and Roofline helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .depgraph import CycleLimitExceeded, build_graph, loop_carried
from .machine import sustained_frequency
from .scheduler import issue_bound, port_pressure

BOTTLENECK_ORDER = ("port", "issue", "lcd")


class NonPositiveMeasurement(ValueError):
    pass


class ZeroBytes(ValueError):
    pass


def _exact(x):
    """Fraction from an int, Fraction, str or float (floats via their repr)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class PredictionReport:
    t_port: Fraction
    t_issue: Fraction
    lcd: Fraction
    critical_path: int
    prediction: Fraction
    bottleneck: str
    vclass: str
    time_per_iter: float | None = None
    diagnostics: tuple = ()
    port_loads: tuple = ()  # ((port, Fraction), ...) in model order
    lcd_cycles: tuple = field(default=(), compare=False)


def infer_vclass(kernel):
    """Vector class from the widest vector register operand of *kernel*."""
    width = max((inst.vector_width() for inst in kernel.instructions), default=0)
    if width >= 64:
        return "wide-vector-512"
    if width >= 16:
        return "narrow-vector"
    return "scalar"


def combine(t_port, t_issue, lcd):
    """``(prediction, bottleneck)``; ties resolve to the earliest of port, issue, lcd."""
    values = (t_port, t_issue, lcd)
    best = max(values)
    return best, BOTTLENECK_ORDER[values.index(best)]


def cycles_to_time(cy_per_iter, model, vclass, active_cores):
    """Seconds per iteration at the sustained clock for *vclass* on *active_cores*."""
    if cy_per_iter < 0:
        raise ValueError("cycles per iteration must be >= 0")
    return float(cy_per_iter) / sustained_frequency(model, vclass, active_cores)


def predict(kernel, model, active_cores=None):
    """Lower-bound cycles per iteration of *kernel* (normalized IR) on *model*."""
    diags = []
    pp = port_pressure(kernel, model)
    t_issue = issue_bound(kernel, model)
    graph = build_graph(kernel, model)
    try:
        lat = loop_carried(graph)
    except CycleLimitExceeded as exc:
        lat = exc.partial
        diags.append(f"dependency cycle enumeration truncated at {exc.limit}; lcd is a lower bound")
    prediction, bottleneck = combine(pp.t_port, t_issue, lat.lcd)
    if not kernel.instructions:
        diags.append("empty kernel: no instructions between the markers")
    elif bottleneck == "lcd":
        diags.append("bound by a loop-carried dependency; latency-bound kernels tend to be "
                     "over-predicted when the hardware overlaps iterations beyond the model")
    vclass = infer_vclass(kernel)
    t = None
    if active_cores is not None:
        t = cycles_to_time(prediction, model, vclass, active_cores)
    return PredictionReport(
        t_port=pp.t_port, t_issue=t_issue, lcd=lat.lcd, critical_path=lat.critical_path,
        prediction=prediction, bottleneck=bottleneck, vclass=vclass, time_per_iter=t,
        diagnostics=tuple(diags), port_loads=tuple(pp.load_table()), lcd_cycles=lat.lcd_cycles)


def kernel_flops(kernel, model):
    """DP flops per iteration according to the model's descriptors."""
    return sum(model.lookup(inst).flops for inst in kernel.instructions)


def relative_prediction_error(predicted, measured):
    """``(measured - predicted) / measured``; positive when the prediction is faster.

    Exact (Fraction) when both inputs are; floats are taken by their repr.
    """
    predicted, measured = _exact(predicted), _exact(measured)
    if measured <= 0:
        raise NonPositiveMeasurement(f"measured cycles must be > 0, got {measured}")
    return (measured - predicted) / measured


@dataclass(frozen=True)
class RooflineEstimate:
    flops_per_iter: Fraction
    bytes_per_iter: Fraction
    intensity: Fraction
    p_core: Fraction | float  # flop/s; inf for a zero-time kernel doing work
    p_mem: Fraction
    p_roof: Fraction | float
    ridge_intensity: Fraction | float
    bound: str  # "memory" or "compute"


def roofline(report, flops_per_iter, bytes_per_iter, model, active_cores):
    """Roofline estimate for *active_cores* cores running the predicted loop.

    The in-core rate is taken from the prediction at the sustained clock of
    the kernel's vector class; memory rate is intensity times the model's
    sustained bandwidth.  The kernel is memory bound strictly below the ridge.
    """
    flops, nbytes = _exact(flops_per_iter), _exact(bytes_per_iter)
    if nbytes <= 0:
        raise ZeroBytes("bytes per iteration must be > 0")
    if flops < 0:
        raise ValueError("flops per iteration must be >= 0")
    intensity = flops / nbytes
    freq = _exact(sustained_frequency(model, report.vclass, active_cores))
    bw = _exact(model.mem_bandwidth)
    if flops == 0:
        p_core = Fraction(0)
    elif report.prediction == 0:
        p_core = float("inf")
    else:
        p_core = flops * freq * active_cores / report.prediction
    p_mem = intensity * bw
    ridge = p_core / bw if p_core != float("inf") else float("inf")
    if intensity < ridge:
        return RooflineEstimate(flops, nbytes, intensity, p_core, p_mem, p_mem, ridge, "memory")
    return RooflineEstimate(flops, nbytes, intensity, p_core, p_mem, p_core, ridge, "compute")
