"""Published reference values the shipped machine models must reproduce.

``INSTRUCTIONS`` lists, per machine, the instruction form that represents
each row of the published DP instruction table together with the DP
elements it processes, the throughput and the latency.  Throughput is in DP
elements per cycle, except for gathers where it is in cache lines per cycle
(a gather is counted by the data volume it delivers, ``elements * 8 / 64``).
"""
from fractions import Fraction as F
from typing import NamedTuple

CACHE_LINE_BYTES = 64


class InstructionExpectation(NamedTuple):
    row: str
    form: str
    elements: int
    throughput: F
    latency: int
    unit: str = "elem"  # "elem" or "cl"

    def work_per_instruction(self):
        if self.unit == "cl":
            return F(self.elements * 8, CACHE_LINE_BYTES)
        return F(self.elements)


def _rows(gather, vadd, vmul, vfma, vdiv, sadd, smul, sfma, sdiv):
    return [
        InstructionExpectation("gather", *gather, unit="cl"),
        InstructionExpectation("vec-add", *vadd),
        InstructionExpectation("vec-mul", *vmul),
        InstructionExpectation("vec-fma", *vfma),
        InstructionExpectation("vec-div", *vdiv),
        InstructionExpectation("scalar-add", *sadd),
        InstructionExpectation("scalar-mul", *smul),
        InstructionExpectation("scalar-fma", *sfma),
        InstructionExpectation("scalar-div", *sdiv),
    ]


INSTRUCTIONS = {
    "gcs": _rows(
        ("ld1d p,mv,zd", 2, F(1, 4), 9),
        ("fadd zd,zd,zd", 2, F(8), 2),
        ("fmul zd,zd,zd", 2, F(8), 3),
        ("fmla p,zd,zd,zd", 2, F(8), 4),
        ("fdiv p,zd,zd,zd", 2, F(2, 5), 5),
        ("fadd d,d,d", 1, F(4), 2),
        ("fmul d,d,d", 1, F(4), 3),
        ("fmadd d,d,d,d", 1, F(4), 4),
        ("fdiv d,d,d", 1, F(2, 5), 12),
    ),
    "spr": _rows(
        ("vgatherqpd mv,k,zmm", 8, F(1, 3), 20),
        ("vaddpd zmm,zmm,zmm", 8, F(16), 2),
        ("vmulpd zmm,zmm,zmm", 8, F(16), 4),
        ("vfmadd231pd zmm,zmm,zmm", 8, F(16), 4),
        ("vdivpd ymm,ymm,ymm", 4, F(1, 2), 14),
        ("vaddsd xmm,xmm,xmm", 1, F(2), 2),
        ("vmulsd xmm,xmm,xmm", 1, F(2), 4),
        ("vfmadd231sd xmm,xmm,xmm", 1, F(2), 5),
        ("vdivsd xmm,xmm,xmm", 1, F(1, 4), 14),
    ),
    "genoa": _rows(
        ("vgatherqpd ymm,mv,ymm", 4, F(1, 8), 13),
        ("vaddpd ymm,ymm,ymm", 4, F(8), 3),
        ("vmulpd ymm,ymm,ymm", 4, F(8), 3),
        ("vfmadd231pd ymm,ymm,ymm", 4, F(8), 4),
        ("vdivpd ymm,ymm,ymm", 4, F(4, 5), 13),
        ("vaddsd xmm,xmm,xmm", 1, F(2), 3),
        ("vmulsd xmm,xmm,xmm", 1, F(2), 3),
        ("vfmadd231sd xmm,xmm,xmm", 1, F(2), 4),
        ("vdivsd xmm,xmm,xmm", 1, F(1, 5), 13),
    ),
}


class CoreExpectation(NamedTuple):
    ports: int
    simd_bytes: int
    int_units: int
    fp_units: int
    loads: tuple  # (count, bytes)
    stores: tuple


CORES = {
    "gcs": CoreExpectation(17, 16, 6, 4, (3, 16), (2, 16)),
    "spr": CoreExpectation(12, 64, 5, 3, (2, 64), (2, 32)),
    "genoa": CoreExpectation(13, 32, 4, 4, (2, 32), (1, 32)),
}


class ChipExpectation(NamedTuple):
    cores: int
    max_freq: float
    base_freq: float
    peak_flops: float
    mem_bandwidth: float  # measured, bytes/s
    mem_bandwidth_theoretical: float


CHIPS = {
    "gcs": ChipExpectation(72, 3.4e9, 3.4e9, 3.92e12, 467e9, 546e9),
    "spr": ChipExpectation(52, 3.8e9, 2.0e9, 6.32e12, 273e9, 307e9),
    "genoa": ChipExpectation(96, 3.7e9, 2.55e9, 8.52e12, 360e9, 461e9),
}

# sustained all-core frequencies for arithmetic-heavy code
FREQUENCY_ENDPOINTS = [
    ("gcs", "scalar", 72, 3.4e9),
    ("gcs", "narrow-vector", 72, 3.4e9),
    ("spr", "wide-vector-512", 52, 2.0e9),
    ("spr", "narrow-vector", 52, 3.0e9),
    ("genoa", "wide-vector-512", 96, 3.1e9),
]
