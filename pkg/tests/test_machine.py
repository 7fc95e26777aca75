import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from portmodel import expectations
from portmodel.machine import (MODEL_DIR, SHIPPED_MODELS, VECTOR_CLASSES, ModelError,
                               ModelParseError, UnknownInstruction, UnknownPort, load_model,
                               parse_model, peak_flops_per_cycle, serialize, sustained_frequency,
                               theoretical_peak_flops, validate_model)
from portmodel.scheduler import solve_uops

TOY = """\
[machine]
name = toy
dialect = aarch64
ports = P0 P1 L0
issue_width = 4
simd_bytes = 16
load_units = 1 x 16
store_units = 1 x 16
cores_per_chip = 4
base_freq = 2 GHz
max_freq = 3 GHz
mem_bandwidth = 100 GB/s
freq.scalar = 1:3GHz 4:2GHz

[instruction]
form = fadd d,d,d
uops = {P0|P1}:1
latency = 3
flops = 1
"""


def test_toy_model():
    m = parse_model(TOY)
    assert m.ports == ("P0", "P1", "L0")
    assert m.mem_bandwidth == 100e9
    assert m.descriptor("fadd d,d,d").reciprocal_throughput() == Fraction(1, 2)
    assert sustained_frequency(m, "scalar", 2) == pytest.approx(2e9 + 2e9 / 3)


@pytest.mark.parametrize("machine", SHIPPED_MODELS)
def test_core_features(models, machine):
    m, exp = models[machine], expectations.CORES[machine]
    assert len(m.ports) == exp.ports
    assert m.simd_bytes == exp.simd_bytes
    assert m.load_units == exp.loads
    assert m.store_units == exp.stores
    chip = expectations.CHIPS[machine]
    assert (m.cores_per_chip, m.max_freq, m.base_freq) == (chip.cores, chip.max_freq,
                                                            chip.base_freq)
    assert m.mem_bandwidth == chip.mem_bandwidth


def test_load_by_path():
    assert len(load_model(MODEL_DIR / "gcs.mm").ports) == 17
    assert load_model(str(MODEL_DIR / "spr.mm")).simd_bytes == 64


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("[machine]\nname = x\nbogus = 1\n", 3),
    ("[machine]\nname = x\nname = y\n", 3),
    ("name = x\n", 1),
    ("[weird]\n", 1),
])
def test_parse_errors(text, line):
    with pytest.raises(ModelParseError) as info:
        parse_model(text)
    assert info.value.line == line


def test_missing_key():
    with pytest.raises(ModelParseError, match="missing machine key"):
        parse_model("[machine]\nname = x\n")


def test_duplicate_form_rejected():
    with pytest.raises(ModelParseError, match="duplicate instruction form"):
        parse_model(TOY + "\n[instruction]\nform = fadd d,d,d\nuops = {P0}:1\nlatency = 3\n")


def test_undeclared_port_rejected_at_load():
    with pytest.raises(UnknownPort):
        parse_model(TOY.replace("{P0|P1}:1", "{P0|P9}:1"))


@pytest.mark.parametrize("uops", ["{P0}:0", "{P0}:1/2"])
def test_bad_occupancy(uops):
    with pytest.raises(ModelError):
        parse_model(TOY.replace("{P0|P1}:1", uops))


def test_fractional_occupancy_above_one_allowed():
    assert parse_model(TOY.replace("{P0|P1}:1", "{P0}:5/2")).instructions[0].uops[0][1] == \
        Fraction(5, 2)


def test_bad_wa_mode():
    with pytest.raises(ModelError):
        parse_model(TOY.replace("[instruction]", "wa_standard = magic\n\n[instruction]", 1))


def test_too_many_uops_for_issue_width():
    with pytest.raises(ModelError, match="issue_width"):
        parse_model(TOY.replace("{P0|P1}:1", " ".join(["{P0}:1"] * 5)))


# -- lookups ---------------------------------------------------------------------

def test_gcs_vector_fma(gcs):
    d = gcs.descriptor("fmla p,zd,zd,zd")
    assert d.latency == 4
    assert d.uops == ((frozenset({"V0", "V1", "V2", "V3"}), 1),)


def test_genoa_scalar_divide(genoa):
    d = genoa.descriptor("vdivsd xmm,xmm,xmm")
    assert d.latency == 13
    assert d.reciprocal_throughput() == 5


def test_unknown_instruction(gcs):
    with pytest.raises(UnknownInstruction):
        gcs.descriptor("frobnicate x,x")
    with pytest.raises(UnknownInstruction) as info:
        gcs.descriptor("fadd zd,zd")
    assert "fadd zd,zd,zd" in info.value.suggestions


@pytest.mark.parametrize("machine", SHIPPED_MODELS)
def test_descriptor_invariants(models, machine):
    m = models[machine]
    assert m.issue_width >= max(len(d.uops) for d in m.instructions)
    for d in m.instructions:
        for ports, occ in d.uops:
            assert set(ports) <= set(m.ports)
            assert occ > 0
            assert occ.denominator == 1 or occ >= 1


# -- frequency -------------------------------------------------------------------

@pytest.mark.parametrize("machine", SHIPPED_MODELS)
def test_frequency_monotone(models, machine):
    m = models[machine]
    for vc in VECTOR_CLASSES:
        fs = [sustained_frequency(m, vc, c) for c in range(1, m.cores_per_chip + 1)]
        assert all(b <= a for a, b in zip(fs, fs[1:]))
    for c in range(1, m.cores_per_chip + 1):
        fs = [sustained_frequency(m, vc, c) for vc in VECTOR_CLASSES]
        assert all(b <= a for a, b in zip(fs, fs[1:]))


def test_frequency_endpoints(gcs, spr, genoa):
    for vc in VECTOR_CLASSES:
        assert sustained_frequency(gcs, vc, 72) == 3.4e9
    assert sustained_frequency(spr, "wide-vector-512", 52) == 2.0e9
    assert sustained_frequency(spr, "narrow-vector", 52) == 3.0e9
    assert sustained_frequency(genoa, "wide-vector-512", 96) == 3.1e9


def test_frequency_rejects_bad_input(gcs):
    with pytest.raises(ValueError):
        sustained_frequency(gcs, "scalar", 0)
    with pytest.raises(ValueError):
        sustained_frequency(gcs, "scalar", 73)
    with pytest.raises(ValueError):
        sustained_frequency(gcs, "avx-9000", 1)


# -- peak ------------------------------------------------------------------------

PEAK_CANDIDATES = {
    "gcs": ["fmla p,zd,zd,zd", "fadd zd,zd,zd", "fmul zd,zd,zd"],
    "spr": ["vfmadd231pd zmm,zmm,zmm", "vaddpd zmm,zmm,zmm", "vfmadd231pd ymm,ymm,ymm",
            "vaddpd ymm,ymm,ymm"],
    "genoa": ["vfmadd231pd ymm,ymm,ymm", "vaddpd ymm,ymm,ymm", "vmulpd ymm,ymm,ymm",
              "vfmadd231pd zmm,zmm,zmm", "vaddpd zmm,zmm,zmm"],
}


def mix_oracle(model, forms, max_count=4):
    """Best flops/cy over integer per-cycle mixes of *forms* (brute force)."""
    descs = [model.descriptor(f) for f in forms]
    best = 0
    for counts in itertools.product(range(max_count + 1), repeat=len(descs)):
        uops = [u for d, n in zip(descs, counts) for _ in range(n) for u in d.uops]
        if len(uops) > model.issue_width or solve_uops(uops)[0] > 1:
            continue
        best = max(best, sum(d.flops * n for d, n in zip(descs, counts)))
    return best


@pytest.mark.parametrize("machine,flops", [("gcs", 16), ("spr", 32), ("genoa", 24)])
def test_peak_per_cycle(models, machine, flops):
    m = models[machine]
    assert peak_flops_per_cycle(m) == pytest.approx(flops)
    assert mix_oracle(m, PEAK_CANDIDATES[machine]) == flops


@pytest.mark.parametrize("machine", SHIPPED_MODELS)
def test_chip_peak(models, machine):
    m = models[machine]
    ref = expectations.CHIPS[machine].peak_flops
    assert theoretical_peak_flops(m, m.max_freq, m.cores_per_chip) == pytest.approx(ref, rel=0.01)


# -- validation and round trip ---------------------------------------------------

@pytest.mark.parametrize("machine", SHIPPED_MODELS)
def test_shipped_models_validate(models, machine):
    assert validate_model(models[machine]) == []


def test_injected_latency_fault():
    text = (MODEL_DIR / "gcs.mm").read_text()
    i = text.index("form = fmla p,zd,zd,zd")
    j = text.index("latency = 4", i)
    broken = parse_model(text[:j] + "latency = 5" + text[j + len("latency = 4"):])
    diags = validate_model(broken)
    assert len(diags) == 1
    assert "vec-fma" in diags[0]


@pytest.mark.parametrize("machine", SHIPPED_MODELS)
def test_round_trip(models, machine):
    m = models[machine]
    again = parse_model(serialize(m))
    assert again == m
    assert serialize(again) == serialize(m)


@given(st.integers(1, 72))
def test_peak_scales_with_cores(cores):
    m = load_model("gcs")
    assert theoretical_peak_flops(m, 3.4e9, cores) == pytest.approx(16 * 3.4e9 * cores)
