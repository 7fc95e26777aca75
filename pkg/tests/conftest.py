import os
from pathlib import Path

import pytest
from hypothesis import settings

from portmodel.asm import parse_listing
from portmodel.machine import SHIPPED_MODELS, load_model

settings.register_profile("default", deadline=None, max_examples=100)
settings.register_profile("ci", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CORPUS = Path(__file__).resolve().parents[1] / "src" / "portmodel" / "corpus"
CORPUS_DIRS = {"aarch64": CORPUS / "aarch64", "x86-att": CORPUS / "x86"}
KERNELS = ("add", "copy", "gs2d5pt", "init", "jacobi2d5pt", "jacobi3d11pt", "jacobi3d27pt",
           "jacobi3d7pt", "pi", "schoenauer_triad", "stream_triad", "sum", "update")


@pytest.fixture(scope="session")
def models():
    return {name: load_model(name) for name in SHIPPED_MODELS}


@pytest.fixture(scope="session")
def gcs(models):
    return models["gcs"]


@pytest.fixture(scope="session")
def spr(models):
    return models["spr"]


@pytest.fixture(scope="session")
def genoa(models):
    return models["genoa"]


def loop(body, dialect="aarch64"):
    """Wrap instruction lines into a marked single-block loop and parse it."""
    c = "//" if dialect == "aarch64" else "#"
    branch = "b.ne .Lloop" if dialect == "aarch64" else "jne .Lloop"
    text = f"{c} LOOP-BEGIN\n.Lloop:\n" + "\n".join(body) + f"\n{branch}\n{c} LOOP-END\n"
    return parse_listing(text, dialect)


# -- acceptance reporting ------------------------------------------------------

_criteria = {}  # number -> [title, passed]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            n, title = m.args
            _criteria.setdefault(n, [title, True])


def pytest_runtest_logreport(report):
    if report.failed or (report.when == "call" and report.skipped):
        item_marker = getattr(report, "_criterion", None)
        if item_marker is not None:
            _criteria[item_marker][1] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m:
        outcome.get_result()._criterion = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, passed = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title}")
