import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gridmap.model import CrsKind, GeoPoint, LineSegment, Site, SiteType  # noqa: E402
from gridmap import synth  # noqa: E402


def P(x, y):
    """Projected point in meters."""
    return GeoPoint(float(x), float(y), CrsKind.PROJECTED)


def seg(sid, cid, kv, *pts):
    return LineSegment(sid, cid, float(kv), tuple(P(*p) for p in pts))


def site(sid, name, x, y, kv=(38.0, 115.0), zone="Z", stype=SiteType.SUBSTATION):
    return Site(sid, name, stype, kv[0], kv[1], P(x, y), zone)


SMALL = {230.0: 4, 115.0: 10, 38.0: 40}


def small_cfg(seed=7, **kw):
    return synth.SynthConfig(rng_seed=seed, n_buses=dict(SMALL), xfmr2w={(230.0, 115.0): 3, (115.0, 38.0): 8},
                             xfmr3w=2, width_m=30_000.0, height_m=15_000.0, **kw)


@pytest.fixture(scope="session")
def small_corpus():
    return synth.generate_truth(small_cfg())


@pytest.fixture(scope="session")
def default_corpus():
    return synth.generate_truth(synth.SynthConfig())


# -- acceptance criterion reporting ---------------------------------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    num, title = mark.args
    prev = _CRITERIA.get(num, (title, True, ""))
    detail = getattr(item, "criterion_detail", "")
    _CRITERIA[num] = (title, prev[1] and rep.passed, detail or prev[2])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[num]
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
