import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from hxz.hyperfunc import HyperExpSpec, analyze, normalize
from hxz.numcore import CPoly, workprec

# the precision fixture is entered once per test and is safe to share between examples
settings.register_profile(
    "hxz", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow],
)
settings.load_profile("hxz")

SPEC_DIR = Path(__file__).resolve().parent.parent / "specs"

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def load_spec(name):
    return HyperExpSpec.from_json((SPEC_DIR / f"{name}.json").read_text())


def structure(name, bits=None):
    """Analyzed example spec, at its declared precision unless ``bits`` is given."""
    spec = load_spec(name)
    with workprec(bits or spec.precision_bits):
        return analyze(normalize(spec))


def make_spec(P=1, Q=1, S=1, T=None):
    """Spec from coefficient lists (ascending); plain numbers become constants."""
    def poly(v):
        return CPoly(tuple(v)) if isinstance(v, (list, tuple)) else CPoly.const(v)
    return HyperExpSpec(poly(P), poly(Q), poly(S), poly(T if T is not None else [0, 1]))


@pytest.fixture(autouse=True)
def precision():
    """Every test runs at the library default of 256 bits unless it asks for more."""
    with workprec(256):
        yield 256


@pytest.fixture(scope="session")
def exp_sd():
    return structure("exp_inv_z")


@pytest.fixture(scope="session")
def pole_sd():
    return structure("exp_inv_z_pole")


@pytest.fixture(scope="session")
def fig2_sd():
    return structure("fig2", 512)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def dump(obj):
    return json.dumps(obj, sort_keys=True)
