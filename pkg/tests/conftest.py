import os

import numpy as np
import pytest

from polytree.cruise import CruiseParams, synthesize_controller
from polytree.dataset import dataset_from_pairs


def pytest_collection_modifyitems(config, items):
    if os.environ.get("POLYTREE_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set POLYTREE_SLOW=1 to run full-scale tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def cruise_small():
    """Desk-scale cruise controller (v in [-6, 8], d_max 40)."""
    return synthesize_controller(CruiseParams(v_min=-6, v_max=8, d_max=40, d_safe=5))


@pytest.fixture(scope="session")
def cruise_tiny():
    return synthesize_controller(CruiseParams(v_min=-2, v_max=2, d_max=20, d_safe=5))


BUMP_POINTS = """
1 1 a
1 2 a
1 3 a
1 4 a
2 1 b
2 2 b
2 3 a
2 4 a
3 1 b
3 2 b
3 3 b
3 4 a
4 1 b
4 2 b
4 3 a
4 4 a
"""


def bump_grid():
    """16-point toy grid; red (b) forms a bump under a downward parabola."""
    pairs = []
    for line in BUMP_POINTS.split("\n"):
        if line.strip():
            x, y, lab = line.split()
            pairs.append(((float(x), float(y)), "red" if lab == "b" else "blue"))
    return dataset_from_pairs(["x", "y"], pairs)


@pytest.fixture
def bump():
    return bump_grid()


def thermostat_pairs():
    """Battery-powered temperature control with a permissive band around the set point."""
    pairs = []
    for b in np.round(np.arange(0.05, 1.0001, 0.05), 2):
        for t in np.arange(17.0, 23.01, 0.5):
            if b <= 0.15:
                acts = ["Off"]
            elif t <= 19:
                acts = ["Heating"]
            elif t <= 20:
                acts = ["Off", "Heating"]
            elif t <= 21:
                acts = ["Off", "AC"]
            else:
                acts = ["AC"]
            pairs.extend(((float(b), float(t)), a) for a in acts)
    return pairs


@pytest.fixture
def thermostat():
    return dataset_from_pairs(["battery", "temp"], thermostat_pairs())


def random_separable(rng, n, d):
    X = rng.normal(size=(n, d)) * rng.uniform(0.5, 5.0, size=d) + rng.normal(size=d)
    w = rng.normal(size=d)
    s = X @ w
    b = np.median(s)
    keep = np.abs(s - b) > 0.05 * np.std(s) + 1e-9
    X, s = X[keep], s[keep]
    y = np.where(s > b, 1.0, -1.0)
    if len(np.unique(y)) < 2:
        y[0] = -y[0]
        X[0] = X[0] + (b - s[0]) * 2 * w / (w @ w)
    return X, y


def build_cruise_poly(ds):
    import time

    from polytree.impurity import ImpurityKind
    from polytree.predicates import Generator
    from polytree.tree import BuildConfig, build_tree

    cfg = BuildConfig(
        impurity=ImpurityKind.MIN_LABEL_ENTROPY,
        priorities={Generator.AXIS: 1.0, Generator.SVM_POLY: 0.1},
    )
    t0 = time.monotonic()
    tree = build_tree(ds, cfg)
    return tree, time.monotonic() - t0


@pytest.fixture(scope="session")
def cruise_poly_tree(cruise_small):
    """(tree, build seconds) for the small cruise instance with quadratic predicates."""
    return build_cruise_poly(cruise_small)


@pytest.fixture(scope="session")
def cruise_dk_tree(cruise_small):
    from polytree.domainkb import DomainKbGenerator, cruise_kb, generate_pool
    from polytree.predicates import Generator
    from polytree.tree import BuildConfig, build_tree

    kb = cruise_kb().with_values({"v_min": -6, "v_max": 8}).without("a_neu")
    entries = generate_pool(kb, 1, False).expressions
    cfg = BuildConfig(priorities={Generator.AXIS: 1.0, Generator.DOMAIN_KB: 1.0}, domain_kb=DomainKbGenerator(kb, entries))
    return build_tree(cruise_small, cfg)


def compile_c(source: bytes, workdir):
    """Compile an exported tree into a shared library and return its ``predict``."""
    import ctypes
    import subprocess

    src = workdir / "tree.c"
    lib = workdir / "tree.so"
    src.write_bytes(source)
    subprocess.run(
        ["cc", "-O2", "-ffp-contract=off", "-shared", "-fPIC", "-o", str(lib), str(src), "-lm"],
        check=True,
        capture_output=True,
    )
    so = ctypes.CDLL(str(lib))
    so.predict.restype = ctypes.c_int
    so.predict.argtypes = [ctypes.POINTER(ctypes.c_double), ctypes.POINTER(ctypes.c_int)]

    def predict(state):
        arr = (ctypes.c_double * len(state))(*state)
        out = (ctypes.c_int * 64)()
        k = so.predict(arr, out)
        return tuple(out[i] for i in range(k))

    return predict


# Acceptance report -------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
