"""Shared fixtures: benchmark simulators, targets, and external-stub scripts."""

import stat
import textwrap

import pytest

from tsinverse import Benchmark1, Benchmark2, Benchmark3, make_target

# stdin/stdout protocol implementation of Benchmark1 using only the stdlib,
# so external-wrapper tests have an independent reference process
TEST1_STUB = """
import math
import sys

x = [float(tok) for tok in sys.stdin.readline().split()]
out = []
for i in range(101):
    t = 0.5 + 0.02 * i
    out.append(math.sin(10.0 * math.pi * t) / (2.0 * t) + abs(t - 1.0) ** (2.0 + 4.0 * x[0]))
print(" ".join(repr(v) for v in out))
"""


def write_stub(directory, body, name="stub.py"):
    path = directory / name
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    path.chmod(
        path.stat().st_mode
        | stat.S_IXUSR
        | stat.S_IRGRP
        | stat.S_IXGRP
        | stat.S_IROTH
        | stat.S_IXOTH
    )
    return str(path)


@pytest.fixture(scope="session")
def sim1():
    return Benchmark1()


@pytest.fixture(scope="session")
def sim2():
    return Benchmark2()


@pytest.fixture(scope="session")
def sim3():
    return Benchmark3()


@pytest.fixture(scope="session")
def target1(sim1):
    return make_target(sim1, [0.5])


@pytest.fixture(scope="session")
def target2(sim2):
    return make_target(sim2, [0.5, 0.5])


@pytest.fixture(scope="session")
def target3(sim3):
    return make_target(sim3, [0.5, 0.5, 0.5])


@pytest.fixture
def stub_factory(tmp_path):
    """Write an executable script under tmp_path and return its path."""

    def make(body, name="stub.py"):
        return write_stub(tmp_path, body, name)

    return make


@pytest.fixture
def test1_stub(stub_factory):
    return stub_factory(TEST1_STUB)
