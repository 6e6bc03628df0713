import math

import numpy as np
import pytest

from sglab.grid import ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def p5():
    return ModelParams.from_beta2_pi(5.0, eps=2.0 ** -3)


def smooth_field(n, seed=0, modes=3):
    r = np.random.default_rng(seed)
    x = np.arange(n) / n
    out = np.zeros((n, n))
    for k1 in range(-modes, modes + 1):
        for k2 in range(-modes, modes + 1):
            out += r.normal() * np.cos(2 * math.pi * (k1 * x[:, None] + k2 * x[None, :]) + r.uniform(0, 6.28))
    return out


@pytest.fixture
def accept(record_property):
    """Record one acceptance line: accept(criterion, label, passed, detail)."""
    def rec(criterion, label, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {label}" + (f" ({detail})" if detail else "")
        record_property("acceptance", line)
        print(line, flush=True)
        return passed
    return rec


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", "call") != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
