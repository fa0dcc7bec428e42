import numpy as np
import pytest

from matgraph.core import MaterialGraph, make_node, registry_builtin
from matgraph.engine import ImageBuffer, RenderSettings


@pytest.fixture(scope="session")
def registry():
    return registry_builtin()


@pytest.fixture
def s64():
    return RenderSettings(64, 0)


def chain(*specs, outputs=None):
    """Build a graph from (name, type, params, inputs) tuples in order."""
    nodes = []
    for spec in specs:
        name, type_name, params, inputs = (tuple(spec) + (None, None))[:4]
        nodes.append(make_node(name, type_name, params, inputs, MaterialGraph(tuple(nodes))))
    return MaterialGraph(tuple(nodes), outputs or {})


def diamond():
    return chain(
        ("g", "checker", {"tiles": 4}),
        ("a", "invert", None, {"input": "g.output"}),
        ("b", "blur_box", None, {"input": "g.output"}),
        ("m", "blend", {"mode": "multiply"}, {"foreground": "a.output", "background": "b.output"}),
        outputs={"height": ("m", "output")},
    )


def const(value, size=16):
    value = np.atleast_1d(np.asarray(value, dtype=np.float32))
    return ImageBuffer(np.broadcast_to(value, (size, size, value.size)).copy())


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """Record and print one ``criterion N: PASS|FAIL detail`` line."""
    def record(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        _CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
