import numpy as np
import pytest

from wakeforge.wake import make_scenario


def random_farm(rng, n=None, spacing=3.0, d0=80.0, yaw=True):
    """Dart-thrown farm with every pair at least ``spacing * d0`` apart."""
    n = n or int(rng.integers(2, 15))
    pts = []
    radius = 1.5 * spacing * d0 * np.sqrt(n)
    while len(pts) < n:
        p = rng.uniform(-radius, radius, 2)
        if all(np.hypot(*(p - q)) >= spacing * d0 for q in pts):
            pts.append(p)
    g = rng.uniform(-30, 30, n) if yaw else np.zeros(n)
    return make_scenario(np.array(pts), g, wind_speed=rng.uniform(5, 20),
                         wind_direction=rng.uniform(0, 360), ti=rng.uniform(0.05, 0.15))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with its recorded detail."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion_" not in getattr(rep, "nodeid", "") or rep.when != "call" \
                    and outcome == "passed":
                continue
            name = rep.nodeid.split("::")[-1].replace("test_criterion_", "")
            detail = dict(rep.user_properties).get("detail", "")
            lines.append((name, "PASS" if outcome == "passed" else "FAIL", detail))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in sorted(lines):
        terminalreporter.write_line(f"{verdict}  {name:<32} {detail}")
