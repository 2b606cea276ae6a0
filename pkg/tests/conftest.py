import math

import pytest
from hypothesis import HealthCheck, settings

from sinrcast.geometry import ModelParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brute_receptions(points, senders, params):
    """Reception rule written out with plain loops; `points` maps id -> (x, y)."""
    out = set()
    for u, pu in points.items():
        if u in senders:
            continue
        powers = {v: params.power * math.dist(points[v], pu) ** (-params.alpha) for v in senders}
        total = math.fsum(powers.values())
        for v, pw in powers.items():
            sinr = pw / (params.noise + (total - pw))
            if sinr >= params.beta and pw >= (1 + params.epsilon) * params.beta * params.noise:
                out.add((u, v))
    return out


@pytest.fixture
def params():
    return ModelParams()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
