import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLES = Path(__file__).parent / "oracles" / "derived.json"


@pytest.fixture(scope="session")
def oracles():
    return json.loads(ORACLES.read_text())


# acceptance criteria: {criterion: {part: (ok, detail)}}
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def report():
    def record(criterion: int, ok: bool, detail: str, part: str = ""):
        ACCEPTANCE.setdefault(criterion, {})[part] = (bool(ok), detail)
        tag = f"criterion {criterion}" + (f" [{part}]" if part else "")
        print(f"{'PASS' if ok else 'FAIL'} {tag}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(v[0] for v in parts.values())
        if list(parts) == [""]:
            detail = parts[""][1]
        else:
            bad = [p for p, v in parts.items() if not v[0]]
            detail = f"{len(parts) - len(bad)}/{len(parts)} parts pass"
            if bad:
                detail += "; failing: " + ", ".join(bad)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {detail}")
        if list(parts) != [""]:
            for p, (pok, pdetail) in parts.items():
                terminalreporter.write_line(f"    {'PASS' if pok else 'FAIL'} [{p}]: {pdetail}")
