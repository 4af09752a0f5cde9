import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("jones", deadline=None, max_examples=40)
settings.load_profile("jones")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record(request):
    """Log an acceptance sub-result ``(criterion, label, ok, detail)``."""
    log = request.config.stash[_ACCEPTANCE]

    def _record(criterion: int, label: str, ok: bool, detail: str) -> bool:
        log.append((criterion, label, bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, [])
    if not log:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted({c for c, *_ in log}):
        subs = [s for s in log if s[0] == crit]
        ok = all(s[2] for s in subs)
        tr.write_line(f"CRITERION {crit}: {'PASS' if ok else 'FAIL'}")
        for _, label, sub_ok, detail in subs:
            tr.write_line(f"    [{'PASS' if sub_ok else 'FAIL'}] {label}: {detail}")
