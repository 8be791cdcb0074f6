from types import SimpleNamespace

import pytest

from degnerf.scene_io import load_scene
from degnerf.toy import ToyConfig, write_toy

_VERDICTS = pytest.StashKey[dict]()
N_CRITERIA = 10


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def verdict(request):
    """Record (criterion, ok, detail) for the end-of-run acceptance table."""
    store = request.config.stash[_VERDICTS]

    def record(n, ok, detail):
        store[n] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash[_VERDICTS]
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in store:
            ok, detail = store[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")


@pytest.fixture(scope="session")
def toy_scene(tmp_path_factory):
    """The default procedural scene: 16 training and 4 test views at 128x128."""
    out = tmp_path_factory.mktemp("toy")
    train_m, test_m = write_toy(out, ToyConfig())
    return SimpleNamespace(train_path=train_m, test_path=test_m,
                           train=load_scene(train_m), test=load_scene(test_m))
