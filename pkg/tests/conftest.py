import numpy as np
import pytest

from lsgdlcd.core import GrayImage

CRITERIA: dict[str, tuple[bool, str]] = {}


def record(name: str, ok: bool, detail: str = "") -> None:
    """Register an acceptance outcome for the end-of-run summary, then assert it."""
    CRITERIA[name] = (bool(ok), detail)
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda n: int(n.split()[0].rstrip("."))):
        ok, detail = CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def random_image(rng, width, height) -> GrayImage:
    return GrayImage(rng.integers(0, 256, (height, width), dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def acceptance_record():
    return record
