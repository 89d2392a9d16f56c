import io
import sys

import pytest
from PIL import Image

ACCEPTANCE_FILE = "test_acceptance.py"


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion, capture or not.
    if ACCEPTANCE_FILE in report.nodeid and report.when == "call":
        verdict = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        sys.stderr.write(f"[ACCEPTANCE] {verdict}: {name}\n")


@pytest.fixture
def make_png():
    def _make(color=(128, 64, 32), size=(6, 6), fmt="PNG"):
        img = Image.new("RGB", size, color)
        buf = io.BytesIO()
        img.save(buf, format=fmt)
        return buf.getvalue()

    return _make
