import io

import pytest
from PIL import Image


@pytest.fixture
def make_png():
    def _make(color=(128, 64, 32), size=(6, 6), fmt="PNG"):
        img = Image.new("RGB", size, color)
        buf = io.BytesIO()
        img.save(buf, format=fmt)
        return buf.getvalue()

    return _make
