import os
from pathlib import Path

import dopcc


def pytest_report_header(config):
    return f"dopcc module: {Path(dopcc._core.__file__).parent}"


def pytest_configure(config):
    # An installed package can shadow the build tree; results would then come from other binaries.
    expected = os.environ.get("DOPCC_EXPECT_DIR")
    if expected and Path(dopcc._core.__file__).parent.resolve() != Path(expected).resolve():
        raise RuntimeError(f"imported {dopcc._core.__file__}, expected the module in {expected}")
