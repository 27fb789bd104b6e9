import os
import sys

import pytest

# The ctest harness points TSCAM_MODULE_DIR at the build tree holding the
# compiled extension; an installed wheel works without it.
module_dir = os.environ.get("TSCAM_MODULE_DIR")
if module_dir:
    sys.path.insert(0, module_dir)


@pytest.fixture(scope="session")
def core():
    try:
        import _core  # build tree
        return _core
    except ImportError:
        from tscam import _core  # installed package
        return _core
