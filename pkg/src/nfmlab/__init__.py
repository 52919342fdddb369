"""nfmlab: flow-map fluid simulation lab with a sparse neural velocity buffer."""

import os

# Thread knob must land before the first kernel launch.  The rest of the code
# is deterministic for any thread count, so this only affects speed.
if "NFMLAB_THREADS" in os.environ:
    import numba

    _raw = os.environ["NFMLAB_THREADS"]
    try:
        numba.set_num_threads(max(1, int(_raw)))
    except ValueError:
        raise RuntimeError(
            f"NFMLAB_THREADS must be an integer, got {_raw!r}") from None
    del _raw

from .field_core import CellField, GridDims, MacField  # noqa: E402,F401

__version__ = "0.1.0"
