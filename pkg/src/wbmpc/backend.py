"""Kernel backend selection.

The compiled extension `wbmpc._core` is preferred when it was built; the
pure-Python module `wbmpc._core_py` provides the same functions otherwise.
`wbmpc bench kernels` compares the two on identical workloads.
"""

try:
    from wbmpc import _core as core

    COMPILED = True
except ImportError:  # extension not built: pure-Python fallback
    from wbmpc import _core_py as core

    COMPILED = False


def name() -> str:
    return "compiled" if COMPILED else "pure"


def pure_backend():
    """The pure-Python kernels (always importable)."""
    from wbmpc import _core_py

    return _core_py


def compiled_backend():
    """The compiled kernels, or None when the extension is absent."""
    try:
        from wbmpc import _core

        return _core
    except ImportError:
        return None
