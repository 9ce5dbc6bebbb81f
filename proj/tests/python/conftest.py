import pathlib
import sys

# fall back to the in-tree extension when the package is not installed
_tree = pathlib.Path(__file__).resolve().parents[2] / "python"
try:
    import mvtlab  # noqa: F401
except ImportError:
    sys.path.insert(0, str(_tree))
