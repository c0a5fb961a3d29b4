"""Python bindings for the natex analysis engine."""

from ._core import Dataset, NatexError, Session, __version__, embed, ols
from ._core import load_csv as _load_csv

__all__ = ["Dataset", "NatexError", "Session", "__version__", "embed", "load_csv", "ols"]


def load_csv(path_or_text, outcomes=(), treatments=(), exclude_columns=(), kinds=None, name=None):
    """Load a CSV file (or CSV text containing a newline) with analysis roles."""
    text = path_or_text
    if "\n" not in str(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
        name = name or str(path_or_text)
    return _load_csv(text, list(outcomes), list(treatments), list(exclude_columns), dict(kinds or {}), name or "")
