"""Extract-then-select reading comprehension over multiple passages."""

__version__ = "0.1.0"
