"""Shared exception base classes.

Concrete errors live next to the code that raises them; everything inherits
from GostudyError so callers (the CLI in particular) can distinguish expected
failures from bugs.
"""


class GostudyError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GostudyError):
    """A configuration file is missing, unreadable or structurally invalid."""
