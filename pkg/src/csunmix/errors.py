"""Exception types shared across the package.

Argument and data problems raise plain ``ValueError`` (or the
``CapabilityError`` subclass when a size limit is the cause); numerical
failures that occur on structurally valid input raise ``NumericError``.
The CLI maps the former to exit code 2 and the latter to exit code 3.
"""


class CapabilityError(ValueError):
    """A requested problem size exceeds a documented implementation limit."""


class NumericError(RuntimeError):
    """A numerical routine failed on input that passed validation."""
