"""Shared exception hierarchy.

Every error raised on purpose by this package derives from
:class:`GradeforgeError`, so callers (and the CLI) can separate expected
domain failures from genuine bugs.
"""


class GradeforgeError(Exception):
    """Base class for all errors raised by gradeforge."""
