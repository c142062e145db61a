"""Root of the manyiv exception hierarchy.

Concrete errors live next to the code that raises them; everything a caller
is expected to handle derives from ManyIVError.
"""


class ManyIVError(Exception):
    """Base class for all errors raised by manyiv."""
