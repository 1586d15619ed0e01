"""Exception types shared across fuserank modules."""


class FuserankError(Exception):
    """Base class for all fuserank errors."""


class DataError(FuserankError):
    """Malformed input data, bad configuration, or unresolvable references.

    Maps to exit code 1 in the CLI.
    """


class NumericalError(FuserankError):
    """Non-finite values or failed numerical checks during training.

    Maps to exit code 2 in the CLI.
    """
