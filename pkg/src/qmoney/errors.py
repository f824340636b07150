"""Exception hierarchy shared by all modules."""


class QMoneyError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(QMoneyError, ValueError):
    """An argument is out of range or has the wrong shape."""


class IssuanceCapError(QMoneyError):
    """The bank was asked to mint more coins than its polynomial cap allows.

    Issuing too many copies of the coin state would let a counterfeiter
    reconstruct it by tomography.
    """


class UndefinedLabelError(QMoneyError):
    """A label register carries amplitude on a label outside the group image."""


class BudgetViolationError(QMoneyError):
    """The bank exceeded its per-qubit X/Z correction budget."""


class ChannelFailure(QMoneyError):
    """Injected failure on the in-memory protocol channel."""
