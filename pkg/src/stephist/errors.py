"""Exception types raised across the package."""


class StepHistError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(StepHistError, ValueError):
    """An argument violates a documented precondition."""


class DivisibilityError(InvalidArgumentError):
    """Equivalent blocks requested for a K that does not divide n."""


class TooLargeError(InvalidArgumentError):
    """An exhaustive computation would exceed its size guard."""


class InfeasibleError(StepHistError):
    """The requested object exists in principle but not for these inputs."""


class NoBalancedPartitionError(InfeasibleError):
    pass


class OffGridError(InfeasibleError):
    pass


class NoModelError(InfeasibleError):
    pass
