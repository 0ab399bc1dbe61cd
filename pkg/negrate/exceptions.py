class NegrateError(Exception):
    """Base class of every error raised by negrate."""


class DomainError(NegrateError, ValueError):
    """Raised when inputs violate the pre-conditions of an operation, e.g. a
    non-positive spot or a regime the method is not defined for."""

    def __init__(self, field, message):
        super(DomainError, self).__init__(field, message)
        self.field = field
        self.message = message

    def __str__(self):
        return "DomainError[%s: %s]" % (self.field, self.message)


class ConfigurationError(NegrateError, ValueError):
    """Raised for invalid settings or method/solver combinations."""

    def __init__(self, key, message):
        super(ConfigurationError, self).__init__(key, message)
        self.key = key
        self.message = message

    def __str__(self):
        return "ConfigurationError[%s: %s]" % (self.key, self.message)


class NonConvergence(NegrateError):
    """An iterative method ran out of iterations.

    ``last_iterates`` holds the final iterates (root solvers) or the best
    iterate found (Gauss-Newton) so the caller can decide on a fallback.
    """

    def __init__(self, method, iterations, last_iterates):
        super(NonConvergence, self).__init__(method, iterations)
        self.method = method
        self.iterations = iterations
        self.last_iterates = last_iterates

    def __str__(self):
        return "NonConvergence[%s: no convergence after %s iterations]" % (
            self.method,
            self.iterations,
        )


class BreakdownError(NegrateError):
    """A fixed-point update produced a non-positive or non-finite value."""

    def __init__(self, method, knot):
        super(BreakdownError, self).__init__(method, knot)
        self.method = method
        self.knot = knot

    def __str__(self):
        return "BreakdownError[%s: invalid update at knot %s]" % (self.method, self.knot)
