"""
mmflow common definitions

Errors raised by the scheme and the predicates used to decide whether an
operation should be re-attempted.
"""


class MMFlowError(Exception):
    """Base error for the flow library.
    exit_code is what the command line tool returns when this error escapes."""
    exit_code = 2

    def __init__(self, message, exit_code=None):
        Exception.__init__(self)
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self):
        return self.message


class ConfigError(MMFlowError):
    """Invalid run configuration.
    errors holds one message per offending key, each naming section.key"""
    exit_code = 3

    def __init__(self, errors):
        if not isinstance(errors, (list, tuple)):
            errors = [errors]
        self.errors = list(errors)
        MMFlowError.__init__(self, "invalid configuration: " + "; ".join(self.errors))


class SchemeError(MMFlowError):
    """Error raised while stepping the scheme, tagged with step index and level when known."""
    exit_code = 4

    def __init__(self, message, step=None, level=None):
        self.step = step
        self.level = level
        where = []
        if step is not None:
            where.append("step %d" % step)
        if level is not None:
            where.append("level %s" % level)
        if where:
            message = "%s (%s)" % (message, ", ".join(where))
        MMFlowError.__init__(self, message)


class MarginBreach(SchemeError):
    """A bounded phase reached the margin band: the domain is too small for this step."""
    exit_code = 5


class NestingViolation(SchemeError):
    """Evolved superlevel sets lost their nesting."""
    exit_code = 6


class InfeasibleConstraints(SchemeError):
    """A cell is forced both inside and outside."""
    exit_code = 7


class DegenerateSetError(MMFlowError):
    """Empty or full set where a proper subset is required."""


class GridTooLarge(MMFlowError):
    """Grid exceeds the size guard of a brute-force routine."""


class CFLViolation(MMFlowError):
    """Explicit time step exceeds the stability bound. Operation can be retried with a smaller step."""
    exit_code = 8


def cfl_violation(exception):
    """Return True if we should retry (in this case when it's a CFLViolation), False otherwise"""
    return isinstance(exception, CFLViolation)
