"""Exception hierarchy shared by every stage of the pipeline."""


class CftvError(Exception):
    """Base class. The CLI maps subclasses onto exit codes."""


class InputError(CftvError):
    """Malformed or inconsistent user input (exit code 2)."""


class SchemaError(InputError):
    pass


class DanglingReference(InputError):
    pass


class DuplicateId(InputError):
    pass


class UnknownTop(InputError):
    pass


class UnknownComponent(InputError):
    pass


class UnsupportedGate(InputError):
    pass


class PropagationCycle(InputError):
    pass


class MissingRate(InputError):
    pass


class EmptyScope(InputError):
    pass


class MissingBinding(InputError):
    pass


class UnknownTemplate(InputError):
    pass


class UnboundPlaceholder(InputError):
    pass


class ExprSyntaxError(InputError):
    pass


class ExprTypeError(InputError):
    pass


class UnknownSignalInQuery(InputError):
    pass


class UnknownEntityType(InputError):
    pass


class BadParameter(InputError):
    pass


class UnboundPort(InputError):
    pass


class UnknownInjectable(CftvError):
    pass


class UnknownSignal(CftvError):
    pass


class TypeMismatch(CftvError):
    pass


class ActionError(CftvError):
    """A BTM action could not be applied; the test case ends in InjectionError."""


class EntityFault(CftvError):
    """An entity callback failed. ``trace`` holds everything recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
