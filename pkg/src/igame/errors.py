"""Exception hierarchy shared by all igame modules."""


class IGameError(Exception):
    """Base class for pipeline errors (CLI exit code 1)."""


class DimensionMismatch(IGameError, ValueError):
    pass


class NonFiniteState(IGameError):
    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class InsufficientData(IGameError):
    pass


class DegenerateRegression(IGameError):
    pass


class MissingInput(IGameError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SingularCoupling(IGameError):
    def __init__(self, msg, node):
        super().__init__(msg)
        self.node = node


class EmptyCandidateSet(IGameError):
    pass


class EmptyCodebook(IGameError):
    pass


class LengthMismatch(IGameError):
    pass


class MixedRepresentation(IGameError):
    pass


class NonHermitianSpec(IGameError):
    pass


class BadConfig(Exception):
    """Configuration or input-parsing failure (CLI exit code 2)."""

    def __init__(self, msg, row=None):
        super().__init__(msg)
        self.row = row
