"""Exception hierarchy shared by all modules."""


class AlloyLabError(Exception):
    """Base class for errors raised by alloylab."""


class SingularTransform(AlloyLabError):
    pass


class NotAdmissible(AlloyLabError):
    pass


class IndexMismatch(AlloyLabError, ValueError):
    pass


class NotDifferentiable(AlloyLabError):
    """The density has no weak derivative in L^1 (jumps in f)."""


class QuadratureFailure(AlloyLabError):
    pass


class SizeOverflow(AlloyLabError):
    pass


class ConvergenceFailure(AlloyLabError):
    pass


class InsufficientData(AlloyLabError):
    pass


class EnergyResonant(AlloyLabError):
    """Energy too close to an eigenvalue for a meaningful resolvent."""


class PreconditionError(AlloyLabError, ValueError):
    pass


class ConfigError(AlloyLabError, ValueError):
    pass
