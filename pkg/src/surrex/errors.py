"""Exception hierarchy; the CLI maps each family onto an exit code."""


class SurrexError(Exception):
    exit_code = 1


class DataContractError(SurrexError, ValueError):
    """Inputs violate a declared schema, domain or fingerprint chain."""

    exit_code = 3


class DomainError(DataContractError):
    """A point lies outside its design space."""


class NumericalError(SurrexError, ArithmeticError):
    exit_code = 4


class RankDeficiencyError(NumericalError):
    """Least-squares normal equations are singular for the given design."""


class NotPositiveDefiniteError(NumericalError):
    pass
