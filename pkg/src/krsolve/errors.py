"""Exception hierarchy; the CLI maps these onto exit codes."""


class KRSolveError(Exception):
    exit_code = 3


class ConfigError(KRSolveError, ValueError):
    exit_code = 2


class NumericalError(KRSolveError, ArithmeticError):
    pass


class PositivityError(NumericalError):
    pass


class CohomologyError(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class VerificationFailure(KRSolveError):
    exit_code = 4
