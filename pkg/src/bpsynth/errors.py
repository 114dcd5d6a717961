"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class BpsError(Exception):
    exit_code = 1


class ConfigError(BpsError, ValueError):
    exit_code = 2


class DataError(BpsError, ValueError):
    exit_code = 3


class NumericalError(BpsError, ArithmeticError):
    exit_code = 4
