# app/services/errors.py
from __future__ import annotations


class NaesatError(Exception):
    pass


# ====== Ошибки ввода (exit 2) ======

class InputError(NaesatError, ValueError):
    pass

class SizeGuardError(InputError):
    pass

class DomainError(InputError):
    pass

class InvalidConfigurationError(InputError):
    pass

class NotASolutionError(InputError):
    pass

class InstanceFormatError(InputError):
    pass

class HeaderError(InstanceFormatError):
    pass

class DegreeMismatchError(InstanceFormatError):
    pass

class ArityError(InstanceFormatError):
    pass

class VariableIndexError(InstanceFormatError):
    pass


# ====== Численные ошибки (exit 3) ======

class NumericError(NaesatError, ArithmeticError):
    pass

class NonConvergenceError(NumericError):
    pass

class BracketError(NumericError):
    pass

class ConsistencyError(NumericError):
    pass


# ====== Прочее ======

class SolverBudgetError(NaesatError):
    """Исчерпан бюджет узлов DPLL."""
