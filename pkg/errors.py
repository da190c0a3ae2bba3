#!/usr/bin/env python3
"""
Exception hierarchy for the LCEN toolkit
Every error carries the process exit code the command line reports for it
"""


class LcenError(Exception):
    """Base class for all toolkit errors"""
    exit_code = 1


class ConfigurationError(LcenError, ValueError):
    """Invalid hyperparameters, config files or command options"""
    exit_code = 1


class DataError(LcenError, ValueError):
    """Input data that cannot be used (ragged CSV, missing column, non-finite values)"""
    exit_code = 2


class DomainViolationError(DataError):
    """A transform was evaluated outside its domain (e.g. log of a non-positive value)"""


class DimensionMismatchError(DataError):
    """Arrays whose shapes do not line up"""


class NumericalError(LcenError, ArithmeticError):
    """A numerical procedure failed"""
    exit_code = 3


class CVSearchError(NumericalError):
    """Every hyperparameter combination of a cross-validation search failed"""
