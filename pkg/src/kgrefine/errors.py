"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 1 = usage/config error, 2 = data error,
3 = numeric error.
"""


class KGRefineError(Exception):
    exit_code = 2


class ConfigError(KGRefineError):
    """Invalid configuration value (fractions, unknown mode names, ...)."""

    exit_code = 1


class ParseError(KGRefineError):
    """Malformed input file; message carries path and line number."""


class UnknownReferenceError(KGRefineError):
    """An input refers to an entity/relation/label that is not defined."""


class OntologyError(KGRefineError):
    """Inconsistent ontology (e.g. a cycle in the subclass hierarchy)."""


class DataError(KGRefineError):
    """A data-level contract violation (missing truth label, empty eval set, ...)."""


class NumericError(KGRefineError):
    """Non-finite value encountered during optimization."""

    exit_code = 3
