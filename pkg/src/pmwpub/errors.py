"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
BudgetExceededError -> 3.
"""


class PmwPubError(Exception):
    """Base class for all package errors."""


class ConfigError(PmwPubError):
    """Invalid run configuration or experiment config file."""


class DataError(PmwPubError):
    """Invalid dataset, schema, or query input."""


class SchemaMismatchError(DataError):
    """Two objects that must share a schema do not."""


class UnknownCategoryError(DataError):
    """A raw CSV cell holds a value outside the attribute's vocabulary."""

    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: unknown category {value!r}")


class BinRangeError(DataError):
    """A raw numeric cell falls outside every bin of its attribute."""

    def __init__(self, row: int, column: str, value: float):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: value {value} outside all bins")


class MissingColumnError(DataError):
    """A schema attribute has no matching CSV column."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"missing column {column!r}")


class InfeasibleDomainError(ConfigError):
    """The full data domain is too large to enumerate."""


class BudgetExceededError(PmwPubError):
    """A privacy charge would push the ledger past its capacity."""
