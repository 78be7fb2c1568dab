"""Exception types shared across modules, mapped to CLI exit codes."""


class ConfigError(Exception):
    """Bad or inconsistent run configuration (CLI exit code 2)."""


class DataError(Exception):
    """Invalid input data: missing files/columns, schema violations (exit code 3)."""


class DuplicateIdError(DataError):
    """A record_id appears more than once within one file."""
