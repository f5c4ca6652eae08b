"""Exception hierarchy. Each class maps to a distinct CLI exit code."""


class DohFedError(Exception):
    exit_code = 1


class ConfigError(DohFedError, ValueError):
    exit_code = 3


class SchemaError(DohFedError, ValueError):
    exit_code = 4


class DataError(DohFedError, ValueError):
    exit_code = 5


class EmptyFileError(DataError):
    pass


class ModelError(DohFedError, ValueError):
    exit_code = 6
