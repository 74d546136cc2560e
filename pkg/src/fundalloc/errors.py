"""Exception hierarchy.

Every error carries a stable ``code`` string (printed by the CLI on stderr)
and maps to a process exit status through ``exit_code``.
"""


class FundAllocError(Exception):
    exit_code = 1

    def __init__(self, code, message=""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)


class ConfigError(FundAllocError, ValueError):
    """Bad arguments, shapes or configuration (exit 2)."""

    exit_code = 2


class DataFormatError(FundAllocError):
    """Malformed or schema-violating input files (exit 3)."""

    exit_code = 3

    def __init__(self, code, message="", path=None, line=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        self.path = path
        self.line = line
        self.column = column
        super().__init__(code, message)


class InfeasibleError(FundAllocError):
    """No assignment satisfies the constraints (exit 4).

    ``partial`` holds the assignment built so far when a greedy solver stalls.
    """

    exit_code = 4

    def __init__(self, code, message="", partial=None):
        self.partial = partial
        super().__init__(code, message)


class DivergedError(FundAllocError, ArithmeticError):
    exit_code = 5
