"""Exception hierarchy; every error knows the CLI exit code it maps to"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_PARAMETER = 3
EXIT_DETECTED = 4


class RqimError(Exception):
    """Base class for all toolkit errors"""

    exit_code = EXIT_PARAMETER


class DomainError(RqimError, ValueError):
    """A parameter or input lies outside the domain of an operation"""


class DegenerateSampleError(DomainError):
    """Sample too small or with zero variance for a statistic"""


class CapacityError(RqimError):
    """The message does not fit into the available cover"""


class RangeError(RqimError):
    """HS host values leave [-99, 99] after applying V"""


class NoValleyError(RqimError):
    """No zero-count histogram bin exists to the right of the peak"""


class UnsupportedChannelError(RqimError):
    """Noise bound too large for extraction to be guaranteed"""


class FormatError(RqimError):
    """Malformed file content or mismatched tensor shapes"""

    exit_code = EXIT_FORMAT


class ParseError(FormatError):
    """Malformed key, info or alpha file"""

    def __init__(self, message: str, line: int = None, field: str = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class CorruptionError(FormatError):
    """HS host value can no longer be turned back into digits"""
