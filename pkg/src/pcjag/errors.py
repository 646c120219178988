"""Exception hierarchy shared by all pcjag modules.

Every error carries a ``contract`` name so the CLI can report which
contract was violated and exit nonzero.
"""


class PcjagError(Exception):
    contract = "pcjag"


class ParseError(PcjagError):
    contract = "ply-format"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TruncatedError(PcjagError):
    contract = "ply-element-count"


class UnsupportedError(PcjagError):
    contract = "ply-supported-format"


class PreconditionError(PcjagError):
    contract = "precondition"


class IoError(PcjagError):
    contract = "io"


class DegenerateError(PcjagError):
    contract = "non-degenerate"


class ShapeError(PcjagError):
    contract = "shape"


class DomainError(PcjagError):
    contract = "domain"


class NumericsError(PcjagError):
    contract = "finite-features"


class ConfigError(PcjagError):
    contract = "config"


class FrameError(PcjagError):
    contract = "voxel-frame"


class DecodeError(PcjagError):
    contract = "decode"


class FormatError(PcjagError):
    contract = "bitstream-format"


class ContractError(PcjagError):
    contract = "rd-loss-input"


class MetricError(PcjagError):
    contract = "metric-input"


class EquivalenceError(PcjagError):
    contract = "recolor-equivalence"
