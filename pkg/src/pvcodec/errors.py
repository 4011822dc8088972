"""Exception hierarchy shared by all pvcodec modules.

The CLI maps these onto distinct exit codes (I/O 2, format 3, config 4,
model 5); library users can catch :class:`PvcError` to get everything.
"""


class PvcError(Exception):
    """Base class for all pvcodec errors."""


class ParseError(PvcError):
    """Malformed input file (PLY/XYZ); message names the line or byte offset."""


class FormatError(PvcError):
    """Violation of a pvcodec binary format (PVC bitstream, PVW weights, PVS dumps)."""


class ConfigError(PvcError):
    """Invalid parameter combination (bad depth, precision, K, mode...)."""


class ModelError(PvcError):
    """Entropy-model problem: missing/ill-shaped weights, hash mismatch, wrong model id."""
