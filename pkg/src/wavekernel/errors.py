"""Exception hierarchy with process exit codes.

Every failure the command line can hit maps onto one of three nonzero exit
codes: 2 for configuration or file-format problems, 3 for numeric failures
inside a solve, 4 for validation failures such as checksum mismatches or
tolerance breaches. Exit code 0 is success.
"""
from __future__ import annotations


class WavekernelError(Exception):
    exit_code = 1


class ConfigError(WavekernelError):
    """Invalid configuration, bad arguments, or unusable input data."""

    exit_code = 2


class FormatError(ConfigError):
    """Malformed, truncated, or mismatched field file."""


class NumericError(WavekernelError):
    exit_code = 3


class InstabilityError(NumericError):
    """A solve produced a non-finite value."""

    def __init__(self, step: int, node: tuple[int, int, int], message: str | None = None):
        self.step = step
        self.node = node
        super().__init__(
            message or f"non-finite field value at step {step}, node {node}"
        )


class SingularityError(NumericError):
    """Evaluation requested at (or inside the excluded radius of) a source point."""


class DistributionError(NumericError):
    """Pointwise value of a distribution-order kernel was requested."""


class ValidationError(WavekernelError):
    exit_code = 4


class ChecksumError(ValidationError):
    """Stored checksum does not match the file contents."""


class StaleBankError(ValidationError):
    """A bank entry exists but was produced under different inputs."""
