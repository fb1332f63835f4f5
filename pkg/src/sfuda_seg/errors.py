"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI: ConfigError -> 2, MissingArtifact -> 3,
ContractViolation -> 4.
"""


class ContractViolation(ValueError):
    """A documented pre/postcondition or type invariant was violated."""


class UnsupportedConfiguration(ContractViolation):
    """Requested behaviour exists only for a different configuration (e.g. K != 2)."""


class ConfigError(ValueError):
    """Malformed config file or unknown override key."""


class MissingArtifact(FileNotFoundError):
    """A checkpoint, manifest or other required file is absent."""
