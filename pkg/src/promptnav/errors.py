"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not conform to an op's shape rules."""


class ContractError(RuntimeError):
    """A documented precondition or invariant was violated by the caller."""


class FrozenViolation(RuntimeError):
    """A frozen parameter was handed to an optimizer or would be updated."""


class ConfigError(ValueError):
    """Bad run configuration (unknown key, unparsable value, bad flag)."""


class DependencyError(RuntimeError):
    """A pipeline stage is missing a required upstream artifact."""


class StalenessError(DependencyError):
    """An upstream artifact was built under a different config hash."""
