"""Exception and warning types shared across the package."""


class VetoKDError(Exception):
    """Base class for all vetokd errors."""


class InvalidLogits(VetoKDError):
    """Logit vector is malformed: wrong shape, too short, or non-finite."""


class ShapeError(VetoKDError):
    """Two vectors that must share a length do not."""


class InvalidTemperature(VetoKDError):
    """Sharpening temperature outside (0, 1]."""


class InvalidProbability(VetoKDError):
    """Probability outside (0, 1]."""


class InvalidBeta(VetoKDError):
    """Mixing coefficient outside its allowed range."""


class InvalidToken(VetoKDError):
    """Token id outside [0, vocab_size)."""


class StepOutOfRange(VetoKDError):
    """Schedule queried outside 1..total_steps."""


class VetoInvariantViolation(VetoKDError):
    """A veto objective with beta > 0 produced a non-finite loss or gradient."""


class OracleProbeFailure(VetoKDError):
    """A finite-difference probe point evaluated to a non-finite loss."""


class ConfigError(VetoKDError):
    """Experiment config file is missing, malformed, or out of schema."""


class DivergentKL(RuntimeWarning):
    """KL divergence is +inf because q has a hard zero where p has mass."""
