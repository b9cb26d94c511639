"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PlannerError(Exception):
    exit_code = 1


class ConfigError(PlannerError):
    """Unparseable input or a configuration that violates a contract."""

    exit_code = 2


class TopologyError(ConfigError):
    """Tile indices outside the described cluster."""


class InvalidFactorization(ConfigError):
    """TP/PP/DP degrees incompatible with the model shape."""

    exit_code = 4


class OutOfMemory(PlannerError):
    """Per-tile memory exceeds the usable HBM capacity."""

    exit_code = 3

    def __init__(self, message, breakdown=None):
        super().__init__(message)
        self.breakdown = breakdown


class CalibrationFailed(PlannerError):
    exit_code = 5

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
