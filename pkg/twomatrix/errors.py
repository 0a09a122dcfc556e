"""Exception hierarchy. Every class knows the exit code the CLI maps it to."""


class TwoMatrixError(Exception):
    exit_code = 1


class ConfigError(TwoMatrixError):
    """Malformed model file, bad potential, unreadable path."""

    exit_code = 1


class AnchorError(ConfigError, ValueError):
    """Pole anchors that collide or do not match between operands."""


class SolverError(TwoMatrixError):
    """Newton divergence, root collision or a singular linear system."""

    exit_code = 2


class VerificationError(TwoMatrixError):
    """An identity that must hold came out above its threshold."""

    exit_code = 3

    def __init__(self, name, residual, threshold):
        self.name = name
        self.residual = float(residual)
        self.threshold = float(threshold)
        super().__init__(f"{name}: residual {self.residual:.3e} exceeds {self.threshold:.3e}")
